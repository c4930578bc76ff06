//! Chat-format SFT samples for the solve, test and debug tasks.

use serde::{Deserialize, Serialize};

use crate::agents::{prompts, PromptError, PromptSet};
use crate::gateway::ChatMessage;
use crate::harness::embed_in_fence;
use crate::text::whitespace_tokens;

use super::{CurriculumKind, DatasetRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Solve,
    Test,
    Debug,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "solve" => Ok(Self::Solve),
            "test" => Ok(Self::Test),
            "debug" => Ok(Self::Debug),
            other => Err(format!("unknown task `{other}` (expected solve, test or debug)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftTarget {
    pub reasoning: String,
    pub answer: String,
}

/// One line of `sft.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub task: Task,
    pub messages: Vec<ChatMessage>,
    pub target: SftTarget,
}

impl SftSample {
    /// Whitespace-token length of the whole rendered sample.
    pub fn token_len(&self) -> u64 {
        self.messages.iter().map(|m| whitespace_tokens(&m.content)).sum::<u64>()
            + whitespace_tokens(&self.target.reasoning)
            + whitespace_tokens(&self.target.answer)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExportStats {
    pub solve: usize,
    pub test: usize,
    pub debug: usize,
    /// Samples over the sequence cap.
    pub skipped: usize,
}

impl ExportStats {
    fn bump(&mut self, task: Task) {
        match task {
            Task::Solve => self.solve += 1,
            Task::Test => self.test += 1,
            Task::Debug => self.debug += 1,
        }
    }
}

/// Render the samples of every record whose task is in `tasks` (all tasks
/// when empty). Samples longer than `seq_cap` whitespace tokens are skipped
/// and counted.
pub fn export_sft(
    records: &[DatasetRecord],
    tasks: &[Task],
    seq_cap: u64,
    prompts: &PromptSet,
    mut sink: impl FnMut(&SftSample) -> std::io::Result<()>,
) -> Result<ExportStats, ExportError> {
    if seq_cap == 0 {
        return Err(ExportError::InvalidCap);
    }
    let wanted = |t: Task| tasks.is_empty() || tasks.contains(&t);
    let mut stats = ExportStats::default();
    for record in records {
        for sample in samples_of(record, prompts)? {
            if !wanted(sample.task) {
                continue;
            }
            if sample.token_len() > seq_cap {
                stats.skipped += 1;
                continue;
            }
            sink(&sample)?;
            stats.bump(sample.task);
        }
    }
    Ok(stats)
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("sequence cap must be positive")]
    InvalidCap,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All samples a record yields, before filtering.
pub fn samples_of(record: &DatasetRecord, prompts: &PromptSet) -> Result<Vec<SftSample>, PromptError> {
    match record {
        DatasetRecord::Tuple(t) => Ok(vec![SftSample {
            task: Task::Solve,
            messages: prompts.render(prompts::SOLVE, &[("problem", &t.problem.statement)])?,
            target: SftTarget {
                reasoning: t.reasoning.clone(),
                answer: embed_in_fence(&t.code.text, "verilog"),
            },
        }]),
        DatasetRecord::Curriculum(c) => {
            let statement = c.base.problem.statement.as_str();
            let code = c.attempt.code.text.trim_end();
            let mut out = vec![SftSample {
                task: Task::Test,
                messages: prompts.render(prompts::TEST_REVIEW, &[("problem", statement), ("code", code)])?,
                target: SftTarget {
                    reasoning: c.review.reasoning.clone(),
                    answer: c.review.body.clone(),
                },
            }];
            if let (CurriculumKind::TestAndDebug, Some(patch)) = (c.kind, &c.patch) {
                out.push(SftSample {
                    task: Task::Debug,
                    messages: prompts.render(
                        prompts::DEBUG,
                        &[("problem", statement), ("code", code), ("report", c.review.body.trim_end())],
                    )?,
                    target: SftTarget {
                        reasoning: patch.reasoning.clone(),
                        answer: embed_in_fence(&patch.code.text, "verilog"),
                    },
                });
            }
            Ok(out)
        }
    }
}
