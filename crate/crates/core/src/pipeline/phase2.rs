//! Self-correction: sample student attempts, select and balance them, then
//! attach verified test reports and debug patches.

use std::collections::HashSet;

use crate::agents::{AgentError, Agents, PromptSet, TestReport, Turn, Verdict};
use crate::gateway::Backend;
use crate::harness::{HarnessError, Origin, SimStatus, SimulationOutcome, Simulator, VerilogSource};
use crate::pool::{run_ordered, CancelToken, InOrder};
use crate::text::derive_seed;

use super::phase1::simulate;
use super::{
    AttemptLabel, AttemptRecord, CurriculumKind, CurriculumRecord, DatasetRecord, LedgerEntry, PipelineConfig,
    PipelineError, Sinks, Terminal, TrainingTuple, TranscriptEntry,
};

const STAGE_SAMPLE: u64 = 10;
const STAGE_REVIEW: u64 = 11;
const STAGE_DEBUG: u64 = 12;
const STAGE_REVIEW_AGAIN: u64 = 13;
const STAGE_DEBUG_AGAIN: u64 = 14;

/// Attempts drawn for one problem, in sampling order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemAttempts {
    pub tuple_index: usize,
    pub id: String,
    pub attempts: Vec<AttemptRecord>,
}

#[derive(Debug, Default)]
pub struct SampleOutput {
    pub problems: Vec<ProblemAttempts>,
    /// Samples lost to backend or harness failures.
    pub errors: Vec<LedgerEntry>,
    pub transcripts: Vec<TranscriptEntry>,
}

#[derive(Debug, Default)]
pub struct Phase2Output {
    pub records: Vec<CurriculumRecord>,
    pub ledger: Vec<LedgerEntry>,
    pub transcripts: Vec<TranscriptEntry>,
    pub sampled: Vec<ProblemAttempts>,
    pub balanced: Vec<ProblemAttempts>,
}

fn attempt_id(tuple_id: &str, sample: u32) -> String {
    format!("{tuple_id}/a{sample}")
}

/// Draw `config.attempts` independent student solutions per tuple and label
/// each by simulation against the tuple's testbench. A reply without code
/// counts as a failing attempt with a compile-error surrogate outcome.
pub fn sample_attempts(
    student: &Backend,
    dataset: &[TrainingTuple],
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    cancel: &CancelToken,
) -> Result<SampleOutput, PipelineError> {
    if config.attempts == 0 {
        return Err(PipelineError::InvalidInput("attempts per problem must be at least 1".into()));
    }
    let results = run_ordered(
        dataset,
        config.width,
        cancel,
        |ti, tuple| {
            let mut turns = Vec::new();
            let mut attempts = Vec::new();
            let mut errors = Vec::new();
            for j in 0..config.attempts as u32 {
                let params = config
                    .student_params
                    .with_seed(derive_seed(config.seed, &[ti as u64, STAGE_SAMPLE, j as u64]));
                let agents = Agents::new(student, prompts, &params);
                let before = turns.len();
                let drawn = match agents.solve(&tuple.problem.statement, None, &mut turns) {
                    Ok(s) => Ok(s.code),
                    Err(AgentError::NoCodeBlock) => Err(no_code_surrogate(&turns[before..])),
                    Err(e) => {
                        errors.push(LedgerEntry::new(attempt_id(&tuple.id, j), Terminal::DiscardedError, e.to_string()));
                        continue;
                    }
                };
                match drawn {
                    Ok(code) => match simulate(sim, &code, &tuple.testbench, config.sim_limit) {
                        Ok(outcome) => attempts.push(AttemptRecord::labeled(j, code, outcome)),
                        Err(e) => errors.push(LedgerEntry::new(
                            attempt_id(&tuple.id, j),
                            Terminal::DiscardedError,
                            e.to_string(),
                        )),
                    },
                    Err(record) => attempts.push(AttemptRecord { sample: j, ..record }),
                }
            }
            (
                ProblemAttempts {
                    tuple_index: ti,
                    id: tuple.id.clone(),
                    attempts,
                },
                errors,
                TranscriptEntry {
                    seed_id: tuple.id.clone(),
                    turns,
                },
            )
        },
        |_, _| {},
    );
    let mut out = SampleOutput::default();
    for (problem, errors, transcript) in results.into_iter().flatten() {
        out.problems.push(problem);
        out.errors.extend(errors);
        out.transcripts.push(transcript);
    }
    Ok(out)
}

fn no_code_surrogate(turns: &[Turn]) -> AttemptRecord {
    let reply = turns.last().map(|t| t.reply.content.clone()).unwrap_or_default();
    AttemptRecord {
        sample: 0,
        code: VerilogSource::new(reply, Origin::SolutionAgent),
        label: AttemptLabel::AttMinus,
        outcome: SimulationOutcome {
            status: SimStatus::CompileError,
            tool_stdout: String::new(),
            tool_stderr: "no code block in the reply".into(),
            wall_time: Default::default(),
        },
    }
}

/// Keep problems with at least one failing attempt; drop byte-identical
/// duplicate codes (first kept); truncate the larger label class to the size
/// of the smaller, preserving sampling order. Problems left empty are dropped.
pub fn select_and_balance(problems: &[ProblemAttempts]) -> Vec<ProblemAttempts> {
    problems
        .iter()
        .filter(|p| p.attempts.iter().any(|a| a.label == AttemptLabel::AttMinus))
        .filter_map(|p| {
            let mut seen = HashSet::new();
            let unique: Vec<&AttemptRecord> = p.attempts.iter().filter(|a| seen.insert(a.code.text.as_str())).collect();
            let plus = unique.iter().filter(|a| a.label == AttemptLabel::AttPlus).count();
            let minus = unique.len() - plus;
            let keep = plus.min(minus);
            let (mut kp, mut km) = (0, 0);
            let attempts: Vec<AttemptRecord> = unique
                .into_iter()
                .filter(|a| {
                    let counter = if a.label == AttemptLabel::AttPlus { &mut kp } else { &mut km };
                    *counter += 1;
                    *counter <= keep
                })
                .cloned()
                .collect();
            (!attempts.is_empty()).then(|| ProblemAttempts {
                tuple_index: p.tuple_index,
                id: p.id.clone(),
                attempts,
            })
        })
        .collect()
}

#[derive(Clone)]
struct ChainResult {
    record: Option<CurriculumRecord>,
    ledger: LedgerEntry,
}

#[derive(Clone)]
struct ProblemResult {
    chains: Vec<ChainResult>,
    transcript: TranscriptEntry,
}

/// Run the self-correction phase. The output dataset D′ is D followed by the
/// curriculum records.
#[allow(clippy::too_many_arguments)]
pub fn run_phase2(
    student: &Backend,
    teacher: &Backend,
    dataset: &[TrainingTuple],
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    cancel: &CancelToken,
    sinks: &Sinks<'_>,
) -> Result<Phase2Output, PipelineError> {
    if dataset.is_empty() {
        return Err(PipelineError::InvalidInput("phase 2 needs a non-empty dataset".into()));
    }
    for t in dataset {
        sinks.record(&DatasetRecord::Tuple(t.clone()))?;
    }
    let sampled = sample_attempts(student, dataset, sim, prompts, config, cancel)?;
    let balanced = select_and_balance(&sampled.problems);
    tracing::info!(
        problems = sampled.problems.len(),
        selected = balanced.len(),
        attempts = balanced.iter().map(|p| p.attempts.len()).sum::<usize>(),
        "attempts sampled and balanced"
    );

    let mut out = Phase2Output::default();
    for e in &sampled.errors {
        sinks.ledger(e)?;
        out.ledger.push(e.clone());
    }
    for t in &sampled.transcripts {
        sinks.transcript(t)?;
        out.transcripts.push(t.clone());
    }

    let mut order = InOrder::new();
    let mut io_error: Option<PipelineError> = None;
    let emit = |r: &ProblemResult, out: &mut Phase2Output| -> Result<(), PipelineError> {
        for c in &r.chains {
            if let Some(rec) = &c.record {
                sinks.record(&DatasetRecord::Curriculum(rec.clone()))?;
                out.records.push(rec.clone());
            }
            sinks.ledger(&c.ledger)?;
            out.ledger.push(c.ledger.clone());
        }
        sinks.transcript(&r.transcript)?;
        out.transcripts.push(r.transcript.clone());
        Ok(())
    };
    let results = run_ordered(
        &balanced,
        config.width,
        cancel,
        |_, p| {
            let tuple = &dataset[p.tuple_index];
            let mut turns = Vec::new();
            let chains = p
                .attempts
                .iter()
                .map(|a| run_chain(p.tuple_index, tuple, a, teacher, sim, prompts, config, &mut turns))
                .collect();
            ProblemResult {
                chains,
                transcript: TranscriptEntry {
                    seed_id: tuple.id.clone(),
                    turns,
                },
            }
        },
        |i, r: &ProblemResult| {
            for ready in order.push(i, r.clone()) {
                if io_error.is_none() {
                    io_error = emit(&ready, &mut out).err();
                }
            }
        },
    );
    for stranded in order.drain() {
        if io_error.is_none() {
            io_error = emit(&stranded, &mut out).err();
        }
    }
    drop(results);
    if let Some(e) = io_error {
        return Err(e);
    }
    out.sampled = sampled.problems;
    out.balanced = balanced;
    Ok(out)
}

enum Review {
    Report(TestReport),
    Unparsable,
}

#[allow(clippy::too_many_arguments)]
fn run_chain(
    tuple_index: usize,
    tuple: &TrainingTuple,
    attempt: &AttemptRecord,
    teacher: &Backend,
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    turns: &mut Vec<Turn>,
) -> ChainResult {
    let id = attempt_id(&tuple.id, attempt.sample);
    let done = |terminal, detail: &str, record| ChainResult {
        record,
        ledger: LedgerEntry::new(id.clone(), terminal, detail),
    };
    match chain(tuple_index, tuple, attempt, &id, teacher, sim, prompts, config, turns) {
        Ok((terminal, detail, record)) => done(terminal, &detail, record),
        Err(e) => done(Terminal::DiscardedError, &e.to_string(), None),
    }
}

#[derive(Debug, thiserror::Error)]
enum ChainError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

type ChainOutcome = (Terminal, String, Option<CurriculumRecord>);

#[allow(clippy::too_many_arguments)]
fn chain(
    tuple_index: usize,
    tuple: &TrainingTuple,
    attempt: &AttemptRecord,
    id: &str,
    teacher: &Backend,
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    turns: &mut Vec<Turn>,
) -> Result<ChainOutcome, ChainError> {
    let statement = tuple.problem.statement.as_str();
    let params_for = |stage: u64| {
        config
            .teacher_params
            .with_seed(derive_seed(config.seed, &[tuple_index as u64, stage, attempt.sample as u64]))
    };
    let review = |stage: u64, code: &VerilogSource, turns: &mut Vec<Turn>| -> Result<Review, AgentError> {
        let p = params_for(stage);
        match Agents::new(teacher, prompts, &p).test_review(statement, code, turns) {
            Ok(r) => Ok(Review::Report(r)),
            Err(AgentError::UnparsableVerdict(_)) => Ok(Review::Unparsable),
            Err(e) => Err(e),
        }
    };
    let record = |kind, attempt: AttemptRecord, review: TestReport, patch| CurriculumRecord {
        kind,
        id: id.to_string(),
        base: tuple.clone(),
        attempt,
        review,
        patch,
    };

    let first = match review(STAGE_REVIEW, &attempt.code, turns)? {
        Review::Report(r) => r,
        Review::Unparsable => return Ok((Terminal::DroppedUnparsableReview, "first_round".into(), None)),
    };
    if attempt.label == AttemptLabel::AttPlus {
        return Ok(match first.verdict {
            Verdict::Pass => (
                Terminal::AcceptedTestOnly,
                "review agrees with testbench".into(),
                Some(record(CurriculumKind::TestOnly, attempt.clone(), first, None)),
            ),
            Verdict::Fail => (Terminal::DroppedDisagreement, "review FAIL on passing attempt".into(), None),
        });
    }
    if first.verdict == Verdict::Pass {
        return Ok((Terminal::DroppedDisagreement, "review PASS on failing attempt".into(), None));
    }

    let pd = params_for(STAGE_DEBUG);
    let d_old = match Agents::new(teacher, prompts, &pd).debug(statement, &attempt.code, &first, turns) {
        Ok(p) => p,
        Err(AgentError::NoCodeBlock) => {
            return Ok((Terminal::DroppedDebugFailed, "first patch: no code block".into(), None))
        }
        Err(e) => return Err(e.into()),
    };
    let old_outcome = simulate(sim, &d_old.code, &tuple.testbench, config.sim_limit)?;
    if old_outcome.passed() {
        return Ok((
            Terminal::AcceptedTestAndDebug,
            "first_round".into(),
            Some(record(CurriculumKind::TestAndDebug, attempt.clone(), first, Some(d_old))),
        ));
    }

    // Second iteration: a fresh review of d_old, then a new patch.
    let old_attempt = AttemptRecord {
        sample: attempt.sample,
        code: d_old.code.clone(),
        label: AttemptLabel::AttMinus,
        outcome: old_outcome,
    };
    let second = match review(STAGE_REVIEW_AGAIN, &old_attempt.code, turns)? {
        Review::Report(r) => r,
        Review::Unparsable => return Ok((Terminal::DroppedUnparsableReview, "second_round".into(), None)),
    };
    if second.verdict == Verdict::Pass {
        return Ok((Terminal::DroppedDisagreement, "second_round review PASS on failing patch".into(), None));
    }
    let pd2 = params_for(STAGE_DEBUG_AGAIN);
    let d_new = match Agents::new(teacher, prompts, &pd2).debug(statement, &old_attempt.code, &second, turns) {
        Ok(p) => p,
        Err(AgentError::NoCodeBlock) => {
            return Ok((Terminal::DroppedDebugFailed, "second patch: no code block".into(), None))
        }
        Err(e) => return Err(e.into()),
    };
    let new_outcome = simulate(sim, &d_new.code, &tuple.testbench, config.sim_limit)?;
    if new_outcome.passed() {
        Ok((
            Terminal::AcceptedTestAndDebug,
            "second_round".into(),
            Some(record(CurriculumKind::TestAndDebug, old_attempt, second, Some(d_new))),
        ))
    } else {
        Ok((
            Terminal::DroppedDebugFailed,
            format!("second patch: {}", new_outcome.status),
            None,
        ))
    }
}
