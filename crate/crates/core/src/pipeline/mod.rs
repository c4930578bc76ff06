//! Training-data pipeline: the code-generation phase, the self-correction
//! phase, the JSONL dataset store and SFT export.

pub mod audit;
pub mod export;
pub mod phase1;
pub mod phase2;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentRole, DebugPatch, RefinedProblem, TestReport, Turn};
use crate::gateway::SamplingParams;
use crate::harness::{SimulationOutcome, VerilogSource};
use crate::jsonl::{Appender, JsonlError};

pub use audit::{audit_dataset, hygiene_violations, AuditReport, Violation};
pub use export::{export_sft, ExportStats, SftSample, SftTarget, Task};
pub use phase1::{run_phase1, Phase1Output};
pub use phase2::{run_phase2, sample_attempts, select_and_balance, Phase2Output};

/// A (problem, code) pair from a public corpus. One line of `seeds.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPair {
    pub problem: String,
    pub code: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl SeedPair {
    /// Explicit id, else `<source>-<index>`.
    pub fn id_at(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("{}-{index}", self.source))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TupleKind {
    Tuple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurriculumKind {
    TestOnly,
    TestAndDebug,
}

/// Which round of the code-generation phase produced an accepted tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPath {
    FirstAttempt,
    SolutionRetry,
    TestbenchRepair,
}

impl AcceptPath {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FirstAttempt => "first_attempt",
            Self::SolutionRetry => "solution_retry",
            Self::TestbenchRepair => "testbench_repair",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCall {
    pub agent: AgentRole,
    pub template: String,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_source: String,
    pub path: AcceptPath,
    pub calls: Vec<AgentCall>,
}

impl Provenance {
    pub fn calls_of(turns: &[Turn]) -> Vec<AgentCall> {
        turns
            .iter()
            .map(|t| AgentCall {
                agent: t.agent,
                template: t.template.clone(),
                completion_tokens: t.completion_tokens,
            })
            .collect()
    }
}

/// A verified (p′, r, c′, tb) tuple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTuple {
    pub kind: TupleKind,
    pub id: String,
    pub problem: RefinedProblem,
    pub reasoning: String,
    pub code: VerilogSource,
    pub testbench: VerilogSource,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptLabel {
    AttPlus,
    AttMinus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    /// Position among the samples drawn for this problem.
    pub sample: u32,
    pub code: VerilogSource,
    pub label: AttemptLabel,
    pub outcome: SimulationOutcome,
}

impl AttemptRecord {
    pub fn labeled(sample: u32, code: VerilogSource, outcome: SimulationOutcome) -> Self {
        let label = if outcome.passed() {
            AttemptLabel::AttPlus
        } else {
            AttemptLabel::AttMinus
        };
        Self {
            sample,
            code,
            label,
            outcome,
        }
    }
}

/// A tuple augmented with a test report and, for failing attempts, a
/// verified debug patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumRecord {
    pub kind: CurriculumKind,
    pub id: String,
    pub base: TrainingTuple,
    pub attempt: AttemptRecord,
    pub review: TestReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<DebugPatch>,
}

/// One line of `dataset.jsonl`, discriminated by its `kind` field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRecord {
    Tuple(TrainingTuple),
    Curriculum(CurriculumRecord),
}

impl DatasetRecord {
    pub fn id(&self) -> &str {
        match self {
            Self::Tuple(t) => &t.id,
            Self::Curriculum(c) => &c.id,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Self::Tuple(_) => "tuple",
            Self::Curriculum(c) => match c.kind {
                CurriculumKind::TestOnly => "test_only",
                CurriculumKind::TestAndDebug => "test_and_debug",
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Accepted,
    DiscardedCompile,
    DiscardedRevision,
    DiscardedFailedTwice,
    AcceptedTestOnly,
    AcceptedTestAndDebug,
    DroppedDisagreement,
    DroppedUnparsableReview,
    DroppedDebugFailed,
    /// Backend or harness failure; the item was not judged.
    DiscardedError,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accepted => "accepted",
            Self::DiscardedCompile => "discarded_compile",
            Self::DiscardedRevision => "discarded_revision",
            Self::DiscardedFailedTwice => "discarded_failed_twice",
            Self::AcceptedTestOnly => "accepted_test_only",
            Self::AcceptedTestAndDebug => "accepted_test_and_debug",
            Self::DroppedDisagreement => "dropped_disagreement",
            Self::DroppedUnparsableReview => "dropped_unparsable_review",
            Self::DroppedDebugFailed => "dropped_debug_failed",
            Self::DiscardedError => "discarded_error",
        }
    }
}

/// One line of `ledger.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seed_id: String,
    pub terminal: Terminal,
    pub detail: String,
}

impl LedgerEntry {
    pub fn new(seed_id: impl Into<String>, terminal: Terminal, detail: impl Into<String>) -> Self {
        Self {
            seed_id: seed_id.into(),
            terminal,
            detail: detail.into(),
        }
    }
}

/// Count ledger entries per terminal state.
pub fn ledger_counts(ledger: &[LedgerEntry]) -> std::collections::BTreeMap<Terminal, usize> {
    let mut out = std::collections::BTreeMap::new();
    for e in ledger {
        *out.entry(e.terminal).or_insert(0) += 1;
    }
    out
}

/// The turns of one seed or problem, for hygiene audits. One line of
/// `transcripts.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seed_id: String,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Seeds or problems processed concurrently. 1 means serial.
    pub width: usize,
    /// Base for every derived per-call sampling seed.
    pub seed: u64,
    pub teacher_params: SamplingParams,
    pub student_params: SamplingParams,
    /// Student samples per problem in the self-correction phase.
    pub attempts: usize,
    /// Run solution and testbench generation concurrently per seed.
    pub parallel_branches: bool,
    pub sim_limit: Duration,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            width: 1,
            seed: 0,
            teacher_params: SamplingParams::default(),
            student_params: SamplingParams::default(),
            attempts: 4,
            parallel_branches: true,
            sim_limit: Duration::from_secs(10),
        }
    }
}

impl PipelineConfig {
    /// Serial, single-threaded execution for byte-reproducible runs.
    pub fn deterministic(mut self) -> Self {
        self.width = 1;
        self.parallel_branches = false;
        self
    }
}

/// Optional streaming destinations. Records are written in input order.
#[derive(Default)]
pub struct Sinks<'a> {
    pub dataset: Option<&'a Appender>,
    pub ledger: Option<&'a Appender>,
    pub transcripts: Option<&'a Appender>,
}

impl Sinks<'_> {
    fn record(&self, r: &DatasetRecord) -> Result<(), JsonlError> {
        self.dataset.map_or(Ok(()), |a| a.append(r))
    }

    fn ledger(&self, e: &LedgerEntry) -> Result<(), JsonlError> {
        self.ledger.map_or(Ok(()), |a| a.append(e))
    }

    fn transcript(&self, t: &TranscriptEntry) -> Result<(), JsonlError> {
        self.transcripts.map_or(Ok(()), |a| a.append(t))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}
