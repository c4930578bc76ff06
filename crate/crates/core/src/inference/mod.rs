//! Regular, deep-thinking and agentic Verilog generation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agents::{prompts, AgentError, AgentRole, Agents, PromptSet, Turn, Verdict};
use crate::gateway::{Backend, SamplingParams};
use crate::harness::{Origin, VerilogSource};
use crate::pool::{run_ordered, CancelToken};
use crate::text::derive_seed;

/// Review rounds an unbounded agentic session may use before it is cut off.
pub const DEFAULT_UNBOUNDED_CAP: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Regular,
    DeepThinking,
    Agentic,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Regular => "regular",
            Self::DeepThinking => "deep_thinking",
            Self::Agentic => "agentic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Self::Regular),
            "deep" | "deep_thinking" | "deep-thinking" => Ok(Self::DeepThinking),
            "agentic" => Ok(Self::Agentic),
            other => Err(format!("unknown strategy `{other}` (expected regular, deep or agentic)")),
        }
    }
}

/// Review rounds allowed in an agentic session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Budget {
    Bounded(u32),
    Unbounded,
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bounded(n) => write!(f, "{n}"),
            Self::Unbounded => f.write_str("inf"),
        }
    }
}

impl FromStr for Budget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "unbounded" => Ok(Self::Unbounded),
            n => n
                .parse::<u32>()
                .map(Self::Bounded)
                .map_err(|_| format!("invalid budget `{n}` (expected a count or `inf`)")),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Bounded(n) => s.serialize_u32(*n),
            Self::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u32),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Self::Bounded(n)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Only meaningful for the agentic strategy; defaults to 3 there.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    #[serde(default)]
    pub params: SamplingParams,
    #[serde(default = "default_cap")]
    pub unbounded_cap: u32,
}

fn default_cap() -> u32 {
    DEFAULT_UNBOUNDED_CAP
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            budget: None,
            params: SamplingParams::default(),
            unbounded_cap: DEFAULT_UNBOUNDED_CAP,
        }
    }

    pub fn agentic(budget: Budget) -> Self {
        Self {
            budget: Some(budget),
            ..Self::new(Strategy::Agentic)
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.budget.is_some() && self.strategy != Strategy::Agentic {
            return Err(InferenceError::Config(format!(
                "an interaction budget only applies to the agentic strategy, not {}",
                self.strategy
            )));
        }
        if self.unbounded_cap == 0 {
            return Err(InferenceError::Config("unbounded_cap must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_budget(&self) -> Budget {
        self.budget.unwrap_or(Budget::Bounded(3))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionTerminal {
    VerdictPass,
    BudgetExhausted,
    SingleShot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub turns: Vec<Turn>,
    pub total_completion_tokens: u64,
    pub interactions_used: u32,
    pub terminal: SessionTerminal,
}

impl SessionTranscript {
    fn close(turns: Vec<Turn>, interactions_used: u32, terminal: SessionTerminal) -> Self {
        Self {
            total_completion_tokens: turns.iter().map(|t| t.completion_tokens).sum(),
            turns,
            interactions_used,
            terminal,
        }
    }

    /// True when any rendered prompt contains `needle` (ignoring surrounding
    /// whitespace).
    pub fn prompts_contain(&self, needle: &str) -> bool {
        let needle = needle.trim();
        !needle.is_empty() && self.turns.iter().any(|t| t.prompt_text().contains(needle))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub code: Option<VerilogSource>,
    pub transcript: SessionTranscript,
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("invalid strategy configuration: {0}")]
    Config(String),
    #[error("n must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Backends per agentic role. All three are usually the same model.
#[derive(Clone, Copy)]
pub struct RoleBackends<'a> {
    pub solve: &'a Backend,
    pub test: &'a Backend,
    pub debug: &'a Backend,
}

impl<'a> RoleBackends<'a> {
    pub fn uniform(backend: &'a Backend) -> Self {
        Self {
            solve: backend,
            test: backend,
            debug: backend,
        }
    }
}

type Session = (Option<VerilogSource>, u32, SessionTerminal);

fn finish(turns: Vec<Turn>, session: Session) -> InferenceResult {
    let (code, used, terminal) = session;
    InferenceResult {
        code,
        transcript: SessionTranscript::close(turns, used, terminal),
    }
}

fn single_shot(
    problem: &str,
    agents: Agents<'_>,
    agent: AgentRole,
    template: &str,
    turns: &mut Vec<Turn>,
) -> Result<Session, InferenceError> {
    let out = agents.one_shot(agent, template, problem, turns)?;
    Ok((
        out.map(|o| VerilogSource::new(o.code, Origin::SolutionAgent)),
        0,
        SessionTerminal::SingleShot,
    ))
}

/// One completion under a system prompt asking the model to think first.
pub fn infer_regular(
    problem: &str,
    backend: &Backend,
    prompts: &PromptSet,
    params: &SamplingParams,
) -> Result<InferenceResult, InferenceError> {
    let mut turns = Vec::new();
    let agents = Agents::new(backend, prompts, params);
    let s = single_shot(problem, agents, AgentRole::Regular, prompts::REGULAR, &mut turns)?;
    Ok(finish(turns, s))
}

/// One completion whose reasoning drafts, tests and debugs a solution. The
/// last fenced block of the reply is the answer.
pub fn infer_deep_thinking(
    problem: &str,
    backend: &Backend,
    prompts: &PromptSet,
    params: &SamplingParams,
) -> Result<InferenceResult, InferenceError> {
    let mut turns = Vec::new();
    let agents = Agents::new(backend, prompts, params);
    let s = single_shot(problem, agents, AgentRole::DeepThinking, prompts::DEEP_THINKING, &mut turns)?;
    Ok(finish(turns, s))
}

/// Solve, then alternate test review and debug until the review passes or
/// the budget is spent. Each review round counts as one interaction.
pub fn infer_agentic(
    problem: &str,
    backends: RoleBackends<'_>,
    prompts: &PromptSet,
    params: &SamplingParams,
    budget: Budget,
    unbounded_cap: u32,
) -> Result<InferenceResult, InferenceError> {
    let mut turns = Vec::new();
    let s = agentic_session(problem, backends, prompts, params, budget, unbounded_cap, &mut turns)?;
    Ok(finish(turns, s))
}

fn agentic_session(
    problem: &str,
    backends: RoleBackends<'_>,
    prompts: &PromptSet,
    params: &SamplingParams,
    budget: Budget,
    unbounded_cap: u32,
    turns: &mut Vec<Turn>,
) -> Result<Session, InferenceError> {
    let limit = match budget {
        Budget::Bounded(b) => b,
        Budget::Unbounded => unbounded_cap,
    };
    let mut code = match Agents::new(backends.solve, prompts, params).solve(problem, None, turns) {
        Ok(s) => s.code,
        Err(AgentError::NoCodeBlock) => return Ok((None, 0, SessionTerminal::BudgetExhausted)),
        Err(e) => return Err(e.into()),
    };
    let tester = Agents::new(backends.test, prompts, params);
    let debugger = Agents::new(backends.debug, prompts, params);
    let mut used = 0u32;
    let terminal = loop {
        if used >= limit {
            break SessionTerminal::BudgetExhausted;
        }
        used += 1;
        let report = match tester.test_review(problem, &code, turns) {
            Ok(r) => r,
            Err(AgentError::UnparsableVerdict(e)) => {
                tracing::debug!(round = used, %e, "unparsable review; keeping current code");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if report.verdict == Verdict::Pass {
            break SessionTerminal::VerdictPass;
        }
        match debugger.debug(problem, &code, &report, turns) {
            Ok(p) => code = p.code,
            Err(AgentError::NoCodeBlock) => tracing::debug!(round = used, "patch without code; keeping current code"),
            Err(e) => return Err(e.into()),
        }
    };
    Ok((Some(code), used, terminal))
}

fn session(
    problem: &str,
    backends: RoleBackends<'_>,
    prompts: &PromptSet,
    config: &StrategyConfig,
    params: &SamplingParams,
    turns: &mut Vec<Turn>,
) -> Result<Session, InferenceError> {
    config.validate()?;
    match config.strategy {
        Strategy::Regular => single_shot(
            problem,
            Agents::new(backends.solve, prompts, params),
            AgentRole::Regular,
            prompts::REGULAR,
            turns,
        ),
        Strategy::DeepThinking => single_shot(
            problem,
            Agents::new(backends.solve, prompts, params),
            AgentRole::DeepThinking,
            prompts::DEEP_THINKING,
            turns,
        ),
        Strategy::Agentic => agentic_session(
            problem,
            backends,
            prompts,
            params,
            config.effective_budget(),
            config.unbounded_cap,
            turns,
        ),
    }
}

pub fn infer(
    problem: &str,
    backends: RoleBackends<'_>,
    prompts: &PromptSet,
    config: &StrategyConfig,
    params: &SamplingParams,
) -> Result<InferenceResult, InferenceError> {
    let mut turns = Vec::new();
    let s = session(problem, backends, prompts, config, params, &mut turns)?;
    Ok(finish(turns, s))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchProblem {
    pub id: String,
    pub prompt: String,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub problem_id: String,
    pub sample: u32,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<Budget>,
    pub seed: u64,
    pub code: Option<String>,
    pub transcript: SessionTranscript,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `n` independent sessions per problem, ordered by problem then sample.
/// Session failures become records without code. `on_record` sees records
/// in that order as soon as they are available.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    problems: &[BatchProblem],
    backends: RoleBackends<'_>,
    prompts: &PromptSet,
    config: &StrategyConfig,
    n: u32,
    seed: u64,
    width: usize,
    cancel: &CancelToken,
    mut on_record: impl FnMut(&SessionRecord) + Send,
) -> Result<Vec<SessionRecord>, InferenceError> {
    config.validate()?;
    if n == 0 {
        return Err(InferenceError::NoSamples);
    }
    let jobs: Vec<(usize, u32)> = (0..problems.len()).flat_map(|p| (0..n).map(move |s| (p, s))).collect();
    let budget = (config.strategy == Strategy::Agentic).then(|| config.effective_budget());
    let mut order = crate::pool::InOrder::new();
    let results = run_ordered(
        &jobs,
        width,
        cancel,
        |_, &(pi, sample)| {
            let problem = &problems[pi];
            let session_seed = derive_seed(seed, &[pi as u64, sample as u64]);
            let params = config.params.with_seed(session_seed);
            let mut turns = Vec::new();
            let (code, transcript, error) = match session(&problem.prompt, backends, prompts, config, &params, &mut turns) {
                Ok(s) => {
                    let r = finish(turns, s);
                    (r.code.map(|c| c.text), r.transcript, None)
                }
                Err(e) => {
                    tracing::warn!(problem = %problem.id, sample, %e, "session failed");
                    let terminal = match config.strategy {
                        Strategy::Agentic => SessionTerminal::BudgetExhausted,
                        _ => SessionTerminal::SingleShot,
                    };
                    (None, SessionTranscript::close(turns, 0, terminal), Some(e.to_string()))
                }
            };
            SessionRecord {
                problem_id: problem.id.clone(),
                sample,
                strategy: config.strategy,
                budget,
                seed: session_seed,
                code,
                transcript,
                error,
            }
        },
        |i, r| {
            for ready in order.push(i, r.clone()) {
                on_record(&ready);
            }
        },
    );
    Ok(results.into_iter().flatten().collect())
}

/// Problems whose testbench text appears in any prompt of their sessions.
pub fn leaked_testbenches<'a>(
    records: &'a [SessionRecord],
    testbench_of: impl Fn(&str) -> Option<&'a str>,
) -> Vec<&'a SessionRecord> {
    records
        .iter()
        .filter(|r| testbench_of(&r.problem_id).is_some_and(|tb| r.transcript.prompts_contain(tb)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_parsing() {
        assert_eq!("inf".parse::<Budget>().unwrap(), Budget::Unbounded);
        assert_eq!("3".parse::<Budget>().unwrap(), Budget::Bounded(3));
        assert!("-1".parse::<Budget>().is_err());
        let b: Budget = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(b, Budget::Unbounded);
        let b: Budget = serde_json::from_str("4").unwrap();
        assert_eq!(b, Budget::Bounded(4));
        assert_eq!(serde_json::to_string(&Budget::Bounded(2)).unwrap(), "2");
    }

    #[test]
    fn budget_requires_agentic() {
        let mut c = StrategyConfig::new(Strategy::Regular);
        c.budget = Some(Budget::Bounded(1));
        assert!(c.validate().is_err());
        assert!(StrategyConfig::agentic(Budget::Unbounded).validate().is_ok());
    }

    #[test]
    fn strategy_names() {
        assert_eq!("deep".parse::<Strategy>().unwrap(), Strategy::DeepThinking);
        assert_eq!(Strategy::DeepThinking.to_string(), "deep_thinking");
        assert!("fast".parse::<Strategy>().is_err());
    }
}
