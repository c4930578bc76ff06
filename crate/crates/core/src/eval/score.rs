//! Functional scoring of inference results against a suite.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::harness::{HarnessError, Origin, Simulator, VerilogSource};
use crate::inference::SessionRecord;
use crate::pool::{run_ordered, CancelToken};

use super::passk::ScoreCell;
use super::suite::Suite;

pub const REPORTED_K: [u32; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemScore {
    pub problem_id: String,
    pub n: u32,
    pub c: u32,
    /// pass@k per k, as a probability.
    pub pass_at: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassAtKReport {
    pub suite: String,
    pub n: u32,
    pub problems: Vec<ProblemScore>,
    /// Suite mean pass@k multiplied by 100.
    pub mean: BTreeMap<u32, f64>,
    /// Mean completion tokens per session, keyed by run label.
    pub mean_completion_tokens: BTreeMap<String, f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("problem `{problem}` has {found} result(s), expected {expected}")]
    MissingSamples { problem: String, expected: u32, found: u32 },
    #[error("result for `{0}`, which is not in the suite")]
    UnknownProblem(String),
    #[error("no results to score")]
    Empty,
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// Score `results` against `suite`. Code that is missing, does not compile
/// or does not instantiate under the golden testbench counts as a failure.
/// Toolchain failures abort.
pub fn score_run(
    results: &[SessionRecord],
    suite: &Suite,
    sim: &Simulator,
    width: usize,
    cancel: &CancelToken,
) -> Result<PassAtKReport, ScoreError> {
    let mut per_problem: HashMap<&str, Vec<&SessionRecord>> = HashMap::new();
    for r in results {
        if suite.item(&r.problem_id).is_none() {
            return Err(ScoreError::UnknownProblem(r.problem_id.clone()));
        }
        per_problem.entry(r.problem_id.as_str()).or_default().push(r);
    }
    let n = per_problem.values().map(|v| v.len()).max().ok_or(ScoreError::Empty)? as u32;
    for item in &suite.items {
        let found = per_problem.get(item.id.as_str()).map_or(0, |v| v.len()) as u32;
        if found != n {
            return Err(ScoreError::MissingSamples {
                problem: item.id.clone(),
                expected: n,
                found,
            });
        }
    }

    let limit = sim.config().sim_timeout();
    let verdicts = run_ordered(
        results,
        width,
        cancel,
        |_, r| -> Result<bool, HarnessError> {
            let Some(code) = &r.code else { return Ok(false) };
            let item = suite.item(&r.problem_id).expect("checked above");
            let dut = VerilogSource::new(code.clone(), Origin::SolutionAgent);
            match sim.simulate_with(&dut, &item.golden_testbench, limit, &suite.adapter) {
                Ok(o) => Ok(o.passed()),
                Err(HarnessError::InvalidInput(_)) => Ok(false),
                Err(e) => Err(e),
            }
        },
        |_, _| {},
    );
    let mut correct: HashMap<&str, u32> = HashMap::new();
    for (r, v) in results.iter().zip(verdicts) {
        let passed = match v {
            Some(v) => v?,
            None => return Err(HarnessError::Sandbox("scoring cancelled".into()).into()),
        };
        *correct.entry(r.problem_id.as_str()).or_default() += passed as u32;
    }

    let ks: Vec<u32> = REPORTED_K.iter().copied().filter(|&k| k <= n).collect();
    let problems: Vec<ProblemScore> = suite
        .items
        .iter()
        .map(|item| {
            let c = correct.get(item.id.as_str()).copied().unwrap_or(0);
            let pass_at = ks
                .iter()
                .map(|&k| (k, ScoreCell::new(n, c, k).expect("valid cell").pass_at_k()))
                .collect();
            ProblemScore {
                problem_id: item.id.clone(),
                n,
                c,
                pass_at,
            }
        })
        .collect();
    let mean = ks
        .iter()
        .map(|&k| {
            let total: f64 = problems.iter().map(|p| p.pass_at[&k]).sum();
            (k, 100.0 * total / problems.len() as f64)
        })
        .collect();
    let mut tokens: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    for r in results {
        let e = tokens.entry(run_label(r)).or_default();
        e.0 += r.transcript.total_completion_tokens;
        e.1 += 1;
    }
    Ok(PassAtKReport {
        suite: suite.name.clone(),
        n,
        problems,
        mean,
        mean_completion_tokens: tokens.into_iter().map(|(k, (t, c))| (k, t as f64 / c as f64)).collect(),
    })
}

/// `regular`, `deep_thinking`, or `agentic(b=N)`.
pub fn run_label(r: &SessionRecord) -> String {
    match r.budget {
        Some(b) => format!("{}(b={b})", r.strategy),
        None => r.strategy.to_string(),
    }
}

impl PassAtKReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let id_w = self.problems.iter().map(|p| p.problem_id.len()).max().unwrap_or(0).max(7);
        let _ = write!(out, "{:<id_w$}  {:>4}  {:>4}", "problem", "n", "c");
        for k in self.mean.keys() {
            let _ = write!(out, "  {:>8}", format!("pass@{k}"));
        }
        out.push('\n');
        for p in &self.problems {
            let _ = write!(out, "{:<id_w$}  {:>4}  {:>4}", p.problem_id, p.n, p.c);
            for v in p.pass_at.values() {
                let _ = write!(out, "  {:>8.2}", v * 100.0);
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<id_w$}  {:>4}  {:>4}", format!("{} (mean)", self.suite), self.n, "");
        for v in self.mean.values() {
            let _ = write!(out, "  {v:>8.2}");
        }
        out.push('\n');
        for (label, t) in &self.mean_completion_tokens {
            let _ = writeln!(out, "mean completion tokens {label}: {t:.1}");
        }
        out
    }
}
