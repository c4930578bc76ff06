//! Mapping raw simulator runs to outcome classes.

use serde::{Deserialize, Serialize};

use super::SimStatus;

/// Printed by a testbench once every check passed.
pub const PASS_SENTINEL: &str = "ALL_TESTS_PASSED";
/// Prefix of every per-mismatch line a testbench prints.
pub const FAIL_SENTINEL: &str = "TEST_FAILED";

/// How a suite's testbenches report success.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeAdapter {
    /// `ALL_TESTS_PASSED` / `TEST_FAILED: …` lines.
    #[default]
    Sentinel,
    /// Pass when any `pass` marker appears and no `fail` marker does.
    Markers { pass: Vec<String>, fail: Vec<String> },
    /// A `Mismatches: <n> in <m> samples` summary line; pass iff `n == 0`.
    MismatchCount,
}

impl OutcomeAdapter {
    /// Classify a simulation that compiled and ran to completion or timeout.
    pub fn classify(&self, timed_out: bool, exit_code: Option<i32>, stdout: &str) -> SimStatus {
        if timed_out {
            return SimStatus::Timeout;
        }
        let verdict = match self {
            Self::Sentinel => {
                if stdout.lines().any(|l| l.contains(FAIL_SENTINEL)) {
                    Some(false)
                } else if stdout.lines().any(|l| l.contains(PASS_SENTINEL)) {
                    Some(true)
                } else {
                    None
                }
            }
            Self::Markers { pass, fail } => {
                if fail.iter().any(|m| stdout.contains(m.as_str())) {
                    Some(false)
                } else if pass.iter().any(|m| stdout.contains(m.as_str())) {
                    Some(true)
                } else {
                    None
                }
            }
            Self::MismatchCount => mismatch_count(stdout).map(|n| n == 0),
        };
        match (verdict, exit_code) {
            (Some(false), _) => SimStatus::TestFailure,
            (_, Some(code)) if code != 0 => SimStatus::RuntimeError,
            (_, None) => SimStatus::RuntimeError,
            (Some(true), _) => SimStatus::Pass,
            // Clean exit without a verdict: the testbench never confirmed success.
            (None, Some(_)) => SimStatus::TestFailure,
        }
    }
}

fn mismatch_count(stdout: &str) -> Option<u64> {
    stdout.lines().rev().find_map(|l| {
        let rest = l.trim().strip_prefix("Mismatches:")?;
        rest.split_whitespace().next()?.parse().ok()
    })
}
