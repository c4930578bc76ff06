//! Dataset re-verification and transcript hygiene checks.

use std::collections::HashMap;

use serde::Serialize;

use crate::agents::{AgentRole, Verdict};
use crate::harness::Simulator;
use crate::pool::{run_ordered, CancelToken};

use super::phase1::simulate;
use super::{AttemptLabel, CurriculumKind, DatasetRecord, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-check every record invariant, re-running the simulator on each
/// verified code/testbench pair.
pub fn audit_dataset(records: &[DatasetRecord], sim: &Simulator, width: usize, cancel: &CancelToken) -> AuditReport {
    let limit = sim.config().sim_timeout();
    let results = run_ordered(
        records,
        width,
        cancel,
        |_, record| {
            let mut reasons = Vec::new();
            let (dut, tb) = match record {
                DatasetRecord::Tuple(t) => (&t.code, &t.testbench),
                DatasetRecord::Curriculum(c) => {
                    let stored_pass = c.attempt.outcome.passed();
                    if (c.attempt.label == AttemptLabel::AttPlus) != stored_pass {
                        reasons.push("attempt label disagrees with its stored outcome".to_string());
                    }
                    match c.kind {
                        CurriculumKind::TestOnly => {
                            if c.attempt.label != AttemptLabel::AttPlus {
                                reasons.push("test_only record with a failing attempt".into());
                            }
                            if c.review.verdict != Verdict::Pass {
                                reasons.push("test_only record whose review is not PASS".into());
                            }
                            if c.patch.is_some() {
                                reasons.push("test_only record carries a patch".into());
                            }
                            (&c.attempt.code, &c.base.testbench)
                        }
                        CurriculumKind::TestAndDebug => {
                            if c.attempt.label != AttemptLabel::AttMinus {
                                reasons.push("test_and_debug record with a passing attempt".into());
                            }
                            if c.review.verdict != Verdict::Fail {
                                reasons.push("test_and_debug record whose review is not FAIL".into());
                            }
                            match &c.patch {
                                Some(p) => (&p.code, &c.base.testbench),
                                None => {
                                    reasons.push("test_and_debug record without a patch".into());
                                    return reasons;
                                }
                            }
                        }
                    }
                }
            };
            match simulate(sim, dut, tb, limit) {
                Ok(o) if o.passed() => {}
                Ok(o) => reasons.push(format!("re-simulation: {}", o.status)),
                Err(e) => reasons.push(format!("re-simulation error: {e}")),
            }
            reasons
        },
        |_, _| {},
    );
    let mut report = AuditReport::default();
    for (record, reasons) in records.iter().zip(results) {
        let Some(reasons) = reasons else { continue };
        report.checked += 1;
        for reason in reasons {
            report.violations.push(Violation {
                record_id: record.id().to_string(),
                reason,
            });
        }
    }
    report
}

/// Solve and test prompts that contain the testbench of their problem.
/// `testbenches` maps a transcript's seed id to its testbench text.
pub fn hygiene_violations(transcripts: &[TranscriptEntry], testbenches: &HashMap<String, String>) -> Vec<Violation> {
    let mut out = Vec::new();
    for t in transcripts {
        let Some(tb) = testbenches.get(&t.seed_id).map(|s| s.trim()).filter(|s| !s.is_empty()) else {
            continue;
        };
        for (i, turn) in t.turns.iter().enumerate() {
            let guarded = matches!(turn.agent, AgentRole::Solution | AgentRole::Test);
            if guarded && turn.prompt_text().contains(tb) {
                out.push(Violation {
                    record_id: t.seed_id.clone(),
                    reason: format!("turn {i} ({:?}) prompt contains the testbench", turn.agent),
                });
            }
        }
    }
    out
}
