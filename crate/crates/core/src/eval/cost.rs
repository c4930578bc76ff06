//! Completion-token cost per strategy relative to a baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::inference::SessionRecord;

use super::score::run_label;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub label: String,
    pub sessions: usize,
    pub mean_completion_tokens: f64,
    /// Mean over the baseline's mean; absent when the baseline has no sessions.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub baseline: String,
    pub rows: Vec<CostRow>,
}

/// Group sessions by run label and compare mean completion tokens with
/// `baseline`.
pub fn token_cost_report(records: &[SessionRecord], baseline: &str) -> CostReport {
    let mut groups: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(run_label(r)).or_default();
        g.0 += r.transcript.total_completion_tokens;
        g.1 += 1;
    }
    let mean = |(t, n): &(u64, usize)| *t as f64 / *n as f64;
    let base = groups.get(baseline).map(mean).filter(|m| *m > 0.0);
    CostReport {
        baseline: baseline.to_string(),
        rows: groups
            .iter()
            .map(|(label, g)| CostRow {
                label: label.clone(),
                sessions: g.1,
                mean_completion_tokens: mean(g),
                ratio: base.map(|b| mean(g) / b),
            })
            .collect(),
    }
}

impl CostReport {
    pub fn render_text(&self) -> String {
        let w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<w$}  {:>8}  {:>12}  {:>8}\n", "strategy", "sessions", "mean tokens", "ratio");
        for r in &self.rows {
            let ratio = r.ratio.map_or("-".to_string(), |x| format!("{x:.3}"));
            let _ = writeln!(out, "{:<w$}  {:>8}  {:>12.1}  {:>8}", r.label, r.sessions, r.mean_completion_tokens, ratio);
        }
        let _ = writeln!(out, "baseline: {}", self.baseline);
        out
    }
}
