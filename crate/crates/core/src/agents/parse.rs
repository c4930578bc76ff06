//! Structured-output contracts shared by the agents.
//!
//! Each output kind has a `render` that produces a reply in the mandated
//! format and a parser that reads it back.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing section `{0}`")]
    MissingSection(&'static str),
    #[error("no `VERDICT: PASS|FAIL` line")]
    NoVerdict,
    #[error("the report lists no test cases (CASE/EXPECTED/OBSERVED)")]
    NoCases,
    #[error("no `FAULT: SOLUTION|TESTBENCH` line")]
    NoFault,
}

/// Split markdown-ish text into `(heading, body)` pairs. Headings are `#`
/// lines or whole-line `**Title**` / `Title:` labels outside code fences.
pub fn markdown_sections(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with("```") {
            in_fence = !in_fence;
        }
        let heading = if in_fence { None } else { heading_of(t) };
        match heading {
            Some(h) => out.push((h, String::new())),
            None => {
                if let Some((_, body)) = out.last_mut() {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    out
}

fn heading_of(line: &str) -> Option<String> {
    let hashes = line.chars().take_while(|&c| c == '#').count();
    let title = if (1..=6).contains(&hashes) && line[hashes..].starts_with(' ') {
        line[hashes..].trim()
    } else if line.len() > 4 && line.starts_with("**") && line.ends_with("**") {
        &line[2..line.len() - 2]
    } else {
        return None;
    };
    let title = title.trim().trim_end_matches(':').trim_matches('*').trim();
    (!title.is_empty()).then(|| title.to_string())
}

/// Revision agent answer: a behavior description followed by the refined
/// problem statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionOutput {
    pub behavior: String,
    pub statement: String,
}

impl RevisionOutput {
    pub fn render(&self) -> String {
        format!("### Behavior\n{}\n\n### Problem Statement\n{}", self.behavior, self.statement)
    }

    /// The statement runs from its heading to the end of the reply, so it
    /// may carry sub-headings of its own.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let lines: Vec<&str> = text.lines().collect();
        let mut in_fence = false;
        let mut behavior_at = None;
        let mut statement_at = None;
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim();
            if t.starts_with("```") {
                in_fence = !in_fence;
                continue;
            }
            if in_fence {
                continue;
            }
            match heading_of(t).map(|h| h.to_ascii_lowercase()) {
                Some(h) if h == "problem statement" && statement_at.is_none() => statement_at = Some(i),
                Some(h) if (h == "behavior" || h == "behaviour")
                    && statement_at.is_none() => {
                        behavior_at = Some(i)
                    }
                _ => {}
            }
        }
        let s = statement_at.ok_or(ParseError::MissingSection("Problem Statement"))?;
        let statement = lines[s + 1..].join("\n").trim().to_string();
        if statement.is_empty() {
            return Err(ParseError::MissingSection("Problem Statement"));
        }
        let behavior = behavior_at
            .map(|b| lines[b + 1..s].join("\n").trim().to_string())
            .unwrap_or_default();
        Ok(Self { behavior, statement })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    Solution,
    Testbench,
}

impl Fault {
    pub fn token(self) -> &'static str {
        match self {
            Self::Solution => "SOLUTION",
            Self::Testbench => "TESTBENCH",
        }
    }
}

/// Arbiter answer: the blamed side plus free-text diagnosis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultOutput {
    pub fault: Fault,
    pub rationale: String,
}

impl FaultOutput {
    pub fn render(&self) -> String {
        format!("FAULT: {}\n\n{}", self.fault.token(), self.rationale)
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(r"(?i)^[\s*_`>#-]*FAULT[\s*_`]*[:=-][\s*_`]*(SOLUTION|TESTBENCH)\b[\s*_`.]*$").unwrap()
        });
        let lines: Vec<&str> = text.lines().collect();
        let (idx, fault) = lines
            .iter()
            .enumerate()
            .find_map(|(i, l)| {
                let c = re.captures(l.trim())?;
                let f = if c[1].eq_ignore_ascii_case("solution") {
                    Fault::Solution
                } else {
                    Fault::Testbench
                };
                Some((i, f))
            })
            .ok_or(ParseError::NoFault)?;
        let rationale = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != idx)
            .map(|(_, l)| *l)
            .collect::<Vec<_>>()
            .join("\n")
            .trim()
            .to_string();
        Ok(Self { fault, rationale })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn token(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub scenario: String,
    pub expected: String,
    pub observed: String,
}

/// Test agent output. `body` is the report text `t` exactly as produced;
/// `cases` and `verdict` are read from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub reasoning: String,
    pub body: String,
    pub verdict: Verdict,
    pub cases: Vec<TestCase>,
}

impl TestReport {
    /// Build a report whose body is the canonical rendering.
    pub fn compose(reasoning: &str, summary: &str, cases: Vec<TestCase>, verdict: Verdict) -> Self {
        let mut body = String::new();
        if !summary.trim().is_empty() {
            body.push_str(summary.trim());
            body.push_str("\n\n");
        }
        for c in &cases {
            body.push_str(&format!(
                "CASE: {}\nEXPECTED: {}\nOBSERVED: {}\n\n",
                c.scenario, c.expected, c.observed
            ));
        }
        body.push_str(&format!("VERDICT: {}", verdict.token()));
        Self {
            reasoning: reasoning.to_string(),
            body,
            verdict,
            cases,
        }
    }

    pub fn parse(reasoning: &str, body: &str) -> Result<Self, ParseError> {
        let verdict = parse_verdict(body).ok_or(ParseError::NoVerdict)?;
        let cases = parse_cases(body);
        if cases.is_empty() {
            return Err(ParseError::NoCases);
        }
        Ok(Self {
            reasoning: reasoning.to_string(),
            body: body.to_string(),
            verdict,
            cases,
        })
    }
}

/// The last `VERDICT:` line wins.
pub fn parse_verdict(text: &str) -> Option<Verdict> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)^[\s*_`>#-]*VERDICT[\s*_`]*:[\s*_`]*(PASS|FAIL)\b[\s*_`.]*$").unwrap());
    text.lines().rev().find_map(|l| {
        let c = re.captures(l.trim())?;
        Some(if c[1].eq_ignore_ascii_case("pass") {
            Verdict::Pass
        } else {
            Verdict::Fail
        })
    })
}

fn parse_cases(text: &str) -> Vec<TestCase> {
    #[derive(Clone, Copy)]
    enum Field {
        Scenario,
        Expected,
        Observed,
    }
    let mut cases: Vec<TestCase> = Vec::new();
    let mut field: Option<Field> = None;
    for raw in text.lines() {
        let line = raw
            .trim()
            .trim_start_matches(|c: char| c == '-' || c == '*' || c == '>' || c.is_whitespace());
        let key = |k: &str| -> Option<String> {
            let head = line.get(..k.len())?;
            if !head.eq_ignore_ascii_case(k) {
                return None;
            }
            let rest = line[k.len()..].trim_start_matches(|c: char| c == '*' || c.is_ascii_digit() || c == ' ');
            rest.strip_prefix(':').map(|r| r.trim_start_matches('*').trim().to_string())
        };
        if let Some(v) = key("CASE") {
            cases.push(TestCase {
                scenario: v,
                expected: String::new(),
                observed: String::new(),
            });
            field = Some(Field::Scenario);
        } else if let (Some(v), Some(c)) = (key("EXPECTED"), cases.last_mut()) {
            c.expected = v;
            field = Some(Field::Expected);
        } else if let (Some(v), Some(c)) = (key("OBSERVED"), cases.last_mut()) {
            c.observed = v;
            field = Some(Field::Observed);
        } else if line.is_empty() || parse_verdict(raw).is_some() {
            field = None;
        } else if let (Some(f), Some(c)) = (field, cases.last_mut()) {
            let slot = match f {
                Field::Scenario => &mut c.scenario,
                Field::Expected => &mut c.expected,
                Field::Observed => &mut c.observed,
            };
            if !slot.is_empty() {
                slot.push('\n');
            }
            slot.push_str(raw.trim());
        }
    }
    cases.retain(|c| !c.scenario.is_empty());
    cases
}

/// Reply carrying reasoning and a single fenced module, as produced by the
/// solution and debug agents and the inference strategies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeOutput {
    pub reasoning: String,
    pub code: String,
}

impl CodeOutput {
    pub fn render(&self) -> String {
        crate::harness::embed_in_fence(&self.code, "verilog")
    }

    pub fn parse(reasoning: Option<&str>, content: &str) -> Option<Self> {
        let code = crate::harness::extract_code(content, "verilog")?;
        Some(Self {
            reasoning: reasoning.unwrap_or_default().to_string(),
            code: code.to_string(),
        })
    }
}
