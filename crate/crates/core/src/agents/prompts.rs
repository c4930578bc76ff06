//! Prompt templates and revision exemplars.
//!
//! Templates are plain-text assets named `<id>.txt`, where the id carries a
//! version suffix (`solve.v1`). A file holds a `[system]` and/or a `[user]`
//! section; `{{name}}` placeholders are substituted in a single pass, so
//! substituted text is never re-expanded. The built-in set is compiled into
//! the binary and any file in an override directory replaces it by id.

use std::collections::BTreeMap;
use std::path::Path;

use crate::gateway::ChatMessage;

pub const REVISE: &str = "revise.v1";
pub const SOLVE: &str = "solve.v1";
pub const TESTBENCH: &str = "testbench.v1";
pub const TESTBENCH_REPAIR: &str = "testbench_repair.v1";
pub const ARBITRATE: &str = "arbitrate.v1";
pub const TEST_REVIEW: &str = "test_review.v1";
pub const DEBUG: &str = "debug.v1";
pub const REGULAR: &str = "regular.v1";
pub const DEEP_THINKING: &str = "deep_thinking.v1";
pub const REASK: &str = "reask.v1";

const BUILTIN: &[(&str, &str)] = &[
    (REVISE, include_str!("../../assets/prompts/revise.v1.txt")),
    (SOLVE, include_str!("../../assets/prompts/solve.v1.txt")),
    (TESTBENCH, include_str!("../../assets/prompts/testbench.v1.txt")),
    (TESTBENCH_REPAIR, include_str!("../../assets/prompts/testbench_repair.v1.txt")),
    (ARBITRATE, include_str!("../../assets/prompts/arbitrate.v1.txt")),
    (TEST_REVIEW, include_str!("../../assets/prompts/test_review.v1.txt")),
    (DEBUG, include_str!("../../assets/prompts/debug.v1.txt")),
    (REGULAR, include_str!("../../assets/prompts/regular.v1.txt")),
    (DEEP_THINKING, include_str!("../../assets/prompts/deep_thinking.v1.txt")),
    (REASK, include_str!("../../assets/prompts/reask.v1.txt")),
];

const BUILTIN_EXEMPLARS: &[(&str, &str)] = &[
    ("1-adder", include_str!("../../assets/exemplars/1-adder.md")),
    ("2-mux2", include_str!("../../assets/exemplars/2-mux2.md")),
    ("3-dff", include_str!("../../assets/exemplars/3-dff.md")),
    ("4-counter", include_str!("../../assets/exemplars/4-counter.md")),
    ("5-fsm", include_str!("../../assets/exemplars/5-fsm.md")),
];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template {0}")]
    UnknownTemplate(String),
    #[error("template {template} has no value for placeholder {{{{{name}}}}}")]
    MissingValue { template: String, name: String },
    #[error("template {0} has neither a [system] nor a [user] section")]
    Empty(String),
    #[error("exemplar {name}: missing section {section}")]
    Exemplar { name: String, section: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub system: Option<String>,
    pub user: Option<String>,
}

impl Template {
    pub fn parse(id: &str, text: &str) -> Result<Self, PromptError> {
        let mut system: Option<String> = None;
        let mut user: Option<String> = None;
        let mut current: Option<&mut Option<String>> = None;
        for line in text.lines() {
            match line.trim_end() {
                "[system]" => current = Some(&mut system),
                "[user]" => current = Some(&mut user),
                _ => {
                    if let Some(slot) = current.as_mut() {
                        let buf = slot.get_or_insert_with(String::new);
                        if !buf.is_empty() {
                            buf.push('\n');
                        }
                        buf.push_str(line);
                    }
                }
            }
        }
        let trim = |s: Option<String>| s.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        let (system, user) = (trim(system), trim(user));
        if system.is_none() && user.is_none() {
            return Err(PromptError::Empty(id.to_string()));
        }
        Ok(Self {
            id: id.to_string(),
            system,
            user,
        })
    }

    /// Render into chat messages.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<Vec<ChatMessage>, PromptError> {
        let mut out = Vec::new();
        if let Some(s) = &self.system {
            out.push(ChatMessage::system(substitute(&self.id, s, vars)?));
        }
        if let Some(u) = &self.user {
            out.push(ChatMessage::user(substitute(&self.id, u, vars)?));
        }
        Ok(out)
    }
}

fn substitute(id: &str, text: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = &after[..end];
        if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') || name.is_empty() {
            out.push_str("{{");
            rest = after;
            continue;
        }
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingValue {
                template: id.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// One worked revision example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub name: String,
    pub problem: String,
    pub code: String,
    pub behavior: String,
    pub statement: String,
}

impl Exemplar {
    pub fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let sections = super::parse::markdown_sections(text);
        let get = |section: &'static str| {
            sections
                .iter()
                .find(|(h, _)| h.eq_ignore_ascii_case(section))
                .map(|(_, body)| body.trim().to_string())
                .ok_or(PromptError::Exemplar {
                    name: name.to_string(),
                    section,
                })
        };
        let code_section = get("Code")?;
        let code = crate::harness::extract_code(&code_section, "verilog")
            .ok_or(PromptError::Exemplar {
                name: name.to_string(),
                section: "Code",
            })?
            .trim_end()
            .to_string();
        Ok(Self {
            name: name.to_string(),
            problem: get("Problem")?,
            code,
            behavior: get("Behavior")?,
            statement: get("Problem Statement")?,
        })
    }

    /// The revision answer this example demonstrates.
    pub fn answer(&self) -> String {
        super::parse::RevisionOutput {
            behavior: self.behavior.clone(),
            statement: self.statement.clone(),
        }
        .render()
    }
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    templates: BTreeMap<String, Template>,
    exemplars: Vec<Exemplar>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| (id.to_string(), Template::parse(id, text).expect("builtin template")))
            .collect();
        let exemplars = BUILTIN_EXEMPLARS
            .iter()
            .map(|(name, text)| Exemplar::parse(name, text).expect("builtin exemplar"))
            .collect();
        Self { templates, exemplars }
    }

    /// Built-in set with overrides from `dir`: `*.txt` files replace
    /// templates by id and an `exemplars/` subdirectory, when present,
    /// replaces the whole exemplar list (files sorted by name).
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        let io = |path: &Path, source| PromptError::Io {
            path: path.display().to_string(),
            source,
        };
        for entry in std::fs::read_dir(dir).map_err(|e| io(dir, e))? {
            let path = entry.map_err(|e| io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
            set.templates.insert(id.to_string(), Template::parse(id, &text)?);
        }
        let ex_dir = dir.join("exemplars");
        if ex_dir.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(&ex_dir)
                .map_err(|e| io(&ex_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("md"))
                .collect();
            files.sort();
            set.exemplars = files
                .iter()
                .map(|p| {
                    let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                    let text = std::fs::read_to_string(p).map_err(|e| io(p, e))?;
                    Exemplar::parse(name, &text)
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(set)
    }

    pub fn template(&self, id: &str) -> Result<&Template, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn render(&self, id: &str, vars: &[(&str, &str)]) -> Result<Vec<ChatMessage>, PromptError> {
        self.template(id)?.render(vars)
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    /// Exemplars laid out as few-shot demonstrations for the revision prompt.
    pub fn exemplar_block(&self) -> String {
        let mut out = String::new();
        for (i, ex) in self.exemplars.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            out.push_str(&format!(
                "Example {}\nOriginal problem:\n{}\n\nReference code:\n{}\nAnswer:\n{}",
                i + 1,
                ex.problem,
                crate::harness::embed_in_fence(&ex.code, "verilog"),
                ex.answer()
            ));
        }
        out
    }
}
