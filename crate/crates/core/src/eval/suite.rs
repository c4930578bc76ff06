//! Benchmark suites described by a TOML manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::{HarnessError, Origin, OutcomeAdapter, SimulationOutcome, Simulator, VerilogSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Generation,
    Completion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub prompt: String,
    pub golden_testbench: VerilogSource,
    pub family: Family,
    pub suite: String,
    /// Known-good design, when the suite ships one.
    pub reference: Option<VerilogSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub adapter: OutcomeAdapter,
    pub items: Vec<BenchmarkItem>,
}

/// Directory-per-problem layout: every subdirectory of `root` is a problem
/// whose id is the directory name.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub root: PathBuf,
    #[serde(default = "default_prompt")]
    pub prompt: String,
    #[serde(default = "default_testbench")]
    pub testbench: String,
    #[serde(default)]
    pub reference: Option<String>,
}

fn default_prompt() -> String {
    "prompt.txt".into()
}

fn default_testbench() -> String {
    "tb.v".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestProblem {
    pub id: String,
    #[serde(default)]
    pub prompt: Option<String>,
    #[serde(default)]
    pub prompt_file: Option<PathBuf>,
    pub testbench: PathBuf,
    #[serde(default)]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub family: Option<Family>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub name: String,
    #[serde(default)]
    pub family: Family,
    #[serde(default)]
    pub adapter: OutcomeAdapter,
    #[serde(default)]
    pub layout: Option<Layout>,
    #[serde(default)]
    pub problems: Vec<ManifestProblem>,
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("problem `{0}` needs exactly one of prompt or prompt_file")]
    Prompt(String),
    #[error("duplicate problem id `{0}`")]
    Duplicate(String),
    #[error("suite `{0}` has no problems")]
    Empty(String),
}

fn read(path: &Path) -> Result<String, SuiteError> {
    std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl Suite {
    pub fn load(manifest_path: &Path) -> Result<Self, SuiteError> {
        let text = read(manifest_path)?;
        let manifest: SuiteManifest = toml::from_str(&text).map_err(|e| SuiteError::Manifest {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(manifest, base)
    }

    pub fn from_manifest(manifest: SuiteManifest, base: &Path) -> Result<Self, SuiteError> {
        let mut items = Vec::new();
        let item = |id: String, prompt: String, tb: String, reference: Option<String>, family| BenchmarkItem {
            id,
            prompt,
            golden_testbench: VerilogSource::new(tb, Origin::Benchmark),
            family,
            suite: manifest.name.clone(),
            reference: reference.map(|r| VerilogSource::new(r, Origin::Benchmark)),
        };
        if let Some(layout) = &manifest.layout {
            let root = base.join(&layout.root);
            let entries = std::fs::read_dir(&root).map_err(|source| SuiteError::Io {
                path: root.clone(),
                source,
            })?;
            let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
            dirs.sort();
            for dir in dirs {
                let id = dir.file_name().unwrap().to_string_lossy().into_owned();
                let reference = match &layout.reference {
                    Some(r) if dir.join(r).exists() => Some(read(&dir.join(r))?),
                    _ => None,
                };
                items.push(item(
                    id,
                    read(&dir.join(&layout.prompt))?,
                    read(&dir.join(&layout.testbench))?,
                    reference,
                    manifest.family,
                ));
            }
        }
        for p in &manifest.problems {
            let prompt = match (&p.prompt, &p.prompt_file) {
                (Some(t), None) => t.clone(),
                (None, Some(f)) => read(&base.join(f))?,
                _ => return Err(SuiteError::Prompt(p.id.clone())),
            };
            let reference = p.reference.as_ref().map(|r| read(&base.join(r))).transpose()?;
            items.push(item(
                p.id.clone(),
                prompt,
                read(&base.join(&p.testbench))?,
                reference,
                p.family.unwrap_or(manifest.family),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for i in &items {
            if !seen.insert(i.id.as_str()) {
                return Err(SuiteError::Duplicate(i.id.clone()));
            }
        }
        if items.is_empty() {
            return Err(SuiteError::Empty(manifest.name));
        }
        Ok(Self {
            name: manifest.name,
            adapter: manifest.adapter,
            items,
        })
    }

    pub fn item(&self, id: &str) -> Option<&BenchmarkItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Simulate every shipped reference against its golden testbench.
    pub fn check_references(&self, sim: &Simulator) -> Vec<(String, Result<SimulationOutcome, HarnessError>)> {
        self.items
            .iter()
            .filter_map(|i| {
                let r = i.reference.as_ref()?;
                let limit = sim.config().sim_timeout();
                Some((i.id.clone(), sim.simulate_with(r, &i.golden_testbench, limit, &self.adapter)))
            })
            .collect()
    }
}
