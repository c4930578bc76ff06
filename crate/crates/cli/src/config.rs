//! Run configuration: one TOML file per run, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use veriloop::gateway::{Backend, BackendSpec, SamplingParams, Script};
use veriloop::harness::HarnessConfig;
use veriloop::inference::{Budget, Strategy, StrategyConfig, DEFAULT_UNBOUNDED_CAP};
use veriloop::pipeline::{PipelineConfig, Task};

/// A backend as written in the config. `script_file` points at a JSON
/// script for the scripted backend.
#[derive(Debug, Clone, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub spec: BackendSpec,
    #[serde(default)]
    pub script_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub teacher: SamplingParams,
    pub student: SamplingParams,
    pub eval: SamplingParams,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    pub strategy: Strategy,
    pub budget: Option<Budget>,
    pub unbounded_cap: u32,
    pub n: u32,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            strategy: Strategy::Regular,
            budget: None,
            unbounded_cap: DEFAULT_UNBOUNDED_CAP,
            n: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub attempts: usize,
    pub parallel_branches: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            attempts: 4,
            parallel_branches: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub tasks: Vec<Task>,
    pub seq_cap: u64,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            seq_cap: 16_384,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub width: usize,
    pub teacher: Option<BackendConfig>,
    pub student: Option<BackendConfig>,
    pub eval: Option<BackendConfig>,
    pub sampling: Sampling,
    pub strategy: StrategySection,
    pub pipeline: PipelineSection,
    pub export: ExportSection,
    pub harness: HarnessConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: false,
            width: 4,
            teacher: None,
            student: None,
            eval: None,
            sampling: Sampling::default(),
            strategy: StrategySection::default(),
            pipeline: PipelineSection::default(),
            export: ExportSection::default(),
            harness: HarnessConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub serial: bool,
    pub strategy: Option<Strategy>,
    pub budget: Option<Budget>,
    pub n: Option<u32>,
    pub top_p: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse `path`; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut().filter(|x| x.is_relative()) {
                *x = base.join(&*x);
            }
        };
        let p = &mut self.paths;
        for slot in [
            &mut p.out_dir,
            &mut p.seeds,
            &mut p.dataset,
            &mut p.suite,
            &mut p.results,
            &mut p.prompts,
        ] {
            fix(slot);
        }
        for b in [&mut self.teacher, &mut self.student, &mut self.eval].into_iter().flatten() {
            fix(&mut b.script_file);
        }
        fix(&mut self.harness.scratch_root);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.serial {
            self.deterministic = true;
        }
        if let Some(s) = o.strategy {
            self.strategy.strategy = s;
        }
        if let Some(b) = o.budget {
            self.strategy.budget = Some(b);
        }
        if let Some(n) = o.n {
            self.strategy.n = n;
        }
        if let Some(p) = o.top_p {
            self.sampling.eval.top_p = p;
        }
        if let Some(d) = &o.out_dir {
            self.paths.out_dir = Some(d.clone());
        }
        if self.deterministic {
            self.width = 1;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            bail!("width must be at least 1");
        }
        for (name, p) in [
            ("teacher", &self.sampling.teacher),
            ("student", &self.sampling.student),
            ("eval", &self.sampling.eval),
        ] {
            p.validate().with_context(|| format!("sampling.{name}"))?;
        }
        if self.strategy.n == 0 {
            bail!("strategy.n must be at least 1");
        }
        self.strategy_config().validate()?;
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("veriloop-out"))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir().join(name)
    }

    pub fn strategy_config(&self) -> StrategyConfig {
        StrategyConfig {
            strategy: self.strategy.strategy,
            budget: self.strategy.budget,
            params: self.sampling.eval.clone(),
            unbounded_cap: self.strategy.unbounded_cap,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let c = PipelineConfig {
            width: self.width,
            seed: self.seed,
            teacher_params: self.sampling.teacher.clone(),
            student_params: self.sampling.student.clone(),
            attempts: self.pipeline.attempts,
            parallel_branches: self.pipeline.parallel_branches,
            sim_limit: self.harness.sim_timeout(),
        };
        if self.deterministic {
            c.deterministic()
        } else {
            c
        }
    }

    pub fn backend(&self, role: &str) -> Result<Backend> {
        let cfg = match role {
            "teacher" => self.teacher.as_ref(),
            "student" => self.student.as_ref(),
            "eval" => self.eval.as_ref().or(self.student.as_ref()),
            _ => None,
        }
        .with_context(|| format!("no [{role}] backend configured"))?;
        let mut spec = cfg.spec.clone();
        if let Some(f) = &cfg.script_file {
            let text = std::fs::read_to_string(f).with_context(|| format!("reading script {}", f.display()))?;
            let script: Script =
                serde_json::from_str(&text).with_context(|| format!("parsing script {}", f.display()))?;
            spec.script = Some(script);
        }
        Backend::new(spec).with_context(|| format!("{role} backend"))
    }
}

/// Fail before any work when a required input is missing.
pub fn require(path: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    let p = path.with_context(|| format!("no {what} path given"))?;
    if !p.exists() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(p.clone())
}
