//! Compile and simulate Verilog designs against testbenches.
//!
//! Each call to [`Simulator::compile_check`] or [`Simulator::simulate`] owns a
//! fresh scratch directory (`dut.v`, `tb.v`, the compiled image and captured
//! tool output) that is removed when the call returns. A per-simulator
//! semaphore caps how many toolchain processes run at once.

mod classify;
pub mod fence;
pub mod interface;
pub mod lexer;
mod toolchain;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

pub use classify::{OutcomeAdapter, FAIL_SENTINEL, PASS_SENTINEL};
pub use fence::{embed_in_fence, extract_code};
pub use interface::{parse_interface, Direction, InterfaceError, ModuleInterface, Port};
pub use toolchain::ToolchainChoice;

use crate::pool::Semaphore;
use toolchain::{ToolPaths, Toolchain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    SeedCorpus,
    SolutionAgent,
    TestbenchAgent,
    DebugAgent,
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerilogSource {
    pub text: String,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl VerilogSource {
    pub fn new(text: impl Into<String>, origin: Origin) -> Self {
        Self {
            text: text.into(),
            origin,
            label: None,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn declared_modules(&self) -> Vec<String> {
        lexer::declared_modules(&self.text)
    }

    /// Modules this source instantiates without declaring them.
    pub fn external_instances(&self) -> Vec<String> {
        lexer::external_instances(&self.text)
    }

    /// True when the text could serve as a testbench for an external design.
    pub fn is_testbench_shaped(&self) -> bool {
        !self.text.trim().is_empty() && !self.external_instances().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Pass,
    TestFailure,
    CompileError,
    RuntimeError,
    Timeout,
}

impl SimStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::TestFailure => "test_failure",
            Self::CompileError => "compile_error",
            Self::RuntimeError => "runtime_error",
            Self::Timeout => "timeout",
        }
    }
}

impl std::fmt::Display for SimStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationOutcome {
    pub status: SimStatus,
    pub tool_stdout: String,
    pub tool_stderr: String,
    /// Not serialized so that stored outcomes stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl SimulationOutcome {
    pub fn passed(&self) -> bool {
        self.status == SimStatus::Pass
    }

    /// Tool output in the form shown to agents: stdout then stderr.
    pub fn log(&self) -> String {
        match (self.tool_stdout.trim().is_empty(), self.tool_stderr.trim().is_empty()) {
            (_, true) => self.tool_stdout.clone(),
            (true, false) => self.tool_stderr.clone(),
            (false, false) => format!("{}\n{}", self.tool_stdout.trim_end(), self.tool_stderr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: Option<String>,
    pub line: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileReport {
    Ok,
    Failed { diagnostics: Vec<Diagnostic>, log: String },
}

impl CompileReport {
    pub fn is_ok(&self) -> bool {
        matches!(self, Self::Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("toolchain missing: {0}")]
    ToolMissing(String),
    #[error("toolchain timed out after {0:?}")]
    Timeout(Duration),
    #[error("scratch directory: {0}")]
    Sandbox(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub toolchain: ToolchainChoice,
    pub iverilog: Option<PathBuf>,
    pub vvp: Option<PathBuf>,
    pub verilator: Option<PathBuf>,
    pub sim_timeout_secs: f64,
    pub compile_timeout_secs: f64,
    pub max_parallel: usize,
    pub scratch_root: Option<PathBuf>,
    /// Where Verilator's prebuilt runtime objects are kept between runs.
    pub verilator_cache: Option<PathBuf>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            toolchain: ToolchainChoice::Auto,
            iverilog: None,
            vvp: None,
            verilator: None,
            sim_timeout_secs: 10.0,
            compile_timeout_secs: 120.0,
            max_parallel: std::thread::available_parallelism().map_or(1, |n| n.get()),
            scratch_root: None,
            verilator_cache: None,
        }
    }
}

impl HarnessConfig {
    pub fn sim_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.sim_timeout_secs.max(0.0))
    }

    pub fn compile_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.compile_timeout_secs.max(0.0))
    }
}

/// Handle to a detected toolchain. Cheap to clone; clones share the
/// concurrency cap.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: HarnessConfig,
    toolchain: Toolchain,
    slots: Arc<Semaphore>,
}

impl Simulator {
    pub fn new(config: HarnessConfig) -> Result<Self, HarnessError> {
        let toolchain = Toolchain::detect(
            config.toolchain,
            &ToolPaths {
                iverilog: config.iverilog.as_deref(),
                vvp: config.vvp.as_deref(),
                verilator: config.verilator.as_deref(),
                cache_root: config.verilator_cache.as_deref(),
            },
        )?;
        let slots = Arc::new(Semaphore::new(config.max_parallel.max(1)));
        tracing::debug!(toolchain = toolchain.name(), "simulator ready");
        Ok(Self {
            config,
            toolchain,
            slots,
        })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    pub fn toolchain_name(&self) -> &'static str {
        self.toolchain.name()
    }

    /// Highest number of concurrently running toolchain jobs so far.
    pub fn peak_parallel(&self) -> usize {
        self.slots.peak()
    }

    fn scratch(&self) -> Result<tempfile::TempDir, HarnessError> {
        let mut b = tempfile::Builder::new();
        b.prefix("veriloop-sim-");
        let dir = match &self.config.scratch_root {
            Some(root) => {
                std::fs::create_dir_all(root).map_err(|e| HarnessError::Sandbox(e.to_string()))?;
                b.tempdir_in(root)
            }
            None => b.tempdir(),
        };
        dir.map_err(|e| HarnessError::Sandbox(e.to_string()))
    }

    /// Check that `sources` compile together.
    pub fn compile_check(&self, sources: &[VerilogSource]) -> Result<CompileReport, HarnessError> {
        if sources.is_empty() {
            return Err(HarnessError::InvalidInput("no sources to compile".into()));
        }
        let _slot = self.slots.acquire();
        let dir = self.scratch()?;
        let names: Vec<String> = (0..sources.len()).map(|i| format!("src{i}.v")).collect();
        for (src, name) in sources.iter().zip(&names) {
            write(dir.path(), name, &src.text)?;
        }
        let files: Vec<&str> = names.iter().map(String::as_str).collect();
        let timeout = self.config.compile_timeout();
        let run = self.toolchain.check(dir.path(), &files, timeout)?;
        if run.timed_out {
            return Err(HarnessError::Timeout(timeout));
        }
        if run.success() {
            return Ok(CompileReport::Ok);
        }
        let log = format!("{}{}", run.stdout, run.stderr);
        let mut diagnostics = parse_diagnostics(&log);
        for d in &mut diagnostics {
            let idx = names.iter().position(|n| d.file.as_deref() == Some(n.as_str()));
            if let Some(label) = idx.and_then(|i| sources[i].label.clone()) {
                d.file = Some(label);
            }
        }
        Ok(CompileReport::Failed { diagnostics, log })
    }

    /// Simulate `dut` under `tb` with the default sentinel convention.
    pub fn simulate(
        &self,
        dut: &VerilogSource,
        tb: &VerilogSource,
        limit: Duration,
    ) -> Result<SimulationOutcome, HarnessError> {
        self.simulate_with(dut, tb, limit, &OutcomeAdapter::Sentinel)
    }

    /// Simulate with the default limit from the configuration.
    pub fn simulate_default(&self, dut: &VerilogSource, tb: &VerilogSource) -> Result<SimulationOutcome, HarnessError> {
        self.simulate(dut, tb, self.config.sim_timeout())
    }

    pub fn simulate_with(
        &self,
        dut: &VerilogSource,
        tb: &VerilogSource,
        limit: Duration,
        adapter: &OutcomeAdapter,
    ) -> Result<SimulationOutcome, HarnessError> {
        if limit.is_zero() {
            return Err(HarnessError::InvalidInput("simulation limit must be positive".into()));
        }
        if dut.text.trim().is_empty() || tb.text.trim().is_empty() {
            return Err(HarnessError::InvalidInput("empty design or testbench".into()));
        }
        let dut_modules = dut.declared_modules();
        if !tb.external_instances().iter().any(|m| dut_modules.contains(m)) {
            return Err(HarnessError::InvalidInput(format!(
                "testbench does not instantiate any of the design's modules ({})",
                dut_modules.join(", ")
            )));
        }
        let tb_modules = tb.declared_modules();
        let top = lexer::top_modules(&[&dut.text, &tb.text])
            .into_iter()
            .find(|m| tb_modules.contains(m))
            .ok_or_else(|| HarnessError::InvalidInput("testbench declares no top-level module".into()))?;

        let started = Instant::now();
        let _slot = self.slots.acquire();
        let dir = self.scratch()?;
        write(dir.path(), "dut.v", &dut.text)?;
        write(dir.path(), "tb.v", &tb.text)?;
        let build = self
            .toolchain
            .build(dir.path(), &["dut.v", "tb.v"], &top, self.config.compile_timeout())?;
        if build.timed_out {
            return Ok(SimulationOutcome {
                status: SimStatus::Timeout,
                tool_stdout: build.stdout,
                tool_stderr: build.stderr,
                wall_time: started.elapsed(),
            });
        }
        if !build.success() {
            return Ok(SimulationOutcome {
                status: SimStatus::CompileError,
                tool_stdout: build.stdout,
                tool_stderr: build.stderr,
                wall_time: started.elapsed(),
            });
        }
        let run = self.toolchain.run(dir.path(), limit)?;
        let status = adapter.classify(run.timed_out, run.exit_code, &run.stdout);
        Ok(SimulationOutcome {
            status,
            tool_stdout: run.stdout,
            tool_stderr: run.stderr,
            wall_time: started.elapsed(),
        })
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    std::fs::write(dir.join(name), text).map_err(|e| HarnessError::Sandbox(format!("write {name}: {e}")))
}

/// Pull `file:line: message` diagnostics out of Icarus or Verilator output.
pub fn parse_diagnostics(log: &str) -> Vec<Diagnostic> {
    static PATTERNS: std::sync::OnceLock<(Regex, Regex)> = std::sync::OnceLock::new();
    let (verilator, icarus) = PATTERNS.get_or_init(|| {
        (
            Regex::new(r"^%(?:Error|Warning)[^:]*: ([^:\s]+):(\d+):(?:\d+:)?\s*(.*)$").unwrap(),
            Regex::new(r"^([^:\s]+\.s?v):(\d+):\s*(.*)$").unwrap(),
        )
    });
    let mut out = Vec::new();
    for line in log.lines() {
        if let Some(c) = verilator.captures(line).or_else(|| icarus.captures(line)) {
            out.push(Diagnostic {
                file: Some(c[1].to_string()),
                line: c[2].parse().ok(),
                message: c[3].trim().to_string(),
            });
        } else if line.starts_with("%Error") {
            out.push(Diagnostic {
                file: None,
                line: None,
                message: line.trim_start_matches('%').to_string(),
            });
        }
    }
    out
}
