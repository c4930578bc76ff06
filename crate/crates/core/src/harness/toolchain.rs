//! External simulator toolchains: Icarus Verilog and Verilator.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolchainChoice {
    /// Icarus when `iverilog` and `vvp` are found, else Verilator.
    #[default]
    Auto,
    Icarus,
    Verilator,
}

/// Result of one external tool invocation.
#[derive(Debug, Clone)]
pub struct ToolRun {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ToolRun {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    fn combined(&self) -> String {
        format!("{}{}", self.stdout, self.stderr)
    }
}

#[derive(Debug, Clone)]
pub enum Toolchain {
    Icarus {
        iverilog: PathBuf,
        vvp: PathBuf,
    },
    Verilator {
        verilator: PathBuf,
        cache_root: PathBuf,
        runtime: Arc<OnceLock<Result<PathBuf, String>>>,
    },
}

pub(crate) fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
}

fn resolve(explicit: Option<&Path>, name: &str) -> Result<PathBuf, HarnessError> {
    match explicit {
        Some(p) if p.is_file() => Ok(p.to_path_buf()),
        Some(p) => Err(HarnessError::ToolMissing(format!("{name} not found at {}", p.display()))),
        None => find_on_path(name).ok_or_else(|| HarnessError::ToolMissing(format!("{name} not found on PATH"))),
    }
}

/// Paths that override PATH lookup.
#[derive(Debug, Clone, Default)]
pub struct ToolPaths<'a> {
    pub iverilog: Option<&'a Path>,
    pub vvp: Option<&'a Path>,
    pub verilator: Option<&'a Path>,
    pub cache_root: Option<&'a Path>,
}

impl Toolchain {
    pub fn detect(choice: ToolchainChoice, paths: &ToolPaths<'_>) -> Result<Self, HarnessError> {
        let icarus = || -> Result<Self, HarnessError> {
            Ok(Self::Icarus {
                iverilog: resolve(paths.iverilog, "iverilog")?,
                vvp: resolve(paths.vvp, "vvp")?,
            })
        };
        let verilator = || -> Result<Self, HarnessError> {
            Ok(Self::Verilator {
                verilator: resolve(paths.verilator, "verilator")?,
                cache_root: paths
                    .cache_root
                    .map(Path::to_path_buf)
                    .unwrap_or_else(std::env::temp_dir),
                runtime: Arc::new(OnceLock::new()),
            })
        };
        match choice {
            ToolchainChoice::Icarus => icarus(),
            ToolchainChoice::Verilator => verilator(),
            ToolchainChoice::Auto => icarus().or_else(|e1| {
                verilator().map_err(|e2| HarnessError::ToolMissing(format!("no simulator toolchain: {e1}; {e2}")))
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Icarus { .. } => "icarus",
            Self::Verilator { .. } => "verilator",
        }
    }

    /// Syntax/elaboration check of `files` (relative to `dir`).
    pub fn check(&self, dir: &Path, files: &[&str], timeout: Duration) -> Result<ToolRun, HarnessError> {
        match self {
            Self::Icarus { iverilog, .. } => {
                let mut cmd = Command::new(iverilog);
                cmd.args(["-g2012", "-o", "check.vvp"]).args(files);
                run_tool(cmd, dir, "check", timeout)
            }
            Self::Verilator { verilator, .. } => {
                let mut cmd = Command::new(verilator);
                cmd.args(["--lint-only", "--timing", "-Wno-fatal", "-Wno-lint", "-Wno-style"])
                    .args(files);
                run_tool(cmd, dir, "check", timeout)
            }
        }
    }

    /// Build a simulation image of `files` with top module `top` in `dir`.
    pub fn build(&self, dir: &Path, files: &[&str], top: &str, timeout: Duration) -> Result<ToolRun, HarnessError> {
        match self {
            Self::Icarus { iverilog, .. } => {
                let mut cmd = Command::new(iverilog);
                cmd.args(["-g2012", "-o", "sim.vvp", "-s", top]).args(files);
                run_tool(cmd, dir, "compile", timeout)
            }
            Self::Verilator {
                verilator,
                cache_root,
                runtime,
            } => {
                let started = Instant::now();
                let runtime_dir = runtime
                    .get_or_init(|| build_verilator_runtime(verilator, cache_root, timeout))
                    .clone()
                    .map_err(HarnessError::Sandbox)?;
                let mut cmd = Command::new(verilator);
                cmd.args(verilator_flags()).args(["--top-module", top]).args(files);
                let mut run = run_tool(cmd, dir, "compile", timeout)?;
                if !run.success() {
                    return Ok(run);
                }
                link_runtime(&runtime_dir, &dir.join("obj"))?;
                let remaining = timeout.saturating_sub(started.elapsed());
                let make = run_tool(make_command(&dir.join("obj")), dir, "make", remaining)?;
                run.stdout.push_str(&make.stdout);
                run.stderr.push_str(&make.stderr);
                run.exit_code = make.exit_code;
                run.timed_out = make.timed_out;
                run.elapsed = started.elapsed();
                Ok(run)
            }
        }
    }

    /// Execute a previously built image under `limit`.
    pub fn run(&self, dir: &Path, limit: Duration) -> Result<ToolRun, HarnessError> {
        match self {
            Self::Icarus { vvp, .. } => {
                let mut cmd = Command::new(vvp);
                cmd.args(["-n", "sim.vvp"]);
                run_tool(cmd, dir, "sim", limit)
            }
            Self::Verilator { .. } => {
                let mut cmd = Command::new(dir.join("obj").join("Vsim"));
                cmd.arg("+verilator+quiet");
                run_tool(cmd, dir, "sim", limit)
            }
        }
    }
}

fn verilator_flags() -> [&'static str; 15] {
    [
        "--cc", "--exe", "--main", "--timing", "-Wno-fatal", "-Wno-lint", "-Wno-style", "-CFLAGS", "-fcoroutines",
        "--prefix", "Vsim", "-Mdir", "obj", "--x-assign", "unique",
    ]
}

fn make_command(obj: &Path) -> Command {
    let mut cmd = Command::new("make");
    cmd.arg("-s")
        .arg("-C")
        .arg(obj)
        .args(["-f", "Vsim.mk", "-j1", "OPT_FAST=-O0", "OPT_SLOW=-O0", "OPT_GLOBAL=-O0"]);
    if find_on_path("python").is_none() {
        cmd.arg("PYTHON3=python3");
    }
    cmd
}

const RUNTIME_OBJECTS: &[&str] = &["verilated.o", "verilated_threads.o", "verilated_timing.o"];

/// Copy prebuilt runtime objects; fresh mtimes keep make from rebuilding them.
fn link_runtime(runtime_dir: &Path, obj: &Path) -> Result<(), HarnessError> {
    for name in RUNTIME_OBJECTS {
        std::fs::copy(runtime_dir.join(name), obj.join(name))
            .map_err(|e| HarnessError::Sandbox(format!("copy runtime {name}: {e}")))?;
    }
    Ok(())
}

/// Compile Verilator's C++ runtime once and cache it on disk. Every design
/// build then only compiles its own generated model.
fn build_verilator_runtime(verilator: &Path, cache_root: &Path, timeout: Duration) -> Result<PathBuf, String> {
    let version = Command::new(verilator)
        .arg("--version")
        .output()
        .map_err(|e| format!("verilator --version: {e}"))?;
    let mut h = DefaultHasher::new();
    verilator.canonicalize().unwrap_or_else(|_| verilator.to_path_buf()).hash(&mut h);
    version.stdout.hash(&mut h);
    verilator_flags().hash(&mut h);
    let final_dir = cache_root.join(format!("veriloop-verilator-rt-{:016x}", h.finish()));
    if final_dir.join("READY").is_file() {
        return Ok(final_dir);
    }
    std::fs::create_dir_all(cache_root).map_err(|e| format!("create {}: {e}", cache_root.display()))?;
    let work = tempfile::Builder::new()
        .prefix(".veriloop-rt-build")
        .tempdir_in(cache_root)
        .map_err(|e| format!("runtime build dir: {e}"))?;
    std::fs::write(work.path().join("stub.v"), "module stub; initial begin #1 $finish; end endmodule\n")
        .map_err(|e| e.to_string())?;
    let mut cmd = Command::new(verilator);
    cmd.args(verilator_flags()).args(["--top-module", "stub", "stub.v"]);
    let gen = run_tool(cmd, work.path(), "rt-verilate", timeout).map_err(|e| e.to_string())?;
    if !gen.success() {
        return Err(format!("verilator runtime generation failed:\n{}", gen.combined()));
    }
    let obj = work.path().join("obj");
    let make = run_tool(make_command(&obj), work.path(), "rt-make", timeout.max(Duration::from_secs(300)))
        .map_err(|e| e.to_string())?;
    if !make.success() {
        return Err(format!("verilator runtime build failed:\n{}", make.combined()));
    }
    let staging = work.path().join("rt");
    std::fs::create_dir(&staging).map_err(|e| e.to_string())?;
    for name in RUNTIME_OBJECTS {
        std::fs::copy(obj.join(name), staging.join(name)).map_err(|e| format!("{name}: {e}"))?;
    }
    std::fs::write(staging.join("READY"), "").map_err(|e| e.to_string())?;
    // Another process may have won the race; either copy is valid.
    if std::fs::rename(&staging, &final_dir).is_err() && !final_dir.join("READY").is_file() {
        return Err(format!("could not install runtime cache at {}", final_dir.display()));
    }
    Ok(final_dir)
}

/// Spawn `cmd` in `dir` with stdout/stderr captured to `<stem>.out/.err`,
/// killing the whole process group once `timeout` elapses.
pub(crate) fn run_tool(mut cmd: Command, dir: &Path, stem: &str, timeout: Duration) -> Result<ToolRun, HarnessError> {
    let out_path = dir.join(format!("{stem}.out"));
    let err_path = dir.join(format!("{stem}.err"));
    let io = |e: std::io::Error| HarnessError::Sandbox(format!("{stem}: {e}"));
    let stdout = std::fs::File::create(&out_path).map_err(io)?;
    let stderr = std::fs::File::create(&err_path).map_err(io)?;
    cmd.current_dir(dir)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .process_group(0);
    let started = Instant::now();
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => {
            HarnessError::ToolMissing(format!("{:?}: {e}", cmd.get_program()))
        }
        _ => io(e),
    })?;
    let status = child.wait_timeout(timeout).map_err(io)?;
    let (exit_code, timed_out) = match status {
        Some(s) => (s.code(), false),
        None => {
            // SAFETY: signalling our own child's process group.
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            (None, true)
        }
    };
    let read = |p: &Path| String::from_utf8_lossy(&std::fs::read(p).unwrap_or_default()).into_owned();
    Ok(ToolRun {
        exit_code,
        stdout: read(&out_path),
        stderr: read(&err_path),
        timed_out,
        elapsed: started.elapsed(),
    })
}
