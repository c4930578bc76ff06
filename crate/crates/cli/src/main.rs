use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use veriloop::inference::{Budget, Strategy};
use veriloop::pipeline::Task;
use veriloop::pool::CancelToken;

use veriloop_cli::commands;
use veriloop_cli::config::{self, Overrides};

/// Verilog training-data pipeline, inference strategies and evaluation.
#[derive(Debug, Parser)]
#[command(name = "veriloop", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base random seed; every sampling seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Deterministic mode: one worker, no intra-seed concurrency.
    #[arg(long, global = true)]
    serial: bool,
    /// Directory for generated artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate verified (problem, reasoning, code, testbench) tuples from seeds.
    Phase1 {
        /// Seed corpus (JSONL of problem/code/source).
        #[arg(long)]
        seeds: Option<PathBuf>,
    },
    /// Sample student attempts and build test/debug curriculum records.
    Phase2 {
        /// Tuple dataset produced by phase1.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Render a dataset as chat-format SFT samples.
    Export {
        /// Dataset to render; defaults to the phase 2 output, else phase 1's.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Tasks to include (solve, test, debug); all when omitted.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<Task>,
        /// Skip samples longer than this many whitespace tokens.
        #[arg(long)]
        seq_cap: Option<u64>,
        /// Destination; defaults to sft.jsonl in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate solutions for every problem of a benchmark suite.
    Infer {
        #[command(flatten)]
        strategy: StrategyFlags,
        /// Suite manifest (TOML).
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Destination; defaults to results.jsonl in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score inference results with pass@k and report token cost.
    Eval {
        /// Suite manifest (TOML).
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Inference results (JSONL).
        #[arg(long)]
        results: Option<PathBuf>,
        /// Run label the token-cost ratios are relative to.
        #[arg(long, default_value = "regular")]
        baseline: String,
    },
    /// Re-simulate every dataset record and check transcript hygiene.
    Audit {
        /// Dataset to verify.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Transcripts to check for testbench leaks.
        #[arg(long)]
        transcripts: Vec<PathBuf>,
    },
    /// Cosine similarity between the centroids of two embedding sets.
    Similarity {
        /// First embeddings file (JSONL of label/vector).
        a: PathBuf,
        /// Second embeddings file.
        b: PathBuf,
        /// Use only vectors with this label from the first file.
        #[arg(long)]
        label_a: Option<String>,
        /// Use only vectors with this label from the second file.
        #[arg(long)]
        label_b: Option<String>,
    },
}

#[derive(Debug, Args)]
struct StrategyFlags {
    /// regular, deep or agentic.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Agentic review rounds: a count or `inf`.
    #[arg(long)]
    budget: Option<Budget>,
    /// Sessions per problem.
    #[arg(long)]
    n: Option<u32>,
    /// Nucleus sampling threshold for generation.
    #[arg(long)]
    topp: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "veriloop=info".into()),
        )
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();

    let cancel = CancelToken::new();
    let handler = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("interrupt: finishing items in flight");
        handler.cancel();
    }) {
        tracing::warn!(%e, "could not install the interrupt handler");
    }

    let mut overrides = Overrides {
        seed: cli.common.seed,
        serial: cli.common.serial,
        out_dir: cli.common.out_dir.clone(),
        ..Overrides::default()
    };
    if let Command::Infer { strategy, .. } = &cli.command {
        overrides.strategy = strategy.strategy;
        overrides.budget = strategy.budget;
        overrides.n = strategy.n;
        overrides.top_p = strategy.topp;
    }
    let cfg = match config::RunConfig::load_or_default(cli.common.config.as_deref()).and_then(|mut c| {
        c.apply(&overrides);
        c.validate()?;
        Ok(c)
    }) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };

    let result = match cli.command {
        Command::Phase1 { seeds } => commands::phase1(&cfg, seeds, &cancel),
        Command::Phase2 { dataset } => commands::phase2(&cfg, dataset, &cancel),
        Command::Export {
            dataset,
            tasks,
            seq_cap,
            output,
        } => commands::export(&cfg, dataset, tasks, seq_cap, output),
        Command::Infer { suite, output, .. } => commands::infer(&cfg, suite, output, &cancel),
        Command::Eval {
            suite,
            results,
            baseline,
        } => commands::eval(&cfg, suite, results, &baseline, &cancel),
        Command::Audit { dataset, transcripts } => commands::audit(&cfg, dataset, &transcripts, &cancel),
        Command::Similarity { a, b, label_a, label_b } => {
            commands::similarity(&a, &b, label_a.as_deref(), label_b.as_deref())
        }
    };
    match result {
        Ok(status) if cancel.is_cancelled() => {
            eprintln!("interrupted; partial outputs are valid up to the last completed item");
            if status == 0 {
                ExitCode::from(130)
            } else {
                ExitCode::from(status)
            }
        }
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
