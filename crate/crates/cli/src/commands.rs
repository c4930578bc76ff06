use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use veriloop::agents::PromptSet;
use veriloop::eval::{centroid_similarity, score_run, token_cost_report, EmbeddingSet, Suite};
use veriloop::inference::{leaked_testbenches, run_batch, BatchProblem, RoleBackends, SessionRecord};
use veriloop::jsonl::{read_all, Appender};
use veriloop::pipeline::{
    audit_dataset, export_sft, hygiene_violations, ledger_counts, run_phase1, run_phase2, DatasetRecord, SeedPair,
    Sinks, Task, TranscriptEntry, TrainingTuple,
};
use veriloop::pool::CancelToken;
use veriloop::Simulator;

use crate::config::{require, RunConfig};

fn prompts(cfg: &RunConfig) -> Result<PromptSet> {
    match &cfg.paths.prompts {
        Some(dir) => PromptSet::with_overrides(dir).with_context(|| format!("prompt overrides in {}", dir.display())),
        None => Ok(PromptSet::builtin()),
    }
}

fn simulator(cfg: &RunConfig) -> Result<Simulator> {
    let sim = Simulator::new(cfg.harness.clone()).context("simulator setup")?;
    tracing::info!(toolchain = sim.toolchain_name(), "simulator ready");
    Ok(sim)
}

fn tuples_of(records: Vec<DatasetRecord>) -> Vec<TrainingTuple> {
    records
        .into_iter()
        .filter_map(|r| match r {
            DatasetRecord::Tuple(t) => Some(t),
            DatasetRecord::Curriculum(_) => None,
        })
        .collect()
}

fn print_ledger(title: &str, ledger: &[veriloop::pipeline::LedgerEntry]) {
    println!("{title}: {} item(s)", ledger.len());
    for (terminal, n) in ledger_counts(ledger) {
        println!("  {:<28} {n}", terminal.as_str());
    }
}

pub fn phase1(cfg: &RunConfig, seeds: Option<PathBuf>, cancel: &CancelToken) -> Result<u8> {
    let seeds_path = require(seeds.as_ref().or(cfg.paths.seeds.as_ref()), "seeds file")?;
    let prompts = prompts(cfg)?;
    let teacher = cfg.backend("teacher")?;
    let sim = simulator(cfg)?;
    let seeds: Vec<SeedPair> = read_all(&seeds_path)?;

    let dataset = Appender::create(&cfg.out("dataset.jsonl"))?;
    let ledger = Appender::create(&cfg.out("ledger.jsonl"))?;
    let transcripts = Appender::create(&cfg.out("transcripts.jsonl"))?;
    let sinks = Sinks {
        dataset: Some(&dataset),
        ledger: Some(&ledger),
        transcripts: Some(&transcripts),
    };
    let out = run_phase1(&seeds, &teacher, &sim, &prompts, &cfg.pipeline_config(), cancel, &sinks)?;
    print_ledger("phase1", &out.ledger);
    println!("tuples written: {} -> {}", out.tuples.len(), dataset.path().display());
    if out.skipped > 0 {
        println!("seeds not processed: {}", out.skipped);
    }
    let usage = teacher.usage();
    println!("teacher usage: {} call(s), {} completion token(s)", usage.calls, usage.completion_tokens);
    Ok(0)
}

pub fn phase2(cfg: &RunConfig, dataset: Option<PathBuf>, cancel: &CancelToken) -> Result<u8> {
    let default = cfg.out("dataset.jsonl");
    let input = require(Some(dataset.as_ref().or(cfg.paths.dataset.as_ref()).unwrap_or(&default)), "dataset")?;
    let prompts = prompts(cfg)?;
    let student = cfg.backend("student")?;
    let teacher = cfg.backend("teacher")?;
    let sim = simulator(cfg)?;
    let tuples = tuples_of(read_all(&input)?);

    let out_data = Appender::create(&cfg.out("dataset_full.jsonl"))?;
    let ledger = Appender::create(&cfg.out("ledger_phase2.jsonl"))?;
    let transcripts = Appender::create(&cfg.out("transcripts_phase2.jsonl"))?;
    let sinks = Sinks {
        dataset: Some(&out_data),
        ledger: Some(&ledger),
        transcripts: Some(&transcripts),
    };
    let out = run_phase2(&student, &teacher, &tuples, &sim, &prompts, &cfg.pipeline_config(), cancel, &sinks)?;
    print_ledger("phase2", &out.ledger);
    println!(
        "problems sampled: {}, selected after balancing: {}",
        out.sampled.len(),
        out.balanced.len()
    );
    println!(
        "records written: {} tuple(s) + {} curriculum -> {}",
        tuples.len(),
        out.records.len(),
        out_data.path().display()
    );
    Ok(0)
}

pub fn export(
    cfg: &RunConfig,
    dataset: Option<PathBuf>,
    tasks: Vec<Task>,
    seq_cap: Option<u64>,
    output: Option<PathBuf>,
) -> Result<u8> {
    let full = cfg.out("dataset_full.jsonl");
    let fallback = if full.exists() { full } else { cfg.out("dataset.jsonl") };
    let input = require(Some(dataset.as_ref().or(cfg.paths.dataset.as_ref()).unwrap_or(&fallback)), "dataset")?;
    let prompts = prompts(cfg)?;
    let records: Vec<DatasetRecord> = read_all(&input)?;
    let tasks = if tasks.is_empty() { cfg.export.tasks.clone() } else { tasks };
    let output = output.unwrap_or_else(|| cfg.out("sft.jsonl"));
    let sink = Appender::create(&output)?;
    let stats = export_sft(
        &records,
        &tasks,
        seq_cap.unwrap_or(cfg.export.seq_cap),
        &prompts,
        |s| sink.append(s).map_err(std::io::Error::other),
    )?;
    println!(
        "samples: solve {}, test {}, debug {}; over the cap: {} -> {}",
        stats.solve,
        stats.test,
        stats.debug,
        stats.skipped,
        output.display()
    );
    Ok(0)
}

fn suite_path(cfg: &RunConfig, suite: Option<PathBuf>) -> Result<PathBuf> {
    require(suite.as_ref().or(cfg.paths.suite.as_ref()), "suite manifest")
}

pub fn infer(cfg: &RunConfig, suite: Option<PathBuf>, output: Option<PathBuf>, cancel: &CancelToken) -> Result<u8> {
    let suite = Suite::load(&suite_path(cfg, suite)?)?;
    let prompts = prompts(cfg)?;
    let backend = cfg.backend("eval")?;
    let strategy = cfg.strategy_config();
    let problems: Vec<BatchProblem> = suite
        .items
        .iter()
        .map(|i| BatchProblem {
            id: i.id.clone(),
            prompt: i.prompt.clone(),
        })
        .collect();
    let output = output.or_else(|| cfg.paths.results.clone()).unwrap_or_else(|| cfg.out("results.jsonl"));
    let sink = Appender::create(&output)?;
    let mut write_error = None;
    let records = run_batch(
        &problems,
        RoleBackends::uniform(&backend),
        &prompts,
        &strategy,
        cfg.strategy.n,
        cfg.seed,
        cfg.width,
        cancel,
        |r| {
            if let Err(e) = sink.append(r) {
                write_error.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let without_code = records.iter().filter(|r| r.code.is_none()).count();
    println!(
        "sessions: {} ({} problem(s) x {}), strategy {}, failed {}, without code {} -> {}",
        records.len(),
        problems.len(),
        cfg.strategy.n,
        veriloop::eval::run_label(records.first().unwrap_or(&placeholder(&strategy))),
        failed,
        without_code,
        output.display()
    );
    let leaks = leaked_testbenches(&records, |id| suite.item(id).map(|i| i.golden_testbench.text.as_str()));
    println!("testbench leaks: {}", leaks.len());
    for r in &leaks {
        println!("  {} sample {}", r.problem_id, r.sample);
    }
    Ok(if leaks.is_empty() { 0 } else { 1 })
}

fn placeholder(strategy: &veriloop::inference::StrategyConfig) -> SessionRecord {
    SessionRecord {
        problem_id: String::new(),
        sample: 0,
        strategy: strategy.strategy,
        budget: (strategy.strategy == veriloop::inference::Strategy::Agentic).then(|| strategy.effective_budget()),
        seed: 0,
        code: None,
        transcript: veriloop::inference::SessionTranscript {
            turns: Vec::new(),
            total_completion_tokens: 0,
            interactions_used: 0,
            terminal: veriloop::inference::SessionTerminal::SingleShot,
        },
        error: None,
    }
}

pub fn eval(
    cfg: &RunConfig,
    suite: Option<PathBuf>,
    results: Option<PathBuf>,
    baseline: &str,
    cancel: &CancelToken,
) -> Result<u8> {
    let suite = Suite::load(&suite_path(cfg, suite)?)?;
    let default = cfg.out("results.jsonl");
    let results_path = require(Some(results.as_ref().or(cfg.paths.results.as_ref()).unwrap_or(&default)), "results")?;
    let sim = simulator(cfg)?;
    let records: Vec<SessionRecord> = read_all(&results_path)?;
    let report = score_run(&records, &suite, &sim, cfg.width, cancel)?;
    let cost = token_cost_report(&records, baseline);
    let text = format!("{}\n{}", report.render_text(), cost.render_text());
    print!("{text}");
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("report.txt"), &text)?;
    let json = serde_json::json!({ "pass_at_k": report, "token_cost": cost });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(0)
}

pub fn audit(cfg: &RunConfig, dataset: Option<PathBuf>, transcripts: &[PathBuf], cancel: &CancelToken) -> Result<u8> {
    let default = cfg.out("dataset.jsonl");
    let input = require(Some(dataset.as_ref().or(cfg.paths.dataset.as_ref()).unwrap_or(&default)), "dataset")?;
    for t in transcripts {
        require(Some(t), "transcripts file")?;
    }
    let sim = simulator(cfg)?;
    let records: Vec<DatasetRecord> = read_all(&input)?;
    let report = audit_dataset(&records, &sim, cfg.width, cancel);
    let mut violations = report.violations.clone();

    let testbenches: HashMap<String, String> = records
        .iter()
        .filter_map(|r| match r {
            DatasetRecord::Tuple(t) => Some((t.id.clone(), t.testbench.text.clone())),
            DatasetRecord::Curriculum(_) => None,
        })
        .collect();
    let mut turns_checked = 0;
    for path in transcripts {
        let entries: Vec<TranscriptEntry> = read_all(path)?;
        turns_checked += entries.iter().map(|e| e.turns.len()).sum::<usize>();
        violations.extend(hygiene_violations(&entries, &testbenches));
    }

    let mut out = std::io::stdout().lock();
    writeln!(out, "records checked: {}", report.checked)?;
    if !transcripts.is_empty() {
        writeln!(out, "transcript turns checked: {turns_checked}")?;
    }
    writeln!(out, "{} violations", violations.len())?;
    for v in &violations {
        writeln!(out, "  {}: {}", v.record_id, v.reason)?;
    }
    if report.checked < records.len() {
        bail!("audit interrupted after {} of {} records", report.checked, records.len());
    }
    Ok(if violations.is_empty() { 0 } else { 1 })
}

pub fn similarity(a: &Path, b: &Path, label_a: Option<&str>, label_b: Option<&str>) -> Result<u8> {
    let sa = EmbeddingSet::from_jsonl(a, label_a)?;
    let sb = EmbeddingSet::from_jsonl(b, label_b)?;
    let s = centroid_similarity(&sa, &sb)?;
    println!(
        "centroid cosine similarity ({}: {} vector(s), {}: {} vector(s)): {s:.6}",
        sa.label,
        sa.vectors.len(),
        sb.label,
        sb.vectors.len()
    );
    Ok(0)
}
