#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::process::{Command, Output};

use veriloop::inference::{Budget, Strategy};
use veriloop::jsonl::Appender;
use veriloop::pipeline::DatasetRecord;
use veriloop_cli::config::{Overrides, RunConfig};

fn veriloop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_veriloop"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let global = ["--config", "--seed", "--serial", "--out-dir"];
    let per_command: [(&str, &[&str]); 7] = [
        ("phase1", &["--seeds"]),
        ("phase2", &["--dataset"]),
        ("export", &["--dataset", "--tasks", "--seq-cap", "--output"]),
        ("infer", &["--strategy", "--budget", "--n", "--topp", "--suite", "--output"]),
        ("eval", &["--suite", "--results", "--baseline"]),
        ("audit", &["--dataset", "--transcripts"]),
        ("similarity", &["--label-a", "--label-b"]),
    ];
    let top = veriloop(&["--help"], dir.path());
    assert!(top.status.success());
    for (cmd, flags) in per_command {
        assert!(stdout(&top).contains(cmd), "{cmd} missing from top-level help");
        let o = veriloop(&[cmd, "--help"], dir.path());
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        let text = stdout(&o);
        for f in global.iter().chain(flags) {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn flags_override_file_override_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "seed = 5\nwidth = 3\n[strategy]\nstrategy = \"agentic\"\nbudget = 2\nn = 7\n\
         [sampling.eval]\ntop_p = 0.9\n[paths]\nsuite = \"bench/suite.toml\"\n",
    )
    .unwrap();

    let defaults = RunConfig::default();
    assert_eq!((defaults.seed, defaults.width, defaults.strategy.n), (0, 4, 20));
    assert_eq!(defaults.strategy.strategy, Strategy::Regular);
    assert_eq!(defaults.sampling.eval.top_p, 1.0);

    let mut file = RunConfig::load(&path).unwrap();
    assert_eq!((file.seed, file.width, file.strategy.n), (5, 3, 7));
    assert_eq!(file.strategy.budget, Some(Budget::Bounded(2)));
    assert_eq!(file.sampling.eval.top_p, 0.9);
    assert_eq!(file.paths.suite.as_deref(), Some(dir.path().join("bench/suite.toml").as_path()));
    // Untouched keys keep their defaults.
    assert_eq!(file.pipeline.attempts, 4);
    assert_eq!(file.sampling.teacher.top_p, 1.0);

    file.apply(&Overrides {
        seed: Some(9),
        budget: Some(Budget::Unbounded),
        n: Some(2),
        top_p: Some(1.0),
        ..Overrides::default()
    });
    assert_eq!((file.seed, file.width, file.strategy.n), (9, 3, 2));
    assert_eq!(file.strategy.budget, Some(Budget::Unbounded));
    assert_eq!(file.strategy.strategy, Strategy::Agentic);
    assert_eq!(file.sampling.eval.top_p, 1.0);

    file.apply(&Overrides {
        serial: true,
        ..Overrides::default()
    });
    assert!(file.deterministic);
    assert_eq!(file.width, 1);
    assert!(file.pipeline_config().width == 1 && !file.pipeline_config().parallel_branches);
}

#[test]
fn invalid_configs_are_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("typo.toml"), "sed = 1\n").unwrap();
    let o = veriloop(&["--config", "typo.toml", "audit"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("typo.toml"));

    std::fs::write(dir.path().join("budget.toml"), "[strategy]\nbudget = 3\n").unwrap();
    let o = veriloop(&["--config", "budget.toml", "infer"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("agentic"), "{}", stderr(&o));

    let o = veriloop(&["infer", "--topp", "1.5", "--suite", "nowhere.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("top_p"));

    let o = veriloop(&["phase1", "--seeds", "missing.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.jsonl"));
}

#[test]
fn missing_simulator_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = support::phase1_scenario();
    std::fs::write(dir.path().join("teacher.json"), serde_json::to_string(&scenario.script).unwrap()).unwrap();
    let seeds = Appender::create(&dir.path().join("seeds.jsonl")).unwrap();
    for s in &scenario.seeds {
        seeds.append(s).unwrap();
    }
    std::fs::write(
        dir.path().join("run.toml"),
        "[teacher]\nkind = \"scripted\"\nscript_file = \"teacher.json\"\n\
         [harness]\ntoolchain = \"icarus\"\niverilog = \"/nonexistent/iverilog\"\nvvp = \"/nonexistent/vvp\"\n\
         [paths]\nseeds = \"seeds.jsonl\"\n",
    )
    .unwrap();
    let o = veriloop(&["--config", "run.toml", "phase1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
    assert!(!dir.path().join("veriloop-out/dataset.jsonl").exists());
}

#[test]
fn similarity_of_identical_files_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let lines = "{\"label\":\"x\",\"vector\":[0.3,0.1,2.0]}\n{\"label\":\"x\",\"vector\":[1.0,0.0,0.5]}\n";
    std::fs::write(dir.path().join("a.jsonl"), lines).unwrap();
    std::fs::write(dir.path().join("b.jsonl"), lines).unwrap();
    let o = veriloop(&["similarity", "a.jsonl", "b.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).trim_end().ends_with("1.000000"), "{}", stdout(&o));

    std::fs::write(dir.path().join("c.jsonl"), "{\"label\":\"x\",\"vector\":[1.0]}\n").unwrap();
    let o = veriloop(&["similarity", "a.jsonl", "c.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"));
}

#[test]
fn export_writes_samples_and_honours_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let data = Appender::create(&dir.path().join("d.jsonl")).unwrap();
    data.append(&DatasetRecord::Tuple(support::tuple("adder", "T", "adder"))).unwrap();
    data.append(&DatasetRecord::Tuple(support::tuple("mux", "T", "mux2"))).unwrap();
    let o = veriloop(&["export", "--dataset", "d.jsonl", "--output", "sft.jsonl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("solve 2"));
    let lines = std::fs::read_to_string(dir.path().join("sft.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
    let o = veriloop(&["export", "--dataset", "d.jsonl", "--seq-cap", "5", "--output", "sft.jsonl"], dir.path());
    assert!(stdout(&o).contains("over the cap: 2"));
    let o = veriloop(&["export", "--dataset", "d.jsonl", "--tasks", "test"], dir.path());
    assert!(stdout(&o).contains("solve 0"));
    let o = veriloop(&["export", "--dataset", "d.jsonl", "--tasks", "review"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn audit_names_a_corrupted_record() {
    let dir = tempfile::tempdir().unwrap();
    let good = support::tuple("adder-ok", "T", "adder");
    let mut bad = support::tuple("adder-bad", "T", "adder");
    bad.code.text = support::mutant("adder");
    let data = Appender::create(&dir.path().join("d.jsonl")).unwrap();
    data.append(&DatasetRecord::Tuple(good)).unwrap();
    data.append(&DatasetRecord::Tuple(bad)).unwrap();
    let o = veriloop(&["audit", "--dataset", "d.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("1 violations"), "{text}");
    assert!(text.contains("adder-bad"));
    assert!(!text.contains("adder-ok:"));
}
