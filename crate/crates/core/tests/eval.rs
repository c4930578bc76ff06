mod support;

use std::path::Path;

use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use support::*;
use veriloop::eval::{
    centroid_similarity, pass_at_k, score_run, token_cost_report, EmbeddingSet, ScoreError, SimilarityError, Suite,
};
use veriloop::harness::HarnessConfig;
use veriloop::inference::{Budget, SessionRecord, SessionTerminal, SessionTranscript, Strategy};
use veriloop::pool::CancelToken;
use veriloop::Simulator;

/// Fraction of the k-subsets of n samples (the first c correct) that
/// contain a correct sample, by enumeration.
fn brute_pass_at_k(n: u32, c: u32, k: u32) -> f64 {
    let correct_mask: u64 = (1u64 << c) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for s in 0u64..(1u64 << n) {
        if s.count_ones() != k {
            continue;
        }
        total += 1;
        hit += (s & correct_mask != 0) as u64;
    }
    hit as f64 / total as f64
}

#[test]
fn pass_at_k_matches_enumeration_for_small_n() {
    for n in 1..=8 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(n, c, k).unwrap();
                let want = brute_pass_at_k(n, c, k);
                assert!((got - want).abs() <= 1e-12, "n={n} c={c} k={k}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn pass_at_k_spot_values() {
    assert!((pass_at_k(5, 2, 2).unwrap() - 0.7).abs() < 1e-12);
    let want = brute_pass_at_k(20, 3, 5);
    let got = pass_at_k(20, 3, 5).unwrap();
    assert!((got - want).abs() < 1e-12);
    assert!((got - 0.6009).abs() < 1e-4);
    assert_eq!(pass_at_k(20, 0, 3).unwrap(), 0.0);
    assert_eq!(pass_at_k(20, 20, 1).unwrap(), 1.0);
}

fn toy_suite(dir: &Path) -> Suite {
    for (id, name) in [("adder", "adder"), ("mux", "mux2")] {
        let d = dir.join("problems").join(id);
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("prompt.txt"), format!("Implement {name}.")).unwrap();
        std::fs::write(d.join("tb.v"), tb(name)).unwrap();
        std::fs::write(d.join("ref.v"), dut(name)).unwrap();
    }
    std::fs::write(
        dir.join("suite.toml"),
        "name = \"toy\"\n[layout]\nroot = \"problems\"\nreference = \"ref.v\"\n",
    )
    .unwrap();
    Suite::load(&dir.join("suite.toml")).unwrap()
}

fn record(problem: &str, sample: u32, code: Option<String>) -> SessionRecord {
    SessionRecord {
        problem_id: problem.into(),
        sample,
        strategy: Strategy::Regular,
        budget: None,
        seed: sample as u64,
        code,
        transcript: SessionTranscript {
            turns: Vec::new(),
            total_completion_tokens: 10,
            interactions_used: 0,
            terminal: SessionTerminal::SingleShot,
        },
        error: None,
    }
}

#[test]
fn suite_loads_layouts_and_inline_problems() {
    let dir = tempfile::tempdir().unwrap();
    let suite = toy_suite(dir.path());
    assert_eq!(suite.items.len(), 2);
    assert_eq!(suite.items[0].id, "adder");
    assert!(suite.items[1].reference.is_some());

    std::fs::write(dir.path().join("tb.v"), tb("adder")).unwrap();
    std::fs::write(
        dir.path().join("inline.toml"),
        "name = \"inline\"\nfamily = \"completion\"\nadapter = { kind = \"markers\", pass = [\"OK\"], fail = [\"BAD\"] }\n\
         [[problems]]\nid = \"p1\"\nprompt = \"Add.\"\ntestbench = \"tb.v\"\n",
    )
    .unwrap();
    let inline = Suite::load(&dir.path().join("inline.toml")).unwrap();
    assert_eq!(inline.items[0].prompt, "Add.");
    assert_eq!(inline.items[0].family, veriloop::eval::Family::Completion);

    std::fs::write(
        dir.path().join("bad.toml"),
        "name = \"bad\"\n[[problems]]\nid = \"p1\"\ntestbench = \"tb.v\"\n",
    )
    .unwrap();
    assert!(Suite::load(&dir.path().join("bad.toml")).is_err());
}

#[test]
fn scoring_against_golden_testbenches() {
    let dir = tempfile::tempdir().unwrap();
    let suite = toy_suite(dir.path());
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let cancel = CancelToken::new();

    for (id, outcome) in suite.check_references(&sim) {
        assert!(outcome.unwrap().passed(), "{id}");
    }

    let one_each = vec![record("adder", 0, Some(dut("adder"))), record("mux", 0, Some(mutant("mux2")))];
    let r = score_run(&one_each, &suite, &sim, 1, &cancel).unwrap();
    assert_eq!(r.n, 1);
    assert_eq!(r.mean.keys().copied().collect::<Vec<_>>(), [1]);
    assert!((r.mean[&1] - 50.0).abs() < 1e-9);

    let nothing = vec![record("adder", 0, None), record("mux", 0, None)];
    let r = score_run(&nothing, &suite, &sim, 1, &cancel).unwrap();
    assert_eq!(r.mean[&1], 0.0);

    // adder: c = 1 of 3; mux: c = 2 of 3.
    let mixed = vec![
        record("adder", 0, Some(dut("adder"))),
        record("adder", 1, Some(mutant("adder"))),
        record("adder", 2, None),
        record("mux", 0, Some(dut("mux2"))),
        record("mux", 1, None),
        record("mux", 2, Some(dut("mux2"))),
    ];
    let before = mixed.clone();
    let r = score_run(&mixed, &suite, &sim, 1, &cancel).unwrap();
    assert_eq!(mixed, before);
    let cs: Vec<u32> = r.problems.iter().map(|p| p.c).collect();
    assert_eq!(cs, [1, 2]);
    for k in [1, 3] {
        let want = 100.0 * (pass_at_k(3, 1, k).unwrap() + pass_at_k(3, 2, k).unwrap()) / 2.0;
        assert!((r.mean[&k] - want).abs() < 1e-9);
    }
    assert!(!r.mean.contains_key(&5));
    assert!(r.render_text().contains("pass@3"));
    let again = score_run(&mixed, &suite, &sim, 1, &cancel).unwrap();
    assert_eq!(r, again);

    let short = vec![record("adder", 0, None), record("adder", 1, None), record("mux", 0, None)];
    assert!(matches!(
        score_run(&short, &suite, &sim, 1, &cancel),
        Err(ScoreError::MissingSamples { ref problem, expected: 2, found: 1 }) if problem == "mux"
    ));
    let stray = vec![record("adder", 0, None), record("mux", 0, None), record("other", 0, None)];
    assert!(matches!(
        score_run(&stray, &suite, &sim, 1, &cancel),
        Err(ScoreError::UnknownProblem(_))
    ));
}

fn set(label: &str, vectors: Vec<Vec<f64>>) -> EmbeddingSet {
    EmbeddingSet {
        label: label.into(),
        vectors,
    }
}

#[test]
fn centroid_examples() {
    let a = set("a", vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let b = set("b", vec![vec![1.0, 1.0]]);
    assert!((centroid_similarity(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    let c = set("c", vec![vec![1.0, 0.0]]);
    assert!((centroid_similarity(&a, &c).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(matches!(
        centroid_similarity(&a, &set("d", vec![vec![1.0, 0.0, 0.0]])),
        Err(SimilarityError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        centroid_similarity(&a, &set("e", vec![vec![1.0, 0.0], vec![-1.0, 0.0]])),
        Err(SimilarityError::DegenerateCentroid(_))
    ));
    assert!(matches!(
        centroid_similarity(&a, &set("f", vec![vec![1.0, 0.0], vec![1.0]])),
        Err(SimilarityError::DimensionMismatch { .. })
    ));
    assert!(matches!(centroid_similarity(&a, &set("g", vec![])), Err(SimilarityError::Empty(_))));
}

#[test]
fn embeddings_load_from_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.jsonl");
    std::fs::write(
        &p,
        "{\"label\":\"ours\",\"vector\":[1,0]}\n{\"label\":\"bench\",\"vector\":[0,1]}\n{\"label\":\"ours\",\"vector\":[0,1]}\n",
    )
    .unwrap();
    let ours = EmbeddingSet::from_jsonl(&p, None).unwrap();
    assert_eq!(ours.label, "ours");
    assert_eq!(ours.vectors.len(), 2);
    let bench = EmbeddingSet::from_jsonl(&p, Some("bench")).unwrap();
    assert!((centroid_similarity(&ours, &bench).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    assert!(EmbeddingSet::from_jsonl(&p, Some("none")).is_err());
}

fn vectors(dim: usize) -> impl proptest::strategy::Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..10.0, dim), 1..6)
}

proptest! {
    #[test]
    fn similarity_is_symmetric_and_scale_invariant(
        (a, b) in (1usize..6).prop_flat_map(|d| (vectors(d), vectors(d))),
        lambda in 0.001f64..1000.0,
    ) {
        let sa = set("a", a.clone());
        let sb = set("b", b);
        let ab = centroid_similarity(&sa, &sb).unwrap();
        let ba = centroid_similarity(&sb, &sa).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        let scaled = set("a", a.iter().map(|v| v.iter().map(|x| x * lambda).collect()).collect());
        prop_assert!((centroid_similarity(&scaled, &sb).unwrap() - ab).abs() < 1e-12);
        prop_assert!((centroid_similarity(&sa, &sa).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }
}

fn costed(strategy: Strategy, budget: Option<Budget>, tokens: &[u64]) -> SessionRecord {
    let mut r = record("p", 0, None);
    r.strategy = strategy;
    r.budget = budget;
    r.transcript.turns = tokens
        .iter()
        .map(|&t| veriloop::agents::Turn {
            agent: veriloop::agents::AgentRole::Solution,
            template: "solve.v1".into(),
            prompt: Vec::new(),
            reply: veriloop::ChatMessage::assistant("", None),
            prompt_tokens: 0,
            completion_tokens: t,
            finish_reason: veriloop::gateway::FinishReason::Stop,
        })
        .collect();
    r.transcript.total_completion_tokens = tokens.iter().sum();
    r
}

#[test]
fn token_cost_ratios() {
    let rs = vec![
        costed(Strategy::Regular, None, &[100]),
        costed(Strategy::Regular, None, &[60, 40]),
        costed(Strategy::Agentic, Some(Budget::Bounded(3)), &[50, 70]),
    ];
    let report = token_cost_report(&rs, "regular");
    let agentic = report.rows.iter().find(|r| r.label == "agentic(b=3)").unwrap();
    assert!((agentic.ratio.unwrap() - 1.2).abs() < 1e-12);
    let regular = report.rows.iter().find(|r| r.label == "regular").unwrap();
    assert_eq!(regular.ratio, Some(1.0));
    assert_eq!(regular.sessions, 2);
    assert!(report.render_text().contains("agentic(b=3)"));

    let single = token_cost_report(&rs[..1], "regular");
    assert_eq!(single.rows[0].ratio, Some(1.0));
    let missing = token_cost_report(&rs[2..], "regular");
    assert_eq!(missing.rows[0].ratio, None);
}

proptest! {
    #[test]
    fn token_cost_matches_turn_level_recomputation(
        sessions in prop::collection::vec((0usize..3, prop::collection::vec(1u64..500, 1..5)), 1..30),
    ) {
        let strategies = [Strategy::Regular, Strategy::DeepThinking, Strategy::Agentic];
        let mut rs: Vec<SessionRecord> = sessions
            .iter()
            .map(|(s, t)| {
                let b = (strategies[*s] == Strategy::Agentic).then_some(Budget::Bounded(2));
                costed(strategies[*s], b, t)
            })
            .collect();
        rs.push(costed(Strategy::Regular, None, &[7]));
        let report = token_cost_report(&rs, "regular");
        let mean_of = |label: &str| {
            let turns: Vec<u64> = sessions
                .iter()
                .filter(|(s, _)| veriloop::eval::run_label(&costed(strategies[*s], (strategies[*s] == Strategy::Agentic).then_some(Budget::Bounded(2)), &[])) == label)
                .map(|(_, t)| t.iter().sum::<u64>())
                .chain((label == "regular").then_some(7))
                .collect();
            turns.iter().sum::<u64>() as f64 / turns.len() as f64
        };
        let base = mean_of("regular");
        for row in &report.rows {
            let m = mean_of(&row.label);
            prop_assert!((row.mean_completion_tokens - m).abs() < 1e-9);
            prop_assert!((row.ratio.unwrap() - m / base).abs() < 1e-9);
        }
    }
}
