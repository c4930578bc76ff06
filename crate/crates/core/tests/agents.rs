use std::path::PathBuf;
use std::time::Duration;

use veriloop::agents::{
    AgentError, AgentRole, Agents, CodeOutput, CompiledSource, ErrorReport, Fault, FaultOutput, PromptSet,
    RefinedProblem, RevisionOutput, TestCase, TestReport, Turn, Verdict,
};
use veriloop::gateway::{Backend, BackendSpec, SamplingParams, ScriptedResponse};
use veriloop::harness::{
    embed_in_fence, parse_interface, HarnessConfig, Origin, SimStatus, SimulationOutcome, Simulator, VerilogSource,
};

fn fixture(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn scripted(responses: Vec<ScriptedResponse>) -> Backend {
    Backend::new(BackendSpec::scripted(responses)).unwrap()
}

fn adder_problem() -> RefinedProblem {
    let code = fixture("designs/adder/dut.v");
    RefinedProblem {
        statement: "Design module `add` with 2-bit inputs a and b and a 3-bit output s = a + b.".into(),
        interface: parse_interface(&code).unwrap(),
        source_id: "adder".into(),
        names_only: false,
    }
}

fn fence(code: &str) -> String {
    embed_in_fence(code, "verilog")
}

fn fail_report() -> TestReport {
    TestReport::compose(
        "a=1,b=1 gives 0 because of the minus",
        "",
        vec![TestCase {
            scenario: "a=1, b=1".into(),
            expected: "s=2".into(),
            observed: "s=0".into(),
        }],
        Verdict::Fail,
    )
}

#[test]
fn revise_produces_a_problem_with_the_code_interface() {
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let code = CompiledSource::verify(&sim, VerilogSource::new(fixture("designs/adder/dut.v"), Origin::SeedCorpus)).unwrap();
    let reply = RevisionOutput {
        behavior: "Adds two 2-bit numbers.".into(),
        statement: "Implement `add` with inputs a, b (2 bits) and output s (3 bits) equal to a + b.".into(),
    };
    let backend = scripted(vec![ScriptedResponse::text(reply.render())]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let mut log = Vec::new();
    let p = Agents::new(&backend, &prompts, &params)
        .revise("make an adder", &code, "seed-0", &mut log)
        .unwrap();
    assert_eq!(p.statement, reply.statement);
    assert_eq!(p.interface.module_name, "add");
    assert_eq!(p.interface.ports.len(), 3);
    assert_eq!(log.len(), 1);
    let prompt = log[0].prompt_text();
    for ex in prompts.exemplars() {
        assert!(prompt.contains(&ex.statement), "exemplar {} missing", ex.name);
    }
    assert!(prompt.contains("module add(input [1:0] a, input [1:0] b, output [2:0] s);"));
}

#[test]
fn revise_rejects_a_seed_that_does_not_compile() {
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let bad = VerilogSource::new("module add(input a; endmodule", Origin::SeedCorpus);
    assert!(matches!(CompiledSource::verify(&sim, bad), Err(AgentError::NotCompilable(_))));
}

#[test]
fn revise_missing_a_port_twice_rejects_the_seed() {
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let code = CompiledSource::verify(&sim, VerilogSource::new(fixture("designs/adder/dut.v"), Origin::SeedCorpus)).unwrap();
    let reply = RevisionOutput {
        behavior: "Adds.".into(),
        statement: "Implement `add` with inputs a and b.".into(),
    }
    .render();
    let backend = scripted(vec![ScriptedResponse::text(reply.clone()), ScriptedResponse::text(reply)]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let mut log = Vec::new();
    let err = Agents::new(&backend, &prompts, &params)
        .revise("adder", &code, "seed-0", &mut log)
        .unwrap_err();
    match err {
        AgentError::InterfaceMismatch { missing } => assert_eq!(missing, vec!["s".to_string()]),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(log.len(), 2);
    assert!(log[1].prompt_text().contains("does not mention s"));
}

#[test]
fn solve_splits_reasoning_and_code() {
    let adder = fixture("designs/adder/dut.v");
    let backend = scripted(vec![
        ScriptedResponse::text(format!("<think>sum needs a carry</think>Here it is.\n{}", fence(&adder))),
        ScriptedResponse::text("I would use an assign statement."),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let mut log = Vec::new();
    let p = adder_problem();
    let s = agents.solve(&p.statement, None, &mut log).unwrap();
    assert_eq!(s.reasoning, "sum needs a carry");
    assert_eq!(s.code.text, adder);
    assert_eq!(s.code.origin, Origin::SolutionAgent);
    assert!(matches!(agents.solve(&p.statement, None, &mut log), Err(AgentError::NoCodeBlock)));
    assert_eq!(log[0].prompt.last().unwrap().content, p.statement);
    let tb_blame = ErrorReport {
        fault: Fault::Testbench,
        evidence: String::new(),
        rationale: String::new(),
        defaulted: false,
    };
    assert!(matches!(
        agents.solve(&p.statement, Some(&tb_blame), &mut log),
        Err(AgentError::Precondition(_))
    ));
}

#[test]
fn solve_retry_prompt_is_the_fresh_prompt() {
    let adder = fixture("designs/adder/dut.v");
    let backend = scripted(vec![ScriptedResponse::text(fence(&adder)), ScriptedResponse::text(fence(&adder))]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let mut log = Vec::new();
    agents.solve(&p.statement, None, &mut log).unwrap();
    let blame = ErrorReport {
        fault: Fault::Solution,
        evidence: "TEST_FAILED: a=1 b=1 expected s=2 got 0".into(),
        rationale: "subtracts".into(),
        defaulted: false,
    };
    agents.solve(&p.statement, Some(&blame), &mut log).unwrap();
    assert_eq!(log[0].prompt, log[1].prompt);
    assert!(!log[1].prompt_text().contains("TEST_FAILED"));
}

#[test]
fn testbench_generation_and_self_contained_rejection() {
    let tb = fixture("designs/adder/tb.v");
    let dut = fixture("designs/adder/dut.v");
    let selfish = format!("{dut}\n{tb}");
    let backend = scripted(vec![
        ScriptedResponse::text(fence(&tb)),
        ScriptedResponse::text(fence(&selfish)),
        ScriptedResponse::text(fence(&selfish)),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let mut log = Vec::new();
    let got = agents.gen_testbench(&p, None, &mut log).unwrap();
    assert_eq!(got.text, tb);
    assert!(got.text.contains("ALL_TESTS_PASSED"));
    let err = agents.gen_testbench(&p, None, &mut log).unwrap_err();
    assert!(matches!(err, AgentError::SelfContainedDut { ref module } if module == "add"));
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|t| t.agent == AgentRole::Testbench));
}

#[test]
fn testbench_repair_round_fixes_port_order() {
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let good_tb = fixture("designs/adder/tb.v");
    let wrong_order = good_tb.replace("add dut(.a(a), .b(b), .s(s));", "add dut(s, a, b);");
    assert_ne!(wrong_order, good_tb);
    let dut = VerilogSource::new(fixture("designs/adder/dut.v"), Origin::SolutionAgent);
    let broken = VerilogSource::new(wrong_order.clone(), Origin::TestbenchAgent);
    let outcome = sim.simulate(&dut, &broken, Duration::from_secs(20)).unwrap();
    assert_ne!(outcome.status, SimStatus::Pass);

    let backend = scripted(vec![
        ScriptedResponse::text(FaultOutput { fault: Fault::Testbench, rationale: "ports connected positionally in the wrong order".into() }.render()),
        ScriptedResponse::text(fence(&good_tb)),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let mut log = Vec::new();
    let report = agents.arbitrate(&p, &dut, &broken, &outcome, &mut log).unwrap();
    assert_eq!(report.fault, Fault::Testbench);
    assert!(!report.defaulted);
    let repaired = agents.gen_testbench(&p, Some((&broken, &report)), &mut log).unwrap();
    assert!(log[1].prompt_text().contains(wrong_order.trim_end()));
    assert!(log[1].prompt_text().contains("FAULT: TESTBENCH"));
    assert_eq!(sim.simulate(&dut, &repaired, Duration::from_secs(20)).unwrap().status, SimStatus::Pass);
}

fn failing_outcome() -> SimulationOutcome {
    SimulationOutcome {
        status: SimStatus::TestFailure,
        tool_stdout: "TEST_FAILED: a=1 b=1 expected s=2 got 0\n".into(),
        tool_stderr: String::new(),
        wall_time: Duration::ZERO,
    }
}

#[test]
fn arbiter_falls_back_to_blaming_the_solution() {
    let backend = scripted(vec![
        ScriptedResponse::text("Hard to say."),
        ScriptedResponse::text("Still unsure."),
        ScriptedResponse::text("FAULT: SOLUTION\nThe design subtracts."),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let dut = VerilogSource::new(fixture("designs/adder/mutant.v"), Origin::SolutionAgent);
    let tb = VerilogSource::new(fixture("designs/adder/tb.v"), Origin::TestbenchAgent);
    let mut log = Vec::new();
    let r = agents.arbitrate(&p, &dut, &tb, &failing_outcome(), &mut log).unwrap();
    assert_eq!(r.fault, Fault::Solution);
    assert!(r.defaulted);
    assert_eq!(log.len(), 2);
    let r = agents.arbitrate(&p, &dut, &tb, &failing_outcome(), &mut log).unwrap();
    assert_eq!((r.fault, r.defaulted), (Fault::Solution, false));
    assert!(r.evidence.contains("TEST_FAILED"));

    let passing = SimulationOutcome {
        status: SimStatus::Pass,
        ..failing_outcome()
    };
    assert!(matches!(
        agents.arbitrate(&p, &dut, &tb, &passing, &mut log),
        Err(AgentError::Precondition(_))
    ));
}

#[test]
fn test_review_parses_verdicts_and_discards_after_two_misses() {
    let pass = TestReport::compose(
        "check",
        "",
        vec![TestCase {
            scenario: "a=3, b=3".into(),
            expected: "s=6".into(),
            observed: "s=6".into(),
        }],
        Verdict::Pass,
    );
    let fail = fail_report();
    let backend = scripted(vec![
        ScriptedResponse::with_reasoning(pass.body.clone(), pass.reasoning.clone()),
        ScriptedResponse::with_reasoning(fail.body.clone(), fail.reasoning.clone()),
        ScriptedResponse::text("Looks right to me."),
        ScriptedResponse::text("Yes, it is fine."),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let code = VerilogSource::new(fixture("designs/adder/dut.v"), Origin::SolutionAgent);
    let mut log = Vec::new();
    assert_eq!(agents.test_review(&p.statement, &code, &mut log).unwrap(), pass);
    let got = agents.test_review(&p.statement, &code, &mut log).unwrap();
    assert_eq!(got.verdict, Verdict::Fail);
    assert!(!got.cases.is_empty());
    assert!(matches!(
        agents.test_review(&p.statement, &code, &mut log),
        Err(AgentError::UnparsableVerdict(_))
    ));
    assert_eq!(log.len(), 4);
}

#[test]
fn debug_patch_passes_the_testbench() {
    let sim = Simulator::new(HarnessConfig::default()).unwrap();
    let good = fixture("designs/adder/dut.v");
    let backend = scripted(vec![
        ScriptedResponse::with_reasoning(fence(&good), "replace - with +"),
        ScriptedResponse::text("just change the operator"),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let mutant = VerilogSource::new(fixture("designs/adder/mutant.v"), Origin::SolutionAgent);
    let report = fail_report();
    let mut log = Vec::new();
    let patch = agents.debug(&p.statement, &mutant, &report, &mut log).unwrap();
    assert_eq!(patch.reasoning, "replace - with +");
    assert_eq!(patch.code.origin, Origin::DebugAgent);
    let tb = VerilogSource::new(fixture("designs/adder/tb.v"), Origin::TestbenchAgent);
    assert_eq!(sim.simulate(&patch.code, &tb, Duration::from_secs(20)).unwrap().status, SimStatus::Pass);
    assert!(matches!(
        agents.debug(&p.statement, &mutant, &report, &mut log),
        Err(AgentError::NoCodeBlock)
    ));
    let passing = TestReport {
        verdict: Verdict::Pass,
        ..report
    };
    assert!(matches!(
        agents.debug(&p.statement, &mutant, &passing, &mut log),
        Err(AgentError::Precondition(_))
    ));
}

#[test]
fn solve_and_review_prompts_never_carry_the_testbench() {
    let tb = fixture("designs/adder/tb.v");
    let adder = fixture("designs/adder/dut.v");
    let backend = scripted(vec![
        ScriptedResponse::text(fence(&adder)),
        ScriptedResponse::text(fail_report().body),
    ]);
    let prompts = PromptSet::builtin();
    let params = SamplingParams::default();
    let agents = Agents::new(&backend, &prompts, &params);
    let p = adder_problem();
    let mut log: Vec<Turn> = Vec::new();
    let s = agents.solve(&p.statement, None, &mut log).unwrap();
    agents.test_review(&p.statement, &s.code, &mut log).unwrap();
    for t in &log {
        assert!(!t.prompt_text().contains(tb.trim()));
        assert!(!t.prompt_text().contains("$finish"));
    }
}

#[test]
fn exemplar_outputs_round_trip_through_parsers() {
    for ex in PromptSet::builtin().exemplars() {
        let parsed = RevisionOutput::parse(&ex.answer()).unwrap();
        assert_eq!(parsed.behavior, ex.behavior);
        assert_eq!(parsed.statement, ex.statement);
        let code = CodeOutput {
            reasoning: ex.behavior.clone(),
            code: ex.code.clone(),
        };
        assert_eq!(CodeOutput::parse(Some(&ex.behavior), &code.render()), Some(code));
    }
}
