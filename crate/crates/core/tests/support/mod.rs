//! Fixture loading and scripted replay scenarios shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use veriloop::agents::{prompts, Fault, FaultOutput, PromptSet, RefinedProblem, RevisionOutput, TestCase, TestReport, Verdict};
use veriloop::gateway::{Script, ScriptRoute, ScriptedResponse};
use veriloop::harness::{embed_in_fence, parse_interface, Origin, VerilogSource};
use veriloop::pipeline::{AcceptPath, Provenance, SeedPair, Terminal, TrainingTuple, TupleKind};

/// The core crate's fixtures, also when compiled into another crate's tests.
pub fn fixture_dir() -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let local = here.join("fixtures");
    if local.is_dir() {
        local
    } else {
        here.join("../core/fixtures")
    }
}

pub fn fixture(rel: &str) -> String {
    let p = fixture_dir().join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn dut(name: &str) -> String {
    fixture(&format!("designs/{name}/dut.v"))
}

pub fn mutant(name: &str) -> String {
    fixture(&format!("designs/{name}/mutant.v"))
}

pub fn tb(name: &str) -> String {
    fixture(&format!("designs/{name}/tb.v"))
}

pub fn fence(code: &str) -> String {
    embed_in_fence(code, "verilog")
}

/// First sentence of a template's system prompt that no other template uses.
pub fn marker(id: &str) -> String {
    let set = PromptSet::builtin();
    let system = set.template(id).unwrap().system.clone().unwrap();
    let others: Vec<String> = [
        prompts::REVISE,
        prompts::SOLVE,
        prompts::TESTBENCH,
        prompts::TESTBENCH_REPAIR,
        prompts::ARBITRATE,
        prompts::TEST_REVIEW,
        prompts::DEBUG,
        prompts::REGULAR,
        prompts::DEEP_THINKING,
    ]
    .iter()
    .filter(|o| **o != id)
    .filter_map(|o| set.template(o).unwrap().system.clone())
    .collect();
    system
        .split(". ")
        .map(str::trim)
        .find(|s| !s.is_empty() && others.iter().all(|o| !o.contains(*s)))
        .unwrap_or_else(|| panic!("template {id} has no distinctive sentence"))
        .to_string()
}

/// A statement naming the module and every port, tagged with `tag`.
pub fn statement_for(tag: &str, code: &str) -> String {
    let iface = parse_interface(code).unwrap();
    let ports: Vec<String> = iface
        .ports
        .iter()
        .map(|p| format!("{} {} ({} bit)", p.direction.keyword(), p.name, p.width))
        .collect();
    format!(
        "{tag}: Design module `{}` with ports {}. Interface: `{}`",
        iface.module_name,
        ports.join(", "),
        iface.render_header()
    )
}

fn route(contains: &[&str], responses: Vec<ScriptedResponse>) -> ScriptRoute {
    ScriptRoute::new(contains, responses)
}

fn text(s: impl Into<String>) -> ScriptedResponse {
    ScriptedResponse::text(s)
}

fn think(content: impl Into<String>, reasoning: &str) -> ScriptedResponse {
    ScriptedResponse::with_reasoning(content, reasoning)
}

fn revision(tag: &str, code: &str) -> ScriptedResponse {
    text(
        RevisionOutput {
            behavior: format!("{tag} behaviour as implemented by the reference."),
            statement: statement_for(tag, code),
        }
        .render(),
    )
}

pub fn report(verdict: Verdict, observed: &str) -> TestReport {
    TestReport::compose(
        "Walk through representative inputs.",
        "",
        vec![
            TestCase {
                scenario: "typical inputs".into(),
                expected: "output follows the specification".into(),
                observed: observed.into(),
            },
            TestCase {
                scenario: "boundary inputs".into(),
                expected: "output follows the specification".into(),
                observed: observed.into(),
            },
        ],
        verdict,
    )
}

fn review(verdict: Verdict) -> ScriptedResponse {
    let r = report(verdict, if verdict == Verdict::Pass { "matches" } else { "differs" });
    think(r.body, &r.reasoning)
}

fn fault(f: Fault) -> ScriptedResponse {
    text(
        FaultOutput {
            fault: f,
            rationale: format!("The {} does not follow the problem statement.", f.token().to_lowercase()),
        }
        .render(),
    )
}

/// The dff testbench with its reset check inverted, so a correct design fails.
pub fn broken_dff_tb() -> String {
    let t = tb("dff");
    let broken = t.replace("if (q !== 1'b0) begin", "if (q !== 1'b1) begin");
    assert_ne!(broken, t);
    broken
}

pub struct Phase1Scenario {
    pub seeds: Vec<SeedPair>,
    pub script: Script,
    pub expected: BTreeMap<Terminal, usize>,
    pub expected_paths: Vec<(&'static str, Terminal, Option<AcceptPath>)>,
}

/// Six seeds, one per terminal path of the code-generation phase.
pub fn phase1_scenario() -> Phase1Scenario {
    let m_revise = marker(prompts::REVISE);
    let m_solve = marker(prompts::SOLVE);
    let m_tb = marker(prompts::TESTBENCH);
    let m_repair = marker(prompts::TESTBENCH_REPAIR);
    let m_arb = marker(prompts::ARBITRATE);
    let seed = |id: &str, tag: &str, code: String| SeedPair {
        problem: format!("{tag}: loosely described design"),
        code,
        source: "toy".into(),
        id: Some(id.into()),
    };
    let seeds = vec![
        seed("adder-first", "P-ADDER", dut("adder")),
        seed("mux-retry", "P-MUX", dut("mux2")),
        seed("dff-repair", "P-DFF", dut("dff")),
        seed("counter-twice", "P-COUNTER", dut("counter")),
        seed("broken-compile", "P-BROKEN", "module broken(input a; endmodule\n".into()),
        seed("fsm-revision", "P-FSM", dut("fsm")),
    ];
    let mut routes = Vec::new();
    for (tag, name) in [("P-ADDER", "adder"), ("P-MUX", "mux2"), ("P-DFF", "dff"), ("P-COUNTER", "counter")] {
        routes.push(route(&[&m_revise, tag], vec![revision(tag, &dut(name))]));
    }
    // Statement that never mentions the `din` port.
    let fsm_bad = text(
        RevisionOutput {
            behavior: "Detects 101.".into(),
            statement: "P-FSM: Design module `seq101` with clk, rst and output detected.".into(),
        }
        .render(),
    );
    routes.push(route(&[&m_revise, "P-FSM"], vec![fsm_bad.clone(), fsm_bad]));

    routes.push(route(&[&m_solve, "P-ADDER"], vec![think(fence(&dut("adder")), "carry goes to s[2]")]));
    routes.push(route(&[&m_tb, "P-ADDER"], vec![text(fence(&tb("adder")))]));

    routes.push(route(
        &[&m_solve, "P-MUX"],
        vec![think(fence(&mutant("mux2")), "first try"), think(fence(&dut("mux2")), "second try")],
    ));
    routes.push(route(&[&m_tb, "P-MUX"], vec![text(fence(&tb("mux2")))]));
    routes.push(route(&[&m_arb, "P-MUX"], vec![fault(Fault::Solution)]));

    routes.push(route(&[&m_solve, "P-DFF"], vec![think(fence(&dut("dff")), "sync reset")]));
    routes.push(route(&[&m_tb, "P-DFF"], vec![text(fence(&broken_dff_tb()))]));
    routes.push(route(&[&m_arb, "P-DFF"], vec![fault(Fault::Testbench)]));
    routes.push(route(&[&m_repair, "P-DFF"], vec![text(fence(&tb("dff")))]));

    routes.push(route(
        &[&m_solve, "P-COUNTER"],
        vec![think(fence(&mutant("counter")), "a"), think(fence(&mutant("counter")), "b")],
    ));
    routes.push(route(&[&m_tb, "P-COUNTER"], vec![text(fence(&tb("counter")))]));
    routes.push(route(&[&m_arb, "P-COUNTER"], vec![fault(Fault::Solution)]));

    let expected = BTreeMap::from([
        (Terminal::Accepted, 3),
        (Terminal::DiscardedCompile, 1),
        (Terminal::DiscardedRevision, 1),
        (Terminal::DiscardedFailedTwice, 1),
    ]);
    let expected_paths = vec![
        ("adder-first", Terminal::Accepted, Some(AcceptPath::FirstAttempt)),
        ("mux-retry", Terminal::Accepted, Some(AcceptPath::SolutionRetry)),
        ("dff-repair", Terminal::Accepted, Some(AcceptPath::TestbenchRepair)),
        ("counter-twice", Terminal::DiscardedFailedTwice, None),
        ("broken-compile", Terminal::DiscardedCompile, None),
        ("fsm-revision", Terminal::DiscardedRevision, None),
    ];
    Phase1Scenario {
        seeds,
        script: Script::Routed { routes },
        expected,
        expected_paths,
    }
}

pub fn tuple(id: &str, tag: &str, name: &str) -> TrainingTuple {
    let code = dut(name);
    TrainingTuple {
        kind: TupleKind::Tuple,
        id: id.into(),
        problem: RefinedProblem {
            statement: statement_for(tag, &code),
            interface: parse_interface(&code).unwrap(),
            source_id: id.into(),
            names_only: false,
        },
        reasoning: "reference reasoning".into(),
        code: VerilogSource::new(code, Origin::SolutionAgent),
        testbench: VerilogSource::new(tb(name), Origin::TestbenchAgent),
        provenance: Provenance {
            seed_source: "toy".into(),
            path: AcceptPath::FirstAttempt,
            calls: Vec::new(),
        },
    }
}

pub struct Phase2Scenario {
    pub dataset: Vec<TrainingTuple>,
    pub student: Script,
    pub teacher: Script,
    /// (attempt id, terminal, detail)
    pub expected: Vec<(&'static str, Terminal, &'static str)>,
}

pub const MUX_PATCH1: &str = "module mux2(input [3:0] d0, input [3:0] d1, input sel, output [3:0] y);\n  assign y = sel ? d1 : d1;\nendmodule\n";
pub const DFF_PATCH1: &str = "module dff(input clk, input rst, input d, output reg q);\n  always @(posedge clk) begin\n    if (rst) q <= 1'b0;\n    else q <= !d;\n  end\nendmodule\n";
pub const DFF_PATCH2: &str = "module dff(input clk, input rst, input d, output reg q);\n  always @(posedge clk) begin\n    if (rst) q <= 1'b0;\n    else q <= d ^ 1'b1;\n  end\nendmodule\n";

/// Three problems, two attempts each, covering every self-correction path.
pub fn phase2_scenario() -> Phase2Scenario {
    let m_solve = marker(prompts::SOLVE);
    let m_test = marker(prompts::TEST_REVIEW);
    let m_debug = marker(prompts::DEBUG);
    let dataset = vec![
        tuple("adder", "P2-ADDER", "adder"),
        tuple("mux", "P2-MUX", "mux2"),
        tuple("dff", "P2-DFF", "dff"),
    ];
    let mut student = Vec::new();
    for (tag, name) in [("P2-ADDER", "adder"), ("P2-MUX", "mux2"), ("P2-DFF", "dff")] {
        student.push(route(
            &[&m_solve, tag],
            vec![think(fence(&dut(name)), "plain"), think(fence(&mutant(name)), "slip")],
        ));
    }
    let t = |tag: &str, code: &str, r: ScriptedResponse| route(&[&m_test, tag, code], vec![r]);
    let d = |tag: &str, code: &str, patch: &str| route(&[&m_debug, tag, code], vec![think(fence(patch), "use the report")]);
    let teacher = vec![
        t("P2-ADDER", "a + b", review(Verdict::Pass)),
        t("P2-ADDER", "a - b", review(Verdict::Fail)),
        d("P2-ADDER", "a - b", &dut("adder")),
        t("P2-MUX", "sel ? d1 : d0", review(Verdict::Fail)),
        t("P2-MUX", "sel ? d0 : d1", review(Verdict::Fail)),
        t("P2-MUX", "sel ? d1 : d1", review(Verdict::Fail)),
        d("P2-MUX", "sel ? d0 : d1", MUX_PATCH1),
        d("P2-MUX", "sel ? d1 : d1", &dut("mux2")),
        t("P2-DFF", "q <= d;", review(Verdict::Pass)),
        t("P2-DFF", "q <= ~d;", review(Verdict::Fail)),
        t("P2-DFF", "q <= !d;", review(Verdict::Fail)),
        d("P2-DFF", "q <= ~d;", DFF_PATCH1),
        d("P2-DFF", "q <= !d;", DFF_PATCH2),
    ];
    Phase2Scenario {
        dataset,
        student: Script::Routed { routes: student },
        teacher: Script::Routed { routes: teacher },
        expected: vec![
            ("adder/a0", Terminal::AcceptedTestOnly, "review agrees with testbench"),
            ("adder/a1", Terminal::AcceptedTestAndDebug, "first_round"),
            ("mux/a0", Terminal::DroppedDisagreement, "review FAIL on passing attempt"),
            ("mux/a1", Terminal::AcceptedTestAndDebug, "second_round"),
            ("dff/a0", Terminal::AcceptedTestOnly, "review agrees with testbench"),
            ("dff/a1", Terminal::DroppedDebugFailed, "second patch: test_failure"),
        ],
    }
}

pub const SOLVE_TOKENS: u64 = 50;
pub const REVIEW_TOKENS: u64 = 30;
pub const PATCH_TOKENS: u64 = 40;

fn tokens(mut r: ScriptedResponse, n: u64) -> ScriptedResponse {
    r.completion_tokens = Some(n);
    r
}

pub fn patch_code(round: usize) -> String {
    format!("module add(input [1:0] a, input [1:0] b, output [2:0] s);\n  assign s = a + b + {round};\nendmodule\n")
}

/// Sequential agentic script: the initial solution, then per round a review
/// with the given verdict and, after a FAIL, a patch. Rounds past the end of
/// `verdicts` fail.
pub fn agentic_script(verdicts: &[bool], rounds: usize) -> Vec<ScriptedResponse> {
    let mut out = vec![tokens(think(fence(&patch_code(0)), "initial"), SOLVE_TOKENS)];
    for i in 0..rounds.max(verdicts.len()) {
        let pass = verdicts.get(i).copied().unwrap_or(false);
        let verdict = if pass { Verdict::Pass } else { Verdict::Fail };
        out.push(tokens(review(verdict), REVIEW_TOKENS));
        if !pass {
            out.push(tokens(think(fence(&patch_code(i + 1)), "patch"), PATCH_TOKENS));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgenticExpectation {
    pub interactions: u32,
    pub pass: bool,
    pub turns: usize,
    pub tokens: u64,
    pub final_round: usize,
}

/// Step the agentic state machine by hand over `verdicts`.
pub fn agentic_oracle(verdicts: &[bool], limit: u32) -> AgenticExpectation {
    let mut e = AgenticExpectation {
        interactions: 0,
        pass: false,
        turns: 1,
        tokens: SOLVE_TOKENS,
        final_round: 0,
    };
    loop {
        if e.interactions == limit {
            return e;
        }
        let i = e.interactions as usize;
        e.interactions += 1;
        e.turns += 1;
        e.tokens += REVIEW_TOKENS;
        if verdicts.get(i).copied().unwrap_or(false) {
            e.pass = true;
            return e;
        }
        e.turns += 1;
        e.tokens += PATCH_TOKENS;
        e.final_round = i + 1;
    }
}

/// Deterministic pseudo-random verdict sequences and budgets. Unbounded
/// cases always contain a PASS within the first ten rounds.
pub fn fuzz_agentic_cases(count: usize, seed: u64) -> Vec<(Vec<bool>, veriloop::inference::Budget)> {
    use veriloop::inference::Budget;
    use veriloop::text::derive_seed;
    (0..count)
        .map(|i| {
            let r = |j: u64| derive_seed(seed, &[i as u64, j]);
            let len = (r(0) % 11) as usize;
            let mut v: Vec<bool> = (0..len).map(|j| r(1 + j as u64) % 3 == 0).collect();
            let budget = match r(100) % 7 {
                6 => {
                    let at = (r(101) % 10) as usize;
                    v.resize(v.len().max(at + 1), false);
                    v[at] = true;
                    Budget::Unbounded
                }
                b => Budget::Bounded(b as u32),
            };
            (v, budget)
        })
        .collect()
}
