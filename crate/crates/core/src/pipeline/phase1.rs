//! Training code generation: compile filter, revision, solution and
//! testbench generation, simulation, arbitration and one repair round.

use crate::agents::{AgentError, Agents, CompiledSource, ErrorReport, Fault, PromptSet, Solution, Turn};
use crate::gateway::Backend;
use crate::harness::{HarnessError, Origin, SimStatus, SimulationOutcome, Simulator, VerilogSource};
use crate::pool::{run_ordered, CancelToken, InOrder};
use crate::text::derive_seed;

use super::{
    AcceptPath, DatasetRecord, LedgerEntry, PipelineConfig, PipelineError, Provenance, SeedPair, Sinks, Terminal,
    TrainingTuple, TranscriptEntry, TupleKind,
};

const STAGE_REVISE: u64 = 1;
const STAGE_SOLVE: u64 = 2;
const STAGE_TESTBENCH: u64 = 3;
const STAGE_ARBITRATE: u64 = 4;
const STAGE_RETRY: u64 = 5;
const STAGE_REPAIR: u64 = 6;

#[derive(Debug, Default)]
pub struct Phase1Output {
    pub tuples: Vec<TrainingTuple>,
    pub ledger: Vec<LedgerEntry>,
    pub transcripts: Vec<TranscriptEntry>,
    /// Seeds not processed because of cancellation.
    pub skipped: usize,
}

#[derive(Clone)]
struct SeedResult {
    tuple: Option<TrainingTuple>,
    ledger: LedgerEntry,
    transcript: TranscriptEntry,
}

/// Run the code-generation phase over `seeds`. Per-seed failures are
/// ledgered; only sink I/O errors abort the run.
pub fn run_phase1(
    seeds: &[SeedPair],
    teacher: &Backend,
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    cancel: &CancelToken,
    sinks: &Sinks<'_>,
) -> Result<Phase1Output, PipelineError> {
    let mut ids = std::collections::HashSet::new();
    for (i, s) in seeds.iter().enumerate() {
        if !ids.insert(s.id_at(i)) {
            return Err(PipelineError::InvalidInput(format!("duplicate seed id {}", s.id_at(i))));
        }
    }
    let mut out = Phase1Output::default();
    let mut order = InOrder::new();
    let mut io_error: Option<PipelineError> = None;
    let results = run_ordered(
        seeds,
        config.width,
        cancel,
        |i, seed| process_seed(i, seed, teacher, sim, prompts, config),
        |i, r: &SeedResult| {
            tracing::info!(
                seed_id = %r.ledger.seed_id,
                terminal = r.ledger.terminal.as_str(),
                detail = %r.ledger.detail,
                "seed done"
            );
            for ready in order.push(i, r.clone()) {
                if io_error.is_none() {
                    io_error = emit(&ready, sinks, &mut out).err();
                }
            }
        },
    );
    for stranded in order.drain() {
        if io_error.is_none() {
            io_error = emit(&stranded, sinks, &mut out).err();
        }
    }
    out.skipped = results.iter().filter(|r| r.is_none()).count();
    match io_error {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn emit(r: &SeedResult, sinks: &Sinks<'_>, out: &mut Phase1Output) -> Result<(), PipelineError> {
    if let Some(t) = &r.tuple {
        sinks.record(&DatasetRecord::Tuple(t.clone()))?;
        out.tuples.push(t.clone());
    }
    sinks.ledger(&r.ledger)?;
    sinks.transcript(&r.transcript)?;
    out.ledger.push(r.ledger.clone());
    out.transcripts.push(r.transcript.clone());
    Ok(())
}

fn process_seed(
    index: usize,
    seed: &SeedPair,
    teacher: &Backend,
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
) -> SeedResult {
    let id = seed.id_at(index);
    let mut turns = Vec::new();
    let (terminal, detail, tuple) = match seed_workflow(index, &id, seed, teacher, sim, prompts, config, &mut turns) {
        Ok(Flow::Accepted(t)) => (Terminal::Accepted, t.provenance.path.as_str().to_string(), Some(t)),
        Ok(Flow::Discarded(terminal, detail)) => (terminal, detail, None),
        Err(e) => (Terminal::DiscardedError, e.to_string(), None),
    };
    let tuple = tuple.map(|mut t| {
        t.provenance.calls = Provenance::calls_of(&turns);
        t
    });
    SeedResult {
        tuple,
        ledger: LedgerEntry::new(id.clone(), terminal, detail),
        transcript: TranscriptEntry { seed_id: id, turns },
    }
}

enum Flow {
    Accepted(TrainingTuple),
    Discarded(Terminal, String),
}

/// Simulate, turning harness input rejections (such as a solution whose
/// module name does not match the testbench) into a failed outcome.
pub(crate) fn simulate(
    sim: &Simulator,
    dut: &VerilogSource,
    tb: &VerilogSource,
    limit: std::time::Duration,
) -> Result<SimulationOutcome, HarnessError> {
    match sim.simulate(dut, tb, limit) {
        Err(HarnessError::InvalidInput(msg)) => Ok(SimulationOutcome {
            status: SimStatus::CompileError,
            tool_stdout: String::new(),
            tool_stderr: msg,
            wall_time: Default::default(),
        }),
        other => other,
    }
}

fn no_code_report() -> ErrorReport {
    ErrorReport {
        fault: Fault::Solution,
        evidence: String::new(),
        rationale: "The solution reply contained no code block.".into(),
        defaulted: false,
    }
}

#[allow(clippy::too_many_arguments)]
fn seed_workflow(
    index: usize,
    id: &str,
    seed: &SeedPair,
    teacher: &Backend,
    sim: &Simulator,
    prompts: &PromptSet,
    config: &PipelineConfig,
    turns: &mut Vec<Turn>,
) -> Result<Flow, AgentError> {
    let params_for = |stage: u64| config.teacher_params.with_seed(derive_seed(config.seed, &[index as u64, stage]));

    let code = VerilogSource::new(seed.code.clone(), Origin::SeedCorpus).labeled(id);
    let compiled = match CompiledSource::verify(sim, code) {
        Ok(c) => c,
        Err(AgentError::NotCompilable(report)) => {
            let detail = match report {
                crate::harness::CompileReport::Failed { diagnostics, .. } => diagnostics
                    .first()
                    .map(|d| d.message.clone())
                    .unwrap_or_else(|| "compile failed".into()),
                crate::harness::CompileReport::Ok => String::new(),
            };
            return Ok(Flow::Discarded(Terminal::DiscardedCompile, detail));
        }
        Err(e) => return Err(e),
    };

    let p = params_for(STAGE_REVISE);
    let problem = match Agents::new(teacher, prompts, &p).revise(&seed.problem, &compiled, id, turns) {
        Ok(p) => p,
        Err(e @ (AgentError::Parse(_) | AgentError::InterfaceMismatch { .. } | AgentError::Precondition(_))) => {
            return Ok(Flow::Discarded(Terminal::DiscardedRevision, e.to_string()))
        }
        Err(e) => return Err(e),
    };

    let (ps, pt) = (params_for(STAGE_SOLVE), params_for(STAGE_TESTBENCH));
    let solver = Agents::new(teacher, prompts, &ps);
    let tb_agent = Agents::new(teacher, prompts, &pt);
    let mut solve_turns = Vec::new();
    let mut tb_turns = Vec::new();
    let (solution, testbench) = if config.parallel_branches {
        std::thread::scope(|s| {
            let h = s.spawn(|| tb_agent.gen_testbench(&problem, None, &mut tb_turns));
            let sol = solver.solve(&problem.statement, None, &mut solve_turns);
            (sol, h.join().expect("testbench thread"))
        })
    } else {
        (
            solver.solve(&problem.statement, None, &mut solve_turns),
            tb_agent.gen_testbench(&problem, None, &mut tb_turns),
        )
    };
    turns.append(&mut solve_turns);
    turns.append(&mut tb_turns);
    let testbench = match testbench {
        Ok(tb) => tb.labeled(format!("{id}/tb")),
        Err(e @ AgentError::Backend(_)) => return Err(e),
        Err(e) => return Ok(Flow::Discarded(Terminal::DiscardedError, format!("testbench: {e}"))),
    };
    let solution = match solution {
        Ok(s) => Some(s),
        Err(AgentError::NoCodeBlock) => None,
        Err(e) => return Err(e),
    };

    let accept = |sol: Solution, tb: VerilogSource, path: AcceptPath| {
        Flow::Accepted(TrainingTuple {
            kind: TupleKind::Tuple,
            id: id.to_string(),
            problem: problem.clone(),
            reasoning: sol.reasoning,
            code: sol.code.labeled(id),
            testbench: tb,
            provenance: Provenance {
                seed_source: seed.source.clone(),
                path,
                calls: Vec::new(),
            },
        })
    };

    let report = match &solution {
        Some(sol) => {
            let outcome = simulate(sim, &sol.code, &testbench, config.sim_limit)?;
            if outcome.passed() {
                return Ok(accept(solution.unwrap(), testbench, AcceptPath::FirstAttempt));
            }
            let pa = params_for(STAGE_ARBITRATE);
            Agents::new(teacher, prompts, &pa).arbitrate(&problem, &sol.code, &testbench, &outcome, turns)?
        }
        None => no_code_report(),
    };

    match report.fault {
        Fault::Solution => {
            let pr = params_for(STAGE_RETRY);
            let retry = match Agents::new(teacher, prompts, &pr).solve(&problem.statement, Some(&report), turns) {
                Ok(s) => s,
                Err(AgentError::NoCodeBlock) => {
                    return Ok(Flow::Discarded(
                        Terminal::DiscardedFailedTwice,
                        "solution retry: no code block".into(),
                    ))
                }
                Err(e) => return Err(e),
            };
            let outcome = simulate(sim, &retry.code, &testbench, config.sim_limit)?;
            if outcome.passed() {
                Ok(accept(retry, testbench, AcceptPath::SolutionRetry))
            } else {
                Ok(Flow::Discarded(
                    Terminal::DiscardedFailedTwice,
                    format!("solution retry: {}", outcome.status),
                ))
            }
        }
        Fault::Testbench => {
            let sol = solution.expect("testbench blamed only after a simulation");
            let pr = params_for(STAGE_REPAIR);
            let repaired = match Agents::new(teacher, prompts, &pr).gen_testbench(&problem, Some((&testbench, &report)), turns) {
                Ok(tb) => tb.labeled(format!("{id}/tb")),
                Err(e @ AgentError::Backend(_)) => return Err(e),
                Err(e) => {
                    return Ok(Flow::Discarded(
                        Terminal::DiscardedFailedTwice,
                        format!("testbench repair: {e}"),
                    ))
                }
            };
            let outcome = simulate(sim, &sol.code, &repaired, config.sim_limit)?;
            if outcome.passed() {
                Ok(accept(sol, repaired, AcceptPath::TestbenchRepair))
            } else {
                Ok(Flow::Discarded(
                    Terminal::DiscardedFailedTwice,
                    format!("testbench repair: {}", outcome.status),
                ))
            }
        }
    }
}
