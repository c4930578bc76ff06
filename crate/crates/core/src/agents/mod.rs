//! The six pipeline agents: revision, solution, testbench, verification
//! (arbiter), test and debug.
//!
//! Each agent is a prompt template plus a parser over a [`Backend`]. Agents
//! hold no state; every call appends the exchanged messages to a caller-owned
//! turn log so transcripts can be audited afterwards.

pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};

use crate::gateway::{Backend, ChatMessage, Completion, FinishReason, GatewayError, SamplingParams};
use crate::harness::{
    lexer, parse_interface, CompileReport, Direction, HarnessError, InterfaceError, ModuleInterface, Origin, Port,
    SimulationOutcome, Simulator, VerilogSource, PASS_SENTINEL,
};
use crate::text::{mentions_identifier, tail};

pub use parse::{CodeOutput, Fault, FaultOutput, ParseError, RevisionOutput, TestCase, TestReport, Verdict};
pub use prompts::{PromptError, PromptSet};

/// How much simulator output an error report carries as evidence.
const EVIDENCE_CHARS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Revision,
    Solution,
    Testbench,
    Verification,
    Test,
    Debug,
    Regular,
    DeepThinking,
}

/// One request/response exchange with a backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub agent: AgentRole,
    pub template: String,
    pub prompt: Vec<ChatMessage>,
    pub reply: ChatMessage,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub finish_reason: FinishReason,
}

impl Turn {
    /// Concatenated text of every prompt message.
    pub fn prompt_text(&self) -> String {
        self.prompt.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinedProblem {
    pub statement: String,
    pub interface: ModuleInterface,
    pub source_id: String,
    /// Port directions and widths could not be resolved; only names are known.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub names_only: bool,
}

impl RefinedProblem {
    /// Interface text as shown to agents.
    pub fn interface_text(&self) -> String {
        if self.names_only {
            let names: Vec<&str> = self.interface.port_names().collect();
            format!("module {}({});", self.interface.module_name, names.join(", "))
        } else {
            self.interface.render_header()
        }
    }

    /// Interface identifiers the statement fails to mention.
    pub fn missing_identifiers(statement: &str, interface: &ModuleInterface) -> Vec<String> {
        std::iter::once(interface.module_name.as_str())
            .chain(interface.port_names())
            .filter(|n| !mentions_identifier(statement, n))
            .map(str::to_string)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub fault: Fault,
    pub evidence: String,
    pub rationale: String,
    /// The arbiter never produced a parsable verdict and the fault was assigned by default.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub defaulted: bool,
}

impl ErrorReport {
    /// Report text handed to the testbench agent.
    pub fn render(&self) -> String {
        format!(
            "FAULT: {}\n\n{}\n\nSimulator output:\n```\n{}\n```",
            self.fault.token(),
            self.rationale,
            self.evidence.trim_end()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub reasoning: String,
    pub code: VerilogSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugPatch {
    pub reasoning: String,
    pub code: VerilogSource,
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("seed code does not compile")]
    NotCompilable(CompileReport),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("could not parse the revision: {0}")]
    Parse(ParseError),
    #[error("the statement does not mention {}", .missing.join(", "))]
    InterfaceMismatch { missing: Vec<String> },
    #[error("the reply contains no fenced Verilog code block")]
    NoCodeBlock,
    #[error("the testbench declares the design module `{module}` itself")]
    SelfContainedDut { module: String },
    #[error("the testbench does not instantiate module `{module}`")]
    DutNotInstantiated { module: String },
    #[error("the testbench never prints {PASS_SENTINEL}")]
    MissingSentinel,
    #[error("no parsable verdict: {0}")]
    UnparsableVerdict(ParseError),
}

impl AgentError {
    /// Output-format problems worth one corrective re-ask.
    fn reaskable(&self) -> bool {
        matches!(
            self,
            Self::Parse(_)
                | Self::InterfaceMismatch { .. }
                | Self::NoCodeBlock
                | Self::SelfContainedDut { .. }
                | Self::DutNotInstantiated { .. }
                | Self::MissingSentinel
                | Self::UnparsableVerdict(_)
        )
    }
}

/// Seed code that the toolchain accepted. Revision requires one.
#[derive(Debug, Clone)]
pub struct CompiledSource(VerilogSource);

impl CompiledSource {
    pub fn verify(sim: &Simulator, src: VerilogSource) -> Result<Self, AgentError> {
        match sim.compile_check(std::slice::from_ref(&src))? {
            CompileReport::Ok => Ok(Self(src)),
            failed => Err(AgentError::NotCompilable(failed)),
        }
    }

    pub fn source(&self) -> &VerilogSource {
        &self.0
    }
}

/// Agents bound to one backend and one set of sampling parameters.
#[derive(Debug, Clone, Copy)]
pub struct Agents<'a> {
    pub backend: &'a Backend,
    pub prompts: &'a PromptSet,
    pub params: &'a SamplingParams,
}

impl<'a> Agents<'a> {
    pub fn new(backend: &'a Backend, prompts: &'a PromptSet, params: &'a SamplingParams) -> Self {
        Self {
            backend,
            prompts,
            params,
        }
    }

    fn call(
        &self,
        agent: AgentRole,
        template: &str,
        prompt: Vec<ChatMessage>,
        log: &mut Vec<Turn>,
    ) -> Result<Completion, AgentError> {
        let c = self.backend.complete(&prompt, self.params)?;
        if c.is_truncated() {
            tracing::warn!(?agent, "completion truncated at max_tokens");
        }
        log.push(Turn {
            agent,
            template: template.to_string(),
            prompt,
            reply: c.message.clone(),
            prompt_tokens: c.prompt_tokens,
            completion_tokens: c.completion_tokens,
            finish_reason: c.finish_reason,
        });
        Ok(c)
    }

    /// Send `prompt`; if `interpret` rejects the reply with a format error,
    /// ask once more in the same conversation.
    fn ask<T>(
        &self,
        agent: AgentRole,
        template: &str,
        prompt: Vec<ChatMessage>,
        log: &mut Vec<Turn>,
        interpret: impl Fn(&Completion) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let first = self.call(agent, template, prompt.clone(), log)?;
        let err = match interpret(&first) {
            Ok(v) => return Ok(v),
            Err(e) if e.reaskable() => e,
            Err(e) => return Err(e),
        };
        tracing::debug!(?agent, %err, "re-asking");
        let mut convo = prompt;
        convo.push(ChatMessage::assistant(first.message.content.clone(), None));
        let issue = err.to_string();
        convo.extend(self.prompts.render(prompts::REASK, &[("issue", &issue)])?);
        let second = self.call(agent, template, convo, log)?;
        interpret(&second)
    }

    /// Refine a seed problem against its compiled reference code.
    pub fn revise(
        &self,
        seed_problem: &str,
        seed_code: &CompiledSource,
        source_id: &str,
        log: &mut Vec<Turn>,
    ) -> Result<RefinedProblem, AgentError> {
        let code = &seed_code.source().text;
        let (interface, names_only) = match parse_interface(code) {
            Ok(i) => (i, false),
            Err(InterfaceError::UnparsablePorts { module_name, names, reason }) => {
                tracing::warn!(%module_name, %reason, "falling back to a names-only interface");
                let ports = names
                    .into_iter()
                    .map(|name| Port {
                        name,
                        direction: Direction::Inout,
                        width: 1,
                    })
                    .collect();
                (ModuleInterface { module_name, ports }, true)
            }
            Err(InterfaceError::NoModuleFound) => {
                return Err(AgentError::Precondition("seed code declares no module".into()))
            }
        };
        let mut problem = RefinedProblem {
            statement: String::new(),
            interface,
            source_id: source_id.to_string(),
            names_only,
        };
        let exemplars = self.prompts.exemplar_block();
        let iface = problem.interface_text();
        let prompt = self.prompts.render(
            prompts::REVISE,
            &[
                ("exemplars", &exemplars),
                ("problem", seed_problem),
                ("code", code.trim_end()),
                ("interface", &iface),
            ],
        )?;
        let interface = &problem.interface;
        problem.statement = self.ask(AgentRole::Revision, prompts::REVISE, prompt, log, |c| {
            let out = RevisionOutput::parse(&c.message.content).map_err(AgentError::Parse)?;
            let missing = RefinedProblem::missing_identifiers(&out.statement, interface);
            if missing.is_empty() {
                Ok(out.statement)
            } else {
                Err(AgentError::InterfaceMismatch { missing })
            }
        })?;
        Ok(problem)
    }

    /// Solve `problem` from scratch. A retry after a solution-blaming report
    /// reissues the same fresh prompt; tool feedback never reaches the solver.
    pub fn solve(
        &self,
        problem: &str,
        prior_error: Option<&ErrorReport>,
        log: &mut Vec<Turn>,
    ) -> Result<Solution, AgentError> {
        if let Some(e) = prior_error {
            if e.fault != Fault::Solution {
                return Err(AgentError::Precondition("solve retry needs a solution-blaming report".into()));
            }
        }
        let prompt = self.prompts.render(prompts::SOLVE, &[("problem", problem)])?;
        let c = self.call(AgentRole::Solution, prompts::SOLVE, prompt, log)?;
        let out = CodeOutput::parse(c.message.reasoning.as_deref(), &c.message.content).ok_or(AgentError::NoCodeBlock)?;
        Ok(Solution {
            reasoning: out.reasoning,
            code: VerilogSource::new(out.code, Origin::SolutionAgent),
        })
    }

    /// A single completion of a one-turn strategy template. `None` when the
    /// reply carries no fenced code.
    pub fn one_shot(
        &self,
        agent: AgentRole,
        template: &str,
        problem: &str,
        log: &mut Vec<Turn>,
    ) -> Result<Option<CodeOutput>, AgentError> {
        let prompt = self.prompts.render(template, &[("problem", problem)])?;
        let c = self.call(agent, template, prompt, log)?;
        Ok(CodeOutput::parse(c.message.reasoning.as_deref(), &c.message.content))
    }

    /// Write a testbench for `problem`, or repair `previous` given a
    /// testbench-blaming report.
    pub fn gen_testbench(
        &self,
        problem: &RefinedProblem,
        repair: Option<(&VerilogSource, &ErrorReport)>,
        log: &mut Vec<Turn>,
    ) -> Result<VerilogSource, AgentError> {
        let module = problem.interface.module_name.as_str();
        let iface = problem.interface_text();
        let (template, prompt) = match repair {
            None => (
                prompts::TESTBENCH,
                self.prompts.render(
                    prompts::TESTBENCH,
                    &[
                        ("problem", &problem.statement),
                        ("interface", &iface),
                        ("module", module),
                        ("pass", PASS_SENTINEL),
                        ("fail", crate::harness::FAIL_SENTINEL),
                    ],
                )?,
            ),
            Some((previous, report)) => {
                if report.fault != Fault::Testbench {
                    return Err(AgentError::Precondition(
                        "testbench repair needs a testbench-blaming report".into(),
                    ));
                }
                let rendered = report.render();
                (
                    prompts::TESTBENCH_REPAIR,
                    self.prompts.render(
                        prompts::TESTBENCH_REPAIR,
                        &[
                            ("problem", &problem.statement),
                            ("interface", &iface),
                            ("module", module),
                            ("testbench", previous.text.trim_end()),
                            ("report", &rendered),
                            ("pass", PASS_SENTINEL),
                            ("fail", crate::harness::FAIL_SENTINEL),
                        ],
                    )?,
                )
            }
        };
        self.ask(AgentRole::Testbench, template, prompt, log, |c| {
            let code = crate::harness::extract_code(&c.message.content, "verilog").ok_or(AgentError::NoCodeBlock)?;
            validate_testbench(code, module)?;
            Ok(VerilogSource::new(code, Origin::TestbenchAgent))
        })
    }

    /// Decide who is at fault for a failed simulation. Falls back to blaming
    /// the solution when the verdict is unparsable twice.
    pub fn arbitrate(
        &self,
        problem: &RefinedProblem,
        code: &VerilogSource,
        testbench: &VerilogSource,
        outcome: &SimulationOutcome,
        log: &mut Vec<Turn>,
    ) -> Result<ErrorReport, AgentError> {
        if outcome.passed() {
            return Err(AgentError::Precondition("arbitration on a passing simulation".into()));
        }
        let log_text = outcome.log();
        let evidence = tail(&log_text, EVIDENCE_CHARS).to_string();
        let status = outcome.status.to_string();
        let prompt = self.prompts.render(
            prompts::ARBITRATE,
            &[
                ("problem", &problem.statement),
                ("code", code.text.trim_end()),
                ("testbench", testbench.text.trim_end()),
                ("status", &status),
                ("tool_output", evidence.trim_end()),
            ],
        )?;
        let verdict = self.ask(AgentRole::Verification, prompts::ARBITRATE, prompt, log, |c| {
            FaultOutput::parse(&c.message.content).map_err(AgentError::UnparsableVerdict)
        });
        match verdict {
            Ok(out) => Ok(ErrorReport {
                fault: out.fault,
                evidence,
                rationale: out.rationale,
                defaulted: false,
            }),
            Err(AgentError::UnparsableVerdict(_)) => Ok(ErrorReport {
                fault: Fault::Solution,
                evidence,
                rationale: "No parsable fault assignment; defaulting to the solution.".into(),
                defaulted: true,
            }),
            Err(e) => Err(e),
        }
    }

    /// Review `attempt` by reasoning alone. The testbench is never shown.
    pub fn test_review(&self, problem: &str, attempt: &VerilogSource, log: &mut Vec<Turn>) -> Result<TestReport, AgentError> {
        let prompt = self
            .prompts
            .render(prompts::TEST_REVIEW, &[("problem", problem), ("code", attempt.text.trim_end())])?;
        self.ask(AgentRole::Test, prompts::TEST_REVIEW, prompt, log, |c| {
            TestReport::parse(c.message.reasoning.as_deref().unwrap_or_default(), &c.message.content)
                .map_err(AgentError::UnparsableVerdict)
        })
    }

    /// Repair `attempt` using a failing test report.
    pub fn debug(
        &self,
        problem: &str,
        attempt: &VerilogSource,
        report: &TestReport,
        log: &mut Vec<Turn>,
    ) -> Result<DebugPatch, AgentError> {
        if report.verdict != Verdict::Fail {
            return Err(AgentError::Precondition("debug needs a failing test report".into()));
        }
        let prompt = self.prompts.render(
            prompts::DEBUG,
            &[
                ("problem", problem),
                ("code", attempt.text.trim_end()),
                ("report", report.body.trim_end()),
            ],
        )?;
        let c = self.call(AgentRole::Debug, prompts::DEBUG, prompt, log)?;
        let out = CodeOutput::parse(c.message.reasoning.as_deref(), &c.message.content).ok_or(AgentError::NoCodeBlock)?;
        Ok(DebugPatch {
            reasoning: out.reasoning,
            code: VerilogSource::new(out.code, Origin::DebugAgent),
        })
    }
}

/// Lexical checks every generated testbench must pass.
pub fn validate_testbench(code: &str, module: &str) -> Result<(), AgentError> {
    if lexer::declared_modules(code).iter().any(|m| m == module) {
        return Err(AgentError::SelfContainedDut {
            module: module.to_string(),
        });
    }
    if !lexer::external_instances(code).iter().any(|m| m == module) {
        return Err(AgentError::DutNotInstantiated {
            module: module.to_string(),
        });
    }
    if !code.contains(PASS_SENTINEL) {
        return Err(AgentError::MissingSentinel);
    }
    Ok(())
}
