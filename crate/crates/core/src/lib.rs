//! Multi-agent Verilog training-data pipeline and self-debugging inference engine.
//!
//! The crate is organised bottom-up:
//!
//! - [`gateway`]: chat-completion backends (OpenAI-compatible HTTP and a
//!   deterministic scripted backend) with retry and usage accounting.
//! - [`harness`]: compile/simulate Verilog with an external toolchain,
//!   classify outcomes, extract fenced code and module interfaces.
//! - [`agents`]: revision, solution, testbench, verification, test and debug
//!   agents as prompt templates plus structured-output parsers.
//! - [`pipeline`]: the two data-generation phases, the JSONL dataset store
//!   and SFT export.
//! - [`inference`]: regular, deep-thinking and agentic generation strategies.
//! - [`eval`]: benchmark suites, pass@k, token cost and centroid similarity.

pub mod agents;
pub mod eval;
pub mod gateway;
pub mod harness;
pub mod inference;
pub mod jsonl;
pub mod pipeline;
pub mod pool;
pub mod text;

pub use gateway::{Backend, BackendSpec, ChatMessage, Completion, Role, SamplingParams};
pub use harness::{SimStatus, SimulationOutcome, Simulator, VerilogSource};
