//! Deterministic simulation: a synthetic task universe over three domains
//! and stand-in actors for every orchestrator hook.

mod actors;
mod harness;
mod plot;
mod universe;

pub use actors::{
    attempt_draw, failure_tag, parse_failure_tag, sim_hooks, sim_hooks_with, success_probability, AgentParams, AnswerOracle, AnswerValidator,
    PseudoAgent, StubTeacher, SyntheticAdapter, DEFAULT_FAILURE, RELEVANT_SIGNATURE,
};
pub use harness::{fresh_memory, run_simulation, task_specs};
pub use plot::line_chart_svg;
pub use universe::{
    domain_tokens, generate_tasks, hidden_oracle, tasks_from_tsv, tasks_to_tsv, Domain, SimTask, Template,
    UniverseError, TEMPLATES,
};
