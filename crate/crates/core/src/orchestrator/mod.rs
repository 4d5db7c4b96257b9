//! The plan, retrieve, generate/iterate, ingest workflow and its hooks.

mod config;
mod hooks;
mod workflow;

pub use config::{CommitMode, ConfigError, JudgeTier, PrgiiConfig, Preset};
pub use hooks::{
    Agent, AgentContext, DomainAdapter, ExampleView, HookError, Hooks, Oracle, OracleVerdict, TaskSpec, TaskView,
    Teacher, TeacherReport, Validation, Validator, DIVERGENCE_MARKER,
};
pub use workflow::{
    execute_task, run_epoch, run_epochs, run_task, ExecutionOutcome, HookFailure, OrchestratorError, PendingCommit,
    Phase, RunReport, TaskRun, WITHHELD_FEEDBACK,
};
