//! Pluggable hook traits and the views they receive.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::NodeId;
use crate::ingest::{FeedbackExtractor, TaggedLineExtractor};
use crate::ontology::{ErrorClass, Intent, IterationStep, Status, TaskUnderstanding};
use crate::signature::StepSpec;

/// Failure reported by any pluggable hook.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct HookError(pub String);

impl HookError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// A task as the harness knows it, including the held-out answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub domain: String,
    pub description: String,
    pub hidden_oracle: String,
}

impl TaskSpec {
    /// What planning and generation hooks are allowed to see.
    pub fn view(&self) -> TaskView {
        TaskView { id: self.id.clone(), domain: self.domain.clone(), description: self.description.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub id: String,
    pub domain: String,
    pub description: String,
}

/// A retrieved experience as shown to the agent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleView {
    pub id: NodeId,
    pub status: Status,
    pub total: f64,
    pub signature: Vec<String>,
    pub error_classes: Vec<ErrorClass>,
    /// Compressed text; never contains trace artifacts.
    pub rendered: String,
}

/// Everything one generation call receives.
#[derive(Clone, Debug, Serialize)]
pub struct AgentContext {
    pub task: TaskView,
    pub understanding: TaskUnderstanding,
    pub entities: Vec<String>,
    pub steps: Vec<StepSpec>,
    pub signature: Vec<String>,
    pub positives: Vec<ExampleView>,
    pub negatives: Vec<ExampleView>,
    pub iteration: u32,
    pub intent: Intent,
    /// Validator feedback from earlier iterations, oldest first.
    pub prior_feedback: Vec<String>,
    /// Set when the validator repeated itself verbatim: try something different.
    pub divergence: bool,
    pub generate_tests: bool,
}

pub const DIVERGENCE_MARKER: &str = "DIVERGE: previous attempts failed identically; change approach";

impl AgentContext {
    /// Prompt-style rendering of the whole context.
    pub fn render(&self) -> String {
        let mut out = format!("TASK [{}] {}\n", self.task.domain, self.task.description);
        if !self.signature.is_empty() {
            out.push_str(&format!("PLAN: {}\n", self.signature.join(" -> ")));
        }
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, step.text));
        }
        if !self.entities.is_empty() {
            out.push_str(&format!("ENTITIES: {}\n", self.entities.join(", ")));
        }
        for ex in &self.positives {
            out.push_str("SUCCESSFUL ");
            out.push_str(&ex.rendered);
            out.push('\n');
        }
        for ex in &self.negatives {
            out.push_str("FAILED ");
            out.push_str(&ex.rendered);
            out.push('\n');
        }
        for (i, fb) in self.prior_feedback.iter().enumerate() {
            out.push_str(&format!("FEEDBACK {}: {}\n", i + 1, fb));
        }
        if self.divergence {
            out.push_str(DIVERGENCE_MARKER);
            out.push('\n');
        }
        out.push_str(&format!("ITERATION {} ({:?})", self.iteration, self.intent));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validation {
    pub passed: bool,
    pub result: String,
    pub feedback: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub solved: bool,
    pub correctness: f64,
    pub reject: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherReport {
    pub efficiency: f64,
    pub completeness: f64,
    pub feedback: String,
}

/// Task understanding, entity extraction and step decomposition.
pub trait DomainAdapter: Send + Sync {
    fn understand(&self, task: &TaskView) -> Result<TaskUnderstanding, HookError>;
    fn extract_entities(&self, task: &TaskView) -> Result<Vec<String>, HookError>;
    fn extract_procedural_steps(&self, task: &TaskView) -> Result<Vec<StepSpec>, HookError>;
}

/// Produces an artifact for one iteration.
pub trait Agent: Send + Sync {
    fn generate(&self, ctx: &AgentContext) -> Result<String, HookError>;
}

/// Per-iteration check that drives refinement.
pub trait Validator: Send + Sync {
    fn validate(&self, task: &TaskSpec, artifact: &str) -> Result<Validation, HookError>;
}

/// Ground-truth grader for the final artifact.
pub trait Oracle: Send + Sync {
    fn grade(&self, task: &TaskSpec, artifact: &str) -> Result<OracleVerdict, HookError>;
}

/// Scores efficiency and completeness and writes feedback.
pub trait Teacher: Send + Sync {
    fn evaluate(
        &self,
        task: &TaskSpec,
        trace: &[IterationStep],
        verdict: &OracleVerdict,
    ) -> Result<TeacherReport, HookError>;
}

#[derive(Clone)]
pub struct Hooks {
    pub adapter: Arc<dyn DomainAdapter>,
    pub agent: Arc<dyn Agent>,
    pub validator: Arc<dyn Validator>,
    pub oracle: Arc<dyn Oracle>,
    pub teacher: Arc<dyn Teacher>,
    pub extractor: Arc<dyn FeedbackExtractor>,
}

impl Hooks {
    pub fn new(
        adapter: Arc<dyn DomainAdapter>,
        agent: Arc<dyn Agent>,
        validator: Arc<dyn Validator>,
        oracle: Arc<dyn Oracle>,
        teacher: Arc<dyn Teacher>,
    ) -> Self {
        Self { adapter, agent, validator, oracle, teacher, extractor: Arc::new(TaggedLineExtractor) }
    }
}
