//! Synthetic adapter, pseudo-agent, validator, oracle and teacher.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::universe::{hidden_oracle, SimTask};
use crate::ontology::{ErrorClass, IterationStep, StructuralSignature, TaskUnderstanding};
use crate::orchestrator::{
    Agent, AgentContext, DomainAdapter, HookError, Hooks, JudgeTier, Oracle, OracleVerdict, TaskSpec, TaskView,
    Teacher, TeacherReport, Validation, Validator,
};
use crate::signature::{signature_similarity, StepSpec};

/// Structural similarity an example needs before the pseudo-agent counts it.
pub const RELEVANT_SIGNATURE: f64 = 0.6;
pub const POSITIVE_BONUS: f64 = 0.2;
pub const POSITIVE_CAP: usize = 2;
pub const NEGATIVE_BONUS: f64 = 0.1;
pub const NEGATIVE_CAP: usize = 1;
pub const FEEDBACK_BONUS: f64 = 0.15;

/// Failure class an artifact reports when the task has no planted mode.
pub const DEFAULT_FAILURE: ErrorClass = ErrorClass::ToolFailure;

/// Keyword rules used for tasks the adapter has no table entry for.
const FALLBACK_RULES: &[(&[&str], &[&str])] = &[
    (&["sum", "total"], &["load", "transform", "aggregate"]),
    (&["compare", "versus"], &["resolve entity", "lookup", "compare"]),
    (&["rank", "top"], &["load", "sort", "rank"]),
    (&["plot", "chart"], &["load", "transform", "plot"]),
];
const FALLBACK_DEFAULT: &[&str] = &["load", "transform", "write output"];

/// Planning adapter backed by the generated task table, with a keyword
/// fallback for free-form tasks.
#[derive(Clone, Debug, Default)]
pub struct SyntheticAdapter {
    tasks: HashMap<String, SimTask>,
}

impl SyntheticAdapter {
    pub fn new(tasks: &[SimTask]) -> Self {
        Self { tasks: tasks.iter().map(|t| (t.spec.id.clone(), t.clone())).collect() }
    }

    fn fallback_steps(description: &str) -> Vec<StepSpec> {
        let words: Vec<String> = description.split_whitespace().map(|w| w.to_lowercase()).collect();
        let steps = FALLBACK_RULES
            .iter()
            .find(|(keys, _)| keys.iter().any(|k| words.iter().any(|w| w == k)))
            .map_or(FALLBACK_DEFAULT, |(_, steps)| *steps);
        steps.iter().map(|s| StepSpec::new(*s)).collect()
    }
}

impl DomainAdapter for SyntheticAdapter {
    fn understand(&self, task: &TaskView) -> Result<TaskUnderstanding, HookError> {
        Ok(match self.tasks.get(&task.id) {
            Some(t) => TaskUnderstanding {
                intent: t.template().name.to_string(),
                constraints: vec![format!("scope: {}", t.qualifier)],
                complexity: if t.template().steps.len() > 4 { "multi-hop".into() } else { "standard".into() },
            },
            None => TaskUnderstanding { intent: "ad_hoc".into(), constraints: Vec::new(), complexity: "standard".into() },
        })
    }

    fn extract_entities(&self, task: &TaskView) -> Result<Vec<String>, HookError> {
        Ok(self.tasks.get(&task.id).map(|t| vec![t.entity.clone()]).unwrap_or_default())
    }

    fn extract_procedural_steps(&self, task: &TaskView) -> Result<Vec<StepSpec>, HookError> {
        let Some(t) = self.tasks.get(&task.id) else {
            return Ok(Self::fallback_steps(&task.description));
        };
        let tpl = t.template();
        Ok(tpl
            .steps
            .iter()
            .enumerate()
            .map(|(i, text)| StepSpec {
                text: text.to_string(),
                entities: if i == tpl.entity_step { vec![t.entity.clone()] } else { Vec::new() },
                properties: if i == tpl.metric_step { vec![t.metric.clone()] } else { Vec::new() },
                topic: (i == 0).then(|| tpl.name.to_string()),
            })
            .collect())
    }
}

/// Per-task draw for one iteration, independent of scheduling.
pub fn attempt_draw(seed: u64, task_id: &str, iteration: u32) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(task_id.as_bytes());
    h.update(iteration.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key).gen::<f64>()
}

/// Tunable boosts of the pseudo-agent's success probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentParams {
    pub boost_pos: f64,
    pub pos_cap: usize,
    pub boost_neg: f64,
    pub neg_cap: usize,
    pub boost_iter: f64,
    /// Structural similarity a positive needs before it counts.
    pub relevant_sigma: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            boost_pos: POSITIVE_BONUS,
            pos_cap: POSITIVE_CAP,
            boost_neg: NEGATIVE_BONUS,
            neg_cap: NEGATIVE_CAP,
            boost_iter: FEEDBACK_BONUS,
            relevant_sigma: RELEVANT_SIGNATURE,
        }
    }
}

impl AgentParams {
    pub fn probability(&self, difficulty: f64, relevant_pos: usize, matching_neg: usize, feedback_rounds: usize) -> f64 {
        let p = 1.0 - difficulty
            + self.boost_pos * relevant_pos.min(self.pos_cap) as f64
            + self.boost_neg * matching_neg.min(self.neg_cap) as f64
            + self.boost_iter * feedback_rounds as f64;
        p.clamp(0.0, 1.0)
    }
}

/// Success probability of one attempt under the default boosts.
pub fn success_probability(difficulty: f64, relevant_pos: usize, matching_neg: usize, feedback_rounds: usize) -> f64 {
    AgentParams::default().probability(difficulty, relevant_pos, matching_neg, feedback_rounds)
}

/// Stochastic stand-in for a model. It solves a task when the per-attempt
/// draw falls below a success probability that grows with structurally
/// relevant positives, negatives whose error class is the task's planted
/// failure mode, and earlier validator feedback.
#[derive(Clone, Debug)]
pub struct PseudoAgent {
    seed: u64,
    tasks: HashMap<String, SimTask>,
    params: AgentParams,
}

impl PseudoAgent {
    pub fn new(seed: u64, tasks: &[SimTask]) -> Self {
        Self::with_params(seed, tasks, AgentParams::default())
    }

    pub fn with_params(seed: u64, tasks: &[SimTask], params: AgentParams) -> Self {
        Self { seed, tasks: tasks.iter().map(|t| (t.spec.id.clone(), t.clone())).collect(), params }
    }

    pub fn probability(&self, ctx: &AgentContext) -> Option<f64> {
        let task = self.tasks.get(&ctx.task.id)?;
        let plan = StructuralSignature::new(ctx.signature.clone());
        let relevant = |ops: &[String]| {
            !plan.is_empty()
                && signature_similarity(&plan, &StructuralSignature::new(ops.to_vec())) >= self.params.relevant_sigma
        };
        let pos = ctx.positives.iter().filter(|e| relevant(&e.signature)).count();
        let neg = match task.failure_mode {
            Some(mode) => ctx.negatives.iter().filter(|e| e.error_classes.contains(&mode)).count(),
            None => 0,
        };
        let rounds = ctx.prior_feedback.iter().filter(|f| !f.is_empty()).count();
        Some(self.params.probability(task.difficulty, pos, neg, rounds))
    }
}

/// Failure artifacts carry `[error:<class>@<step>]` so graders can report it.
pub fn failure_tag(class: ErrorClass, step: usize) -> String {
    format!("[error:{class}@{step}]")
}

pub fn parse_failure_tag(artifact: &str) -> Option<(ErrorClass, u32)> {
    let start = artifact.find("[error:")? + "[error:".len();
    let rest = &artifact[start..];
    let body = &rest[..rest.find(']')?];
    let (class, step) = body.split_once('@')?;
    Some((ErrorClass::parse(class)?, step.parse().ok()?))
}

impl Agent for PseudoAgent {
    fn generate(&self, ctx: &AgentContext) -> Result<String, HookError> {
        let task = self.tasks.get(&ctx.task.id).ok_or_else(|| HookError::new(format!("unknown task {}", ctx.task.id)))?;
        let p = self.probability(ctx).expect("task is known");
        let u = attempt_draw(self.seed, &ctx.task.id, ctx.iteration);
        if u < p {
            return Ok(format!("ANSWER {}", hidden_oracle(&ctx.task.description)));
        }
        let class = task.failure_mode.unwrap_or(DEFAULT_FAILURE);
        let step = task.template().steps.len();
        let wrong = &hex::encode(Sha256::digest(format!("{}#{}", ctx.task.description, ctx.iteration)))[..8];
        Ok(format!("ANSWER wrong-{wrong} {}", failure_tag(class, step)))
    }
}

fn answers(task: &TaskSpec, artifact: &str) -> bool {
    artifact.split_whitespace().any(|t| t == task.hidden_oracle)
}

/// Exact-answer check with tagged structured feedback on failure.
#[derive(Clone, Copy, Debug, Default)]
pub struct AnswerValidator;

impl Validator for AnswerValidator {
    fn validate(&self, task: &TaskSpec, artifact: &str) -> Result<Validation, HookError> {
        if answers(task, artifact) {
            return Ok(Validation { passed: true, result: "answer accepted".into(), feedback: String::new() });
        }
        let feedback = match parse_failure_tag(artifact) {
            Some((class, step)) => format!("ERROR: {class} @step {step}\nCAUSE: answer-mismatch 0.6"),
            None => "ERROR: schema_mismatch @step 1\nCAUSE: unparseable-artifact 0.5".to_string(),
        };
        Ok(Validation { passed: false, result: "answer mismatch".into(), feedback })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AnswerOracle;

impl Oracle for AnswerOracle {
    fn grade(&self, task: &TaskSpec, artifact: &str) -> Result<OracleVerdict, HookError> {
        let solved = answers(task, artifact);
        Ok(OracleVerdict {
            solved,
            correctness: if solved { 1.0 } else { 0.0 },
            reject: !solved,
            detail: if solved { "accepted".into() } else { "rejected".into() },
        })
    }
}

/// Efficiency `1 - (iterations - 1) / J`; completeness 1 for solved tasks
/// and 0.5 otherwise. Failure feedback uses the tagged-line grammar; the
/// strong tier adds a patch line.
#[derive(Clone, Copy, Debug)]
pub struct StubTeacher {
    pub max_iterations: u32,
    pub tier: JudgeTier,
}

impl Teacher for StubTeacher {
    fn evaluate(&self, _: &TaskSpec, trace: &[IterationStep], verdict: &OracleVerdict) -> Result<TeacherReport, HookError> {
        let used = trace.len().max(1) as f64;
        let j = self.max_iterations.max(1) as f64;
        let efficiency = (1.0 - (used - 1.0) / j).clamp(0.0, 1.0);
        if verdict.solved {
            return Ok(TeacherReport {
                efficiency,
                completeness: 1.0,
                feedback: format!("procedure verified after {} iteration(s)", trace.len()),
            });
        }
        let last = trace.last().map(|s| s.artifact.as_str()).unwrap_or("");
        let (class, step) = parse_failure_tag(last).unwrap_or((DEFAULT_FAILURE, 1));
        let mut feedback = format!(
            "ERROR: {class} @step {step} @iter {}\nCAUSE: {} 0.8\nRECOVERY: retry_with_patch failed_recovery",
            trace.len(),
            hypothesis(class)
        );
        if self.tier == JudgeTier::Strong {
            feedback.push_str(&format!("\nPATCH: replace_logic step{step} {}", fix(class)));
        }
        Ok(TeacherReport { efficiency, completeness: 0.5, feedback })
    }
}

fn hypothesis(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::ConstraintViolation => "constraint-dropped",
        ErrorClass::EntityDisambiguation => "wrong-entity-bound",
        ErrorClass::ToolFailure => "tool-call-failed",
        ErrorClass::SchemaMismatch => "field-name-mismatch",
    }
}

fn fix(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::ConstraintViolation => "enforce-constraints-before-output",
        ErrorClass::EntityDisambiguation => "resolve-entity-by-id",
        ErrorClass::ToolFailure => "retry-tool-with-backoff",
        ErrorClass::SchemaMismatch => "inspect-schema-first",
    }
}

/// Hooks wiring the synthetic actors together.
pub fn sim_hooks(tasks: &[SimTask], seed: u64, max_iterations: u32, tier: JudgeTier) -> Hooks {
    sim_hooks_with(tasks, seed, max_iterations, tier, AgentParams::default())
}

pub fn sim_hooks_with(tasks: &[SimTask], seed: u64, max_iterations: u32, tier: JudgeTier, params: AgentParams) -> Hooks {
    Hooks::new(
        Arc::new(SyntheticAdapter::new(tasks)),
        Arc::new(PseudoAgent::with_params(seed, tasks, params)),
        Arc::new(AnswerValidator),
        Arc::new(AnswerOracle),
        Arc::new(StubTeacher { max_iterations, tier }),
    )
}
