//! The experience record: structural signature, six reflection layers,
//! evaluation block, gate status and derived retrieval keys.
//!
//! Records are assembled once from a finished execution, validated against
//! the schema's invariants, and never mutated afterwards.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::ids::NodeId;

pub const DEFAULT_THETA: f64 = 0.3;
/// Smallest budget accepted by [`compress_for_prompt`].
pub const MIN_PROMPT_BUDGET: usize = 200;

const QUALITY_TOLERANCE: f64 = 1e-12;

/// Ordered, type-prefixed operation sequence plus a stable fingerprint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralSignature {
    pub ops: Vec<String>,
    pub fingerprint: String,
}

impl StructuralSignature {
    pub fn new(ops: Vec<String>) -> Self {
        let fingerprint = fingerprint_of(&ops);
        Self { ops, fingerprint }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// First 16 hex characters of SHA-256 over the unit-separator-joined ops.
pub fn fingerprint_of(ops: &[String]) -> String {
    let mut hasher = Sha256::new();
    for (i, op) in ops.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(op.as_bytes());
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Exploration,
    Refinement,
    ErrorCorrection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Successful,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Successful => "successful",
            Status::Failed => "failed",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    ConstraintViolation,
    EntityDisambiguation,
    ToolFailure,
    SchemaMismatch,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] = [
        ErrorClass::ConstraintViolation,
        ErrorClass::EntityDisambiguation,
        ErrorClass::ToolFailure,
        ErrorClass::SchemaMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::ConstraintViolation => "constraint_violation",
            ErrorClass::EntityDisambiguation => "entity_disambiguation",
            ErrorClass::ToolFailure => "tool_failure",
            ErrorClass::SchemaMismatch => "schema_mismatch",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == token)
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A mention from the plan and the node it resolved to, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityBinding {
    pub mention: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReflection {
    pub task_description: String,
    pub task_embedding: EmbeddingVector,
    pub domain: String,
    pub constraints: Vec<String>,
    pub verification_contract: Vec<String>,
    pub goal_signature: String,
    pub entity_bindings: Vec<EntityBinding>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureStep {
    pub op: String,
    pub description: String,
    pub args: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_when: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub max_tool_calls: u32,
    pub max_retries: u32,
    pub max_iterations: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_tool_calls: 16, max_retries: 2, max_iterations: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureReflection {
    /// `proc:<Name>:v<k>`.
    pub procedure_ref: String,
    pub params: BTreeMap<String, String>,
    pub steps: Vec<ProcedureStep>,
    pub budgets: Budgets,
    pub checkpoints: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Web,
    ToolOutput,
    DbResult,
    FileSnapshot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentDigest {
    pub sha256: String,
    pub bytes: usize,
}

impl ContentDigest {
    pub fn of(content: &str) -> Self {
        Self { sha256: hex::encode(Sha256::digest(content.as_bytes())), bytes: content.len() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trust {
    pub source_type: String,
    pub authority_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub kind: EvidenceKind,
    pub locator: String,
    pub content: String,
    pub content_digest: ContentDigest,
    pub trust: Trust,
}

impl EvidenceItem {
    pub fn new(kind: EvidenceKind, locator: impl Into<String>, content: impl Into<String>, trust: Trust) -> Self {
        let content = content.into();
        let content_digest = ContentDigest::of(&content);
        Self { kind, locator: locator.into(), content, content_digest, trust }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStep {
    pub iteration: u32,
    pub intent: Intent,
    pub artifact: String,
    pub result: String,
    pub validation: bool,
    pub feedback: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccurredAt {
    pub step: u32,
    pub iteration: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootCause {
    pub hypothesis: String,
    pub confidence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryProcedure {
    RetryWithPatch,
    FallbackSource,
    Escalate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryOutcome {
    Recovered,
    FailedRecovery,
    Escalated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub error_class: ErrorClass,
    pub occurred_at: OccurredAt,
    pub root_cause: RootCause,
    pub recovery_procedure: RecoveryProcedure,
    pub recovery_outcome: RecoveryOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerSignature {
    pub symptoms: Vec<String>,
    pub detected_from: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchAction {
    InsertStep,
    ReplaceLogic,
}

impl PatchAction {
    pub fn as_str(self) -> &'static str {
        match self {
            PatchAction::InsertStep => "insert_step",
            PatchAction::ReplaceLogic => "replace_logic",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "insert_step" => Some(PatchAction::InsertStep),
            "replace_logic" => Some(PatchAction::ReplaceLogic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub action: PatchAction,
    pub location: String,
    pub new_logic: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityDelta {
    pub reliability: f64,
    pub tool_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub trigger_signature: TriggerSignature,
    pub patch: Patch,
    pub rationale: String,
    pub utility_delta: UtilityDelta,
}

/// Weights of the quality composite (correctness, efficiency, completeness).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub correctness: f64,
    pub efficiency: f64,
    pub completeness: f64,
}

impl QualityWeights {
    pub const fn new(correctness: f64, efficiency: f64, completeness: f64) -> Self {
        Self { correctness, efficiency, completeness }
    }

    pub fn is_valid(&self) -> bool {
        let w = [self.correctness, self.efficiency, self.completeness];
        w.iter().all(|v| v.is_finite() && *v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }

    pub fn combine(&self, c: f64, eta: f64, kappa: f64) -> f64 {
        self.correctness * c + self.efficiency * eta + self.completeness * kappa
    }
}

impl Default for QualityWeights {
    fn default() -> Self {
        Self::new(0.9, 0.05, 0.05)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBlock {
    pub correctness: f64,
    pub efficiency: f64,
    pub completeness: f64,
    pub quality: f64,
    pub teacher_feedback: String,
    pub weights: QualityWeights,
    pub theta: f64,
    pub oracle_reject: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalKeys {
    pub goal_ops: Vec<String>,
    pub failure_modes: Vec<String>,
    pub domain_tags: Vec<String>,
}

/// One complete procedural-episodic trace. Field order is the canonical
/// serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperienceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<NodeId>,
    pub signature: StructuralSignature,
    pub goal: GoalReflection,
    pub procedure: ProcedureReflection,
    pub evidence: Vec<EvidenceItem>,
    pub trace: Vec<IterationStep>,
    pub error_registry: Vec<ErrorEntry>,
    pub patches: Vec<PatchEntry>,
    pub evaluation: EvaluationBlock,
    pub status: Status,
    pub retrieval_keys: RetrievalKeys,
    pub oracle_overridden: bool,
    #[serde(default)]
    pub derived_from: Vec<NodeId>,
}

impl ExperienceRecord {
    pub fn quality(&self) -> f64 {
        self.evaluation.quality
    }

    pub fn domain(&self) -> &str {
        &self.goal.domain
    }

    pub fn description(&self) -> &str {
        &self.goal.task_description
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("experience records always serialize")
    }
}

/// Planning output: task understanding, entity bindings, steps and the
/// signature they induce.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDecomposition {
    pub understanding: TaskUnderstanding,
    pub entities: Vec<EntityBinding>,
    pub steps: Vec<PlanStep>,
    pub signature: Option<StructuralSignature>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskUnderstanding {
    pub intent: String,
    pub constraints: Vec<String>,
    pub complexity: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub op: String,
    pub description: String,
    pub args: BTreeMap<String, String>,
}

/// A schema clause a record can violate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyDescription,
    EmptySignature,
    FingerprintMismatch,
    GoalSignatureMismatch,
    EmptyTrace,
    TraceNumbering,
    IntentOrdering { at: usize },
    ScoreOutOfRange(&'static str),
    InvalidWeights,
    QualityInconsistent { stored: String, expected: String },
    StatusInconsistent,
    OracleOverrideNotFailed,
    EvidenceDigest { index: usize },
    ConfidenceOutOfRange { index: usize },
    RetrievalKeysStale,
    ProcedureRef,
    AnswerLeak,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDescription => f.write_str("goal: task_description must be non-empty"),
            Violation::EmptySignature => f.write_str("signature: must be non-empty"),
            Violation::FingerprintMismatch => f.write_str("signature: fingerprint does not match ops"),
            Violation::GoalSignatureMismatch => f.write_str("goal: goal_signature must equal the signature fingerprint"),
            Violation::EmptyTrace => f.write_str("trace: must be non-empty"),
            Violation::TraceNumbering => f.write_str("trace: iterations must be numbered 1..n"),
            Violation::IntentOrdering { at } => {
                write!(f, "intent-ordering: intent regresses at trace index {at}")
            }
            Violation::ScoreOutOfRange(field) => write!(f, "evaluation: {field} outside [0, 1]"),
            Violation::InvalidWeights => f.write_str("evaluation: weights must be non-negative and sum to 1"),
            Violation::QualityInconsistent { stored, expected } => {
                write!(f, "evaluation-consistency: q={stored} but weighted sum is {expected}")
            }
            Violation::StatusInconsistent => f.write_str("status-gate: status disagrees with q and theta"),
            Violation::OracleOverrideNotFailed => f.write_str("status-gate: oracle override requires status failed"),
            Violation::EvidenceDigest { index } => {
                write!(f, "content-address: evidence {index} digest does not match its content")
            }
            Violation::ConfidenceOutOfRange { index } => {
                write!(f, "error-registry: entry {index} confidence outside [0, 1]")
            }
            Violation::RetrievalKeysStale => f.write_str("retrieval-keys: do not match derived values"),
            Violation::ProcedureRef => f.write_str("procedure: procedure_ref must look like proc:<Name>:v<k>"),
            Violation::AnswerLeak => f.write_str("answer-leakage: teacher feedback contains the ground-truth answer"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("invariant violation: {}", list(.0))]
    InvariantViolation(Vec<Violation>),
    #[error("prompt budget {0} is below the minimum of {MIN_PROMPT_BUDGET}")]
    BudgetTooSmall(usize),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Quality gate: the oracle override wins, otherwise `q >= theta`.
pub fn gate(q: f64, theta: f64, oracle_reject: bool) -> Status {
    if !oracle_reject && q >= theta {
        Status::Successful
    } else {
        Status::Failed
    }
}

pub fn derive_retrieval_keys(
    signature: &StructuralSignature,
    errors: &[ErrorEntry],
    domain: &str,
) -> RetrievalKeys {
    let mut failure_modes: Vec<String> = Vec::new();
    for e in errors {
        let class = e.error_class.as_str();
        if !failure_modes.iter().any(|m| m == class) {
            failure_modes.push(class.to_string());
        }
    }
    RetrievalKeys {
        goal_ops: signature.ops.clone(),
        failure_modes,
        domain_tags: vec![domain.to_string()],
    }
}

/// Builds the `proc:<Name>:v<k>` identifier.
pub fn procedure_ref(name: &str, version: u32) -> String {
    format!("proc:{name}:v{version}")
}

/// Splits a procedure ref into name and version.
pub fn parse_procedure_ref(s: &str) -> Option<(&str, u32)> {
    let rest = s.strip_prefix("proc:")?;
    let (name, version) = rest.rsplit_once(":v")?;
    if name.is_empty() {
        return None;
    }
    Some((name, version.parse().ok().filter(|v| *v >= 1)?))
}

/// Everything needed to assemble a record from a finished execution.
#[derive(Clone, Debug)]
pub struct ExperienceDraft {
    pub task_description: String,
    pub task_embedding: EmbeddingVector,
    pub domain: String,
    pub plan: PlanDecomposition,
    pub signature: StructuralSignature,
    pub budgets: Budgets,
    pub evidence: Vec<EvidenceItem>,
    pub trace: Vec<IterationStep>,
    pub error_registry: Vec<ErrorEntry>,
    pub patches: Vec<PatchEntry>,
    pub evaluation: EvaluationBlock,
    pub derived_from: Vec<NodeId>,
    /// Ground-truth answer, used only by the leakage guard.
    pub ground_truth: Option<String>,
}

/// Populates every layer, derives status and retrieval keys, and checks all
/// invariants.
pub fn assemble_experience(draft: ExperienceDraft) -> Result<ExperienceRecord, OntologyError> {
    let ExperienceDraft {
        task_description,
        task_embedding,
        domain,
        plan,
        signature,
        budgets,
        evidence,
        trace,
        error_registry,
        patches,
        evaluation,
        derived_from,
        ground_truth,
    } = draft;

    let mut leak = false;
    if let Some(answer) = ground_truth.as_deref().filter(|a| !a.is_empty()) {
        leak = evaluation.teacher_feedback.contains(answer);
    }

    let status = gate(evaluation.quality, evaluation.theta, evaluation.oracle_reject);
    let retrieval_keys = derive_retrieval_keys(&signature, &error_registry, &domain);
    let steps = plan
        .steps
        .iter()
        .map(|s| ProcedureStep {
            op: s.op.clone(),
            description: s.description.clone(),
            args: s.args.clone(),
            stop_when: None,
        })
        .collect();
    let checkpoints = plan.understanding.constraints.iter().map(|c| format!("check: {c}")).collect();
    let params = plan
        .entities
        .iter()
        .enumerate()
        .map(|(i, b)| (format!("ENTITY_{}", i + 1), b.mention.clone()))
        .collect();
    let name = if signature.is_empty() { "Empty".to_string() } else { signature.fingerprint[..8].to_string() };

    let record = ExperienceRecord {
        id: None,
        goal: GoalReflection {
            task_description,
            task_embedding,
            domain,
            constraints: plan.understanding.constraints.clone(),
            verification_contract: vec!["oracle_accepts_final_artifact".to_string()],
            goal_signature: signature.fingerprint.clone(),
            entity_bindings: plan.entities.clone(),
        },
        signature,
        procedure: ProcedureReflection {
            procedure_ref: procedure_ref(&name, 1),
            params,
            steps,
            budgets,
            checkpoints,
        },
        evidence,
        trace,
        error_registry,
        patches,
        oracle_overridden: evaluation.oracle_reject,
        evaluation,
        status,
        retrieval_keys,
        derived_from,
    };

    let mut report = validate_experience(&record);
    if leak {
        report.push(Violation::AnswerLeak);
    }
    if report.is_empty() {
        Ok(record)
    } else {
        Err(OntologyError::InvariantViolation(report))
    }
}

fn in_unit(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

/// Lists every violated invariant; empty iff the record is valid.
pub fn validate_experience(rec: &ExperienceRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if rec.goal.task_description.trim().is_empty() {
        out.push(Violation::EmptyDescription);
    }
    if rec.signature.is_empty() {
        out.push(Violation::EmptySignature);
    }
    if rec.signature.fingerprint != fingerprint_of(&rec.signature.ops) {
        out.push(Violation::FingerprintMismatch);
    }
    if rec.goal.goal_signature != rec.signature.fingerprint {
        out.push(Violation::GoalSignatureMismatch);
    }
    if parse_procedure_ref(&rec.procedure.procedure_ref).is_none() {
        out.push(Violation::ProcedureRef);
    }

    if rec.trace.is_empty() {
        out.push(Violation::EmptyTrace);
    }
    if rec.trace.iter().enumerate().any(|(i, s)| s.iteration as usize != i + 1) {
        out.push(Violation::TraceNumbering);
    }
    if let Some(i) = rec.trace.windows(2).position(|w| w[1].intent < w[0].intent) {
        out.push(Violation::IntentOrdering { at: i + 1 });
    }

    let ev = &rec.evaluation;
    for (name, value) in [
        ("correctness", ev.correctness),
        ("efficiency", ev.efficiency),
        ("completeness", ev.completeness),
        ("quality", ev.quality),
        ("theta", ev.theta),
    ] {
        if !in_unit(value) {
            out.push(Violation::ScoreOutOfRange(name));
        }
    }
    if !ev.weights.is_valid() {
        out.push(Violation::InvalidWeights);
    }
    let expected = ev.weights.combine(ev.correctness, ev.efficiency, ev.completeness);
    if !((ev.quality - expected).abs() <= QUALITY_TOLERANCE) {
        out.push(Violation::QualityInconsistent { stored: ev.quality.to_string(), expected: expected.to_string() });
    }
    if rec.oracle_overridden != ev.oracle_reject {
        out.push(Violation::StatusInconsistent);
    }
    if rec.oracle_overridden {
        if rec.status != Status::Failed {
            out.push(Violation::OracleOverrideNotFailed);
        }
    } else if rec.status != gate(ev.quality, ev.theta, false) {
        out.push(Violation::StatusInconsistent);
    }

    for (i, item) in rec.evidence.iter().enumerate() {
        if item.content_digest != ContentDigest::of(&item.content) || !in_unit(item.trust.authority_score) {
            out.push(Violation::EvidenceDigest { index: i });
        }
    }
    for (i, e) in rec.error_registry.iter().enumerate() {
        if !in_unit(e.root_cause.confidence) {
            out.push(Violation::ConfidenceOutOfRange { index: i });
        }
    }
    if rec.retrieval_keys != derive_retrieval_keys(&rec.signature, &rec.error_registry, &rec.goal.domain) {
        out.push(Violation::RetrievalKeysStale);
    }
    out
}

fn render_sections(rec: &ExperienceRecord) -> Vec<String> {
    let mut sections = Vec::new();
    sections.push(format!(
        "EXAMPLE [{} q={:.2}] {}\nTASK: {}",
        rec.status,
        rec.evaluation.quality,
        rec.procedure.procedure_ref,
        rec.goal.task_description
    ));
    sections.push(format!("SIGNATURE: {}", rec.signature.ops.join(" -> ")));
    if !rec.procedure.steps.is_empty() {
        let mut s = String::from("STEPS:");
        for (i, step) in rec.procedure.steps.iter().enumerate() {
            s.push_str(&format!("\n  {}. {}: {}", i + 1, step.op, step.description));
        }
        sections.push(s);
    }
    if !rec.evaluation.teacher_feedback.is_empty() {
        sections.push(format!("FEEDBACK: {}", rec.evaluation.teacher_feedback));
    }
    if rec.status == Status::Failed {
        if !rec.error_registry.is_empty() {
            let mut s = String::from("ERRORS:");
            for e in &rec.error_registry {
                s.push_str(&format!(
                    "\n  error_class={} @step {} iter {}: {} ({:.2})",
                    e.error_class,
                    e.occurred_at.step,
                    e.occurred_at.iteration,
                    e.root_cause.hypothesis,
                    e.root_cause.confidence
                ));
            }
            sections.push(s);
        }
        if !rec.patches.is_empty() {
            let mut s = String::from("PATCHES:");
            for p in &rec.patches {
                s.push_str(&format!("\n  {} {}: {}", p.patch.action.as_str(), p.patch.location, p.patch.new_logic));
            }
            sections.push(s);
        }
    }
    if !rec.evidence.is_empty() {
        let mut s = String::from("EVIDENCE:");
        for e in &rec.evidence {
            s.push_str(&format!("\n  {} sha256:{}", e.locator, &e.content_digest.sha256[..12]));
        }
        sections.push(s);
    }
    sections
}

/// Deterministic bounded summary. Sections are kept in priority order and the
/// lowest-priority ones are dropped whole; only the header section is ever cut
/// mid-text, and only when it alone exceeds the budget.
pub fn compress_for_prompt(rec: &ExperienceRecord, budget_chars: usize) -> Result<String, OntologyError> {
    if budget_chars < MIN_PROMPT_BUDGET {
        return Err(OntologyError::BudgetTooSmall(budget_chars));
    }
    let mut out = String::new();
    let mut used = 0usize;
    for (i, section) in render_sections(rec).into_iter().enumerate() {
        let len = section.chars().count();
        if i == 0 {
            if len > budget_chars {
                return Ok(section.chars().take(budget_chars).collect());
            }
            out.push_str(&section);
            used = len;
            continue;
        }
        if used + 1 + len > budget_chars {
            break;
        }
        out.push('\n');
        out.push_str(&section);
        used += 1 + len;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::embedding::{Embedder, StubEmbedder};

    pub fn trace_step(iteration: u32, intent: Intent, passed: bool) -> IterationStep {
        IterationStep {
            iteration,
            intent,
            artifact: format!("artifact-{iteration}"),
            result: if passed { "ok".into() } else { "wrong".into() },
            validation: passed,
            feedback: String::new(),
        }
    }

    pub fn evaluation(c: f64, eta: f64, kappa: f64, reject: bool) -> EvaluationBlock {
        let weights = QualityWeights::default();
        EvaluationBlock {
            correctness: c,
            efficiency: eta,
            completeness: kappa,
            quality: weights.combine(c, eta, kappa),
            teacher_feedback: String::new(),
            weights,
            theta: DEFAULT_THETA,
            oracle_reject: reject,
        }
    }

    pub fn draft(ops: &[&str], eval: EvaluationBlock) -> ExperienceDraft {
        let signature = StructuralSignature::new(ops.iter().map(|s| s.to_string()).collect());
        let steps = signature
            .ops
            .iter()
            .map(|op| PlanStep { op: op.clone(), description: format!("do {op}"), args: BTreeMap::new() })
            .collect();
        ExperienceDraft {
            task_description: "sum column by group".into(),
            task_embedding: StubEmbedder::new(16).embed("sum column by group").unwrap(),
            domain: "business".into(),
            plan: PlanDecomposition { steps, signature: Some(signature.clone()), ..Default::default() },
            signature,
            budgets: Budgets::default(),
            evidence: vec![EvidenceItem::new(
                EvidenceKind::ToolOutput,
                "tool:csv_reader",
                "rows=10",
                Trust { source_type: "tool".into(), authority_score: 0.8 },
            )],
            trace: vec![trace_step(1, Intent::Exploration, true)],
            error_registry: Vec::new(),
            patches: Vec::new(),
            evaluation: eval,
            derived_from: Vec::new(),
            ground_truth: None,
        }
    }
}
