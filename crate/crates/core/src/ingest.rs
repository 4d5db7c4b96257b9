//! Quality scoring, the quality gate, feedback decomposition, and the commit
//! path that turns an assembled record into graph state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::cosine;
use crate::graph::{SIMILAR_TO_MIN, STRUCTURALLY_SIMILAR_MIN, SUPERSEDES_MIN};
use crate::ids::{EdgeKind, NodeId, NodeKind};
use crate::journal::FlagKind;
use crate::memory::{Memory, MemoryError};
use crate::ontology::{
    validate_experience, ErrorClass, ErrorEntry, ExperienceRecord, OccurredAt, Patch, PatchAction, PatchEntry,
    QualityWeights, RecoveryOutcome, RecoveryProcedure, RootCause, TriggerSignature, UtilityDelta, Violation,
};
use crate::resolver::ResolverError;
use crate::signature::{extract_signature, signature_similarity, SignatureError, StepSpec};

pub use crate::ontology::gate;

/// Only the most recent commits are compared when adding similarity edges.
pub const SIMILARITY_WINDOW: usize = 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("quality weights must be non-negative and sum to 1")]
    WeightSumInvalid,
    #[error("invalid record: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidRecord(Vec<Violation>),
    #[error("signature steps resolve to {found:?}, record says {expected:?}")]
    SignatureMismatch { expected: Vec<String>, found: Vec<String> },
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Resolver(#[from] ResolverError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

impl From<crate::graph::GraphError> for IngestError {
    fn from(e: crate::graph::GraphError) -> Self {
        IngestError::Memory(MemoryError::Graph(e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationInput {
    pub correctness: f64,
    pub efficiency: f64,
    pub completeness: f64,
    pub teacher_feedback: String,
    pub oracle_reject: bool,
}

/// `q = w_c c + w_eta eta + w_kappa kappa`.
pub fn compute_quality(input: &EvaluationInput, w: &QualityWeights) -> Result<f64, IngestError> {
    if !w.is_valid() {
        return Err(IngestError::WeightSumInvalid);
    }
    Ok(w.combine(input.correctness, input.efficiency, input.completeness))
}

#[derive(Debug, Error)]
#[error("feedback extraction failed: {0}")]
pub struct ExtractorFailure(pub String);

/// Turns free-text teacher feedback into typed error and patch entries.
pub trait FeedbackExtractor: Send + Sync {
    fn extract(&self, feedback: &str) -> Result<(Vec<ErrorEntry>, Vec<PatchEntry>), ExtractorFailure>;
}

/// Line grammar:
///
/// ```text
/// ERROR: <error_class> @step <n> [@iter <m>]
/// CAUSE: <hypothesis words...> <confidence>
/// PATCH: <insert_step|replace_logic> <location> <new_logic words...>
/// RECOVERY: <retry_with_patch|fallback_source|escalate> [recovered|failed_recovery|escalated]
/// ```
///
/// CAUSE and RECOVERY attach to the preceding ERROR. Lines with any other
/// prefix are prose and ignored.
#[derive(Clone, Copy, Debug, Default)]
pub struct TaggedLineExtractor;

fn parse_recovery(token: &str) -> Option<RecoveryProcedure> {
    match token {
        "retry_with_patch" => Some(RecoveryProcedure::RetryWithPatch),
        "fallback_source" => Some(RecoveryProcedure::FallbackSource),
        "escalate" => Some(RecoveryProcedure::Escalate),
        _ => None,
    }
}

fn parse_outcome(token: &str) -> Option<RecoveryOutcome> {
    match token {
        "recovered" => Some(RecoveryOutcome::Recovered),
        "failed_recovery" => Some(RecoveryOutcome::FailedRecovery),
        "escalated" => Some(RecoveryOutcome::Escalated),
        _ => None,
    }
}

fn tagged_number(words: &mut std::iter::Peekable<std::str::SplitWhitespace<'_>>, tag: &str) -> Option<Option<u32>> {
    if words.peek() != Some(&tag) {
        return Some(None);
    }
    words.next();
    words.next()?.parse().ok().map(Some)
}

impl FeedbackExtractor for TaggedLineExtractor {
    fn extract(&self, feedback: &str) -> Result<(Vec<ErrorEntry>, Vec<PatchEntry>), ExtractorFailure> {
        let mut errors: Vec<ErrorEntry> = Vec::new();
        let mut patches = Vec::new();
        for (n, raw) in feedback.lines().enumerate() {
            let line = raw.trim();
            let bad = |what: &str| ExtractorFailure(format!("line {}: {what}: `{line}`", n + 1));
            if let Some(rest) = line.strip_prefix("ERROR:") {
                let mut words = rest.split_whitespace().peekable();
                let class = words.next().and_then(ErrorClass::parse).ok_or_else(|| bad("unknown error class"))?;
                let step = tagged_number(&mut words, "@step").ok_or_else(|| bad("bad @step"))?;
                let iteration = tagged_number(&mut words, "@iter").ok_or_else(|| bad("bad @iter"))?;
                if words.next().is_some() {
                    return Err(bad("trailing tokens"));
                }
                errors.push(ErrorEntry {
                    error_class: class,
                    occurred_at: OccurredAt { step: step.unwrap_or(0), iteration: iteration.unwrap_or(0) },
                    root_cause: RootCause { hypothesis: String::new(), confidence: 0.0 },
                    recovery_procedure: RecoveryProcedure::RetryWithPatch,
                    recovery_outcome: RecoveryOutcome::FailedRecovery,
                });
            } else if let Some(rest) = line.strip_prefix("CAUSE:") {
                let entry = errors.last_mut().ok_or_else(|| bad("CAUSE without ERROR"))?;
                let (hypothesis, conf) = rest.trim().rsplit_once(' ').ok_or_else(|| bad("missing confidence"))?;
                let confidence: f64 = conf.parse().map_err(|_| bad("bad confidence"))?;
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(bad("confidence outside [0, 1]"));
                }
                entry.root_cause = RootCause { hypothesis: hypothesis.trim().to_string(), confidence };
            } else if let Some(rest) = line.strip_prefix("PATCH:") {
                let mut words = rest.split_whitespace();
                let action = words.next().and_then(PatchAction::parse).ok_or_else(|| bad("unknown patch action"))?;
                let location = words.next().ok_or_else(|| bad("missing location"))?.to_string();
                let new_logic = words.collect::<Vec<_>>().join(" ");
                if new_logic.is_empty() {
                    return Err(bad("missing new_logic"));
                }
                let symptoms = errors.last().map(|e| vec![e.error_class.to_string()]).unwrap_or_default();
                patches.push(PatchEntry {
                    trigger_signature: TriggerSignature { symptoms, detected_from: vec!["teacher_feedback".into()] },
                    patch: Patch { action, location, new_logic },
                    rationale: errors.last().map(|e| e.root_cause.hypothesis.clone()).unwrap_or_default(),
                    utility_delta: UtilityDelta::default(),
                });
            } else if let Some(rest) = line.strip_prefix("RECOVERY:") {
                let entry = errors.last_mut().ok_or_else(|| bad("RECOVERY without ERROR"))?;
                let mut words = rest.split_whitespace();
                entry.recovery_procedure =
                    words.next().and_then(parse_recovery).ok_or_else(|| bad("unknown recovery procedure"))?;
                if let Some(tok) = words.next() {
                    entry.recovery_outcome = parse_outcome(tok).ok_or_else(|| bad("unknown recovery outcome"))?;
                }
            }
        }
        Ok((errors, patches))
    }
}

/// Runs the extractor; on failure logs a warning and yields empty lists.
pub fn decompose_feedback(feedback: &str, extractor: &dyn FeedbackExtractor) -> (Vec<ErrorEntry>, Vec<PatchEntry>) {
    if feedback.trim().is_empty() {
        return (Vec::new(), Vec::new());
    }
    match extractor.extract(feedback) {
        Ok(parsed) => parsed,
        Err(err) => {
            log::warn!("{err}; ingesting without structured feedback");
            (Vec::new(), Vec::new())
        }
    }
}

/// What a commit wrote.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommitReport {
    pub node: Option<NodeId>,
    pub entities: Vec<NodeId>,
    pub similar_to: Vec<(NodeId, f64)>,
    pub structurally_similar_to: Vec<(NodeId, f64)>,
    pub superseded: Vec<NodeId>,
}

fn default_steps(rec: &ExperienceRecord) -> Vec<StepSpec> {
    rec.signature.ops.iter().map(StepSpec::new).collect()
}

/// Commits a validated record: plan graph, Experience node, entity and
/// provenance edges, similarity edges against the recent window, and
/// same-status dominance. `steps` carry the plan metadata; when empty the
/// signature's own op ids are used.
pub fn commit(mem: &mut Memory, mut rec: ExperienceRecord, steps: &[StepSpec]) -> Result<CommitReport, IngestError> {
    let report = validate_experience(&rec);
    if !report.is_empty() {
        return Err(IngestError::InvalidRecord(report));
    }
    let domain = rec.goal.domain.clone();
    let owned;
    let steps = if steps.is_empty() {
        owned = default_steps(&rec);
        &owned
    } else {
        steps
    };
    let (store, resolver, canon) = mem.graph_and_resolver();
    let sig = extract_signature(store, resolver, canon, steps, &domain)?;
    if sig.ops != rec.signature.ops {
        return Err(IngestError::SignatureMismatch { expected: rec.signature.ops.clone(), found: sig.ops });
    }
    let mut entities = Vec::new();
    for binding in &mut rec.goal.entity_bindings {
        let node = resolver.resolve(store, &binding.mention, NodeKind::Entity, &domain)?.node;
        binding.node = Some(node);
        if !entities.contains(&node) {
            entities.push(node);
        }
    }
    let derived: BTreeSet<NodeId> =
        rec.derived_from.iter().copied().filter(|id| mem.experience(*id).is_some()).collect();
    rec.derived_from = derived.iter().copied().collect();

    // Similarity candidates are fixed before the new node exists.
    let window: Vec<NodeId> = mem
        .commit_order()
        .iter()
        .rev()
        .take(SIMILARITY_WINDOW)
        .copied()
        .filter(|id| mem.is_live(*id))
        .collect();
    let live: Vec<NodeId> = mem.experiences().map(|e| e.node).filter(|id| mem.is_live(*id)).collect();

    let stored = mem.insert_experience(rec)?;
    let new = stored.node;
    let rec = stored.record;
    let mut out = CommitReport { node: Some(new), entities: entities.clone(), ..Default::default() };

    for &e in &entities {
        mem.store_mut().add_edge(new, e, EdgeKind::UsesEntity, None)?;
    }
    for &d in &derived {
        mem.store_mut().add_edge(new, d, EdgeKind::DerivedFrom, None)?;
    }

    let mut window = window;
    window.sort();
    for old in window {
        let other = mem.experience(old).expect("window holds experiences").record.clone();
        let sem = match mem.task_index().similarity(new, old) {
            Some(s) => s,
            None => cosine(&rec.goal.task_embedding, &other.goal.task_embedding).map_err(MemoryError::from)?,
        };
        if sem > SIMILAR_TO_MIN {
            mem.store_mut().add_edge(new, old, EdgeKind::SimilarTo, Some(sem))?;
            out.similar_to.push((old, sem));
        }
        let sig = signature_similarity(&rec.signature, &other.signature);
        if sig >= STRUCTURALLY_SIMILAR_MIN {
            mem.store_mut().add_edge(new, old, EdgeKind::StructurallySimilarTo, Some(sig))?;
            out.structurally_similar_to.push((old, sig));
        }
    }

    for old in live {
        let other = mem.experience(old).expect("live holds experiences").record.clone();
        if other.goal.domain != rec.goal.domain || other.status != rec.status {
            continue;
        }
        let sig = signature_similarity(&rec.signature, &other.signature);
        if sig > SUPERSEDES_MIN && other.evaluation.quality < rec.evaluation.quality {
            mem.store_mut().add_edge(new, old, EdgeKind::Supersedes, Some(sig))?;
            mem.store_mut().set_flag(old, FlagKind::Archived, true)?;
            out.superseded.push(old);
        }
    }
    Ok(out)
}
