//! Hybrid retrieval: semantic, structural and graph candidates, composite
//! re-ranking and dual-track split into positives and negatives.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embedding::{rank_order, EmbeddingVector};
use crate::ids::{EdgeKind, NodeId, NodeKind};
use crate::memory::Memory;
use crate::ontology::{ExperienceRecord, Status, StructuralSignature};
use crate::signature::signature_similarity;

pub const GRAPH_EDGE_KINDS: [EdgeKind; 3] =
    [EdgeKind::DerivedFrom, EdgeKind::UsesEntity, EdgeKind::StructurallySimilarTo];
pub const GRAPH_MAX_HOPS: u32 = 2;
pub const RECENCY_HALF_LIFE: f64 = 200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        Self { alpha: 0.35, beta: 0.30, gamma: 0.10, delta: 0.15, epsilon: 0.10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub weights: RetrievalWeights,
    pub tau_sigma: f64,
    pub k_pos: usize,
    pub k_neg: usize,
    pub semantic_k: usize,
    pub enable_semantic: bool,
    pub enable_structural: bool,
    pub enable_graph: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            weights: RetrievalWeights::default(),
            tau_sigma: 0.6,
            k_pos: 3,
            k_neg: 2,
            semantic_k: 10,
            enable_semantic: true,
            enable_structural: true,
            enable_graph: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub sim_sem: f64,
    pub sim_sigma: f64,
    pub prox_g: f64,
    pub quality: f64,
    pub recency: f64,
    pub total: f64,
    pub weights: RetrievalWeights,
}

impl ScoreBreakdown {
    pub fn compose(sim_sem: f64, sim_sigma: f64, prox_g: f64, quality: f64, recency: f64, w: RetrievalWeights) -> Self {
        let total = w.alpha * sim_sem + w.beta * sim_sigma + w.gamma * prox_g + w.delta * quality + w.epsilon * recency;
        Self { sim_sem, sim_sigma, prox_g, quality, recency, total, weights: w }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RetrievedExperience {
    pub id: NodeId,
    pub status: Status,
    pub scores: ScoreBreakdown,
    /// Bound entities, resolved to their latest versions.
    pub entities: Vec<NodeId>,
    #[serde(skip)]
    pub record: Arc<ExperienceRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalDiagnostics {
    pub semantic: usize,
    pub structural: usize,
    pub graph: usize,
    pub union: usize,
    pub successful: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RetrievalBundle {
    pub positives: Vec<RetrievedExperience>,
    pub negatives: Vec<RetrievedExperience>,
    pub diagnostics: RetrievalDiagnostics,
    pub weights: Option<RetrievalWeights>,
}

impl RetrievalBundle {
    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.positives.iter().chain(&self.negatives).map(|r| r.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundles serialize")
    }
}

/// Query side of retrieval: the task embedding and the planned signature.
#[derive(Clone, Debug)]
pub struct RetrievalQuery {
    pub embedding: EmbeddingVector,
    pub signature: StructuralSignature,
}

/// Chooses how many positives and negatives to keep.
pub trait KPolicy: Send + Sync {
    fn limits(&self, cfg: &RetrievalConfig, successful: usize, failed: usize) -> (usize, usize);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FixedK;

impl KPolicy for FixedK {
    fn limits(&self, cfg: &RetrievalConfig, _: usize, _: usize) -> (usize, usize) {
        (cfg.k_pos, cfg.k_neg)
    }
}

fn live_experience(mem: &Memory, id: NodeId) -> bool {
    id.kind() == NodeKind::Experience && mem.experience(id).is_some() && mem.is_live(id)
}

/// Top-`k` live experiences by task-embedding cosine.
pub fn semantic_candidates(mem: &Memory, e_t: &EmbeddingVector, k: usize) -> Vec<(NodeId, f64)> {
    match mem.task_index().search(e_t, k, |id| live_experience(mem, id)) {
        Ok(hits) => hits,
        Err(err) => {
            log::warn!("semantic search skipped: {err}");
            Vec::new()
        }
    }
}

/// All live experiences with structural similarity at least `tau_sigma`.
pub fn structural_candidates(mem: &Memory, sig: &StructuralSignature, tau_sigma: f64) -> Vec<(NodeId, f64)> {
    let mut hits: Vec<(NodeId, f64)> = mem
        .experiences()
        .filter(|e| mem.is_live(e.node))
        .map(|e| (e.node, signature_similarity(sig, &e.record.signature)))
        .filter(|(_, s)| *s >= tau_sigma)
        .collect();
    hits.sort_by(rank_order);
    hits
}

/// Live experiences within two hops of the seeds over provenance, entity and
/// structural edges; proximity 1.0 at one hop and 0.5 at two.
pub fn graph_candidates(mem: &Memory, seeds: &BTreeSet<NodeId>) -> Vec<(NodeId, f64)> {
    let mut hits: Vec<(NodeId, f64)> = mem
        .store()
        .traverse_depths(seeds, &GRAPH_EDGE_KINDS, GRAPH_MAX_HOPS)
        .into_iter()
        .filter(|(id, _)| live_experience(mem, *id))
        .map(|(id, depth)| (id, if depth <= 1 { 1.0 } else { 0.5 }))
        .collect();
    hits.sort_by(rank_order);
    hits
}

pub fn recency(commit_count: u64, commit_seq: u64) -> f64 {
    let age = commit_count.saturating_sub(commit_seq) as f64;
    (-age / RECENCY_HALF_LIFE).exp2()
}

pub fn retrieve(mem: &Memory, query: &RetrievalQuery, cfg: &RetrievalConfig) -> RetrievalBundle {
    retrieve_with_policy(mem, query, cfg, &FixedK)
}

pub fn retrieve_with_policy(
    mem: &Memory,
    query: &RetrievalQuery,
    cfg: &RetrievalConfig,
    policy: &dyn KPolicy,
) -> RetrievalBundle {
    let mut diagnostics = RetrievalDiagnostics::default();
    let semantic = if cfg.enable_semantic {
        semantic_candidates(mem, &query.embedding, cfg.semantic_k)
    } else {
        Vec::new()
    };
    let structural = if cfg.enable_structural && !query.signature.is_empty() {
        structural_candidates(mem, &query.signature, cfg.tau_sigma)
    } else {
        Vec::new()
    };
    let mut graph: BTreeMap<NodeId, f64> = BTreeMap::new();
    if cfg.enable_graph {
        let seeds: BTreeSet<NodeId> = semantic.iter().chain(&structural).map(|h| h.0).collect();
        graph = graph_candidates(mem, &seeds).into_iter().collect();
    }
    diagnostics.semantic = semantic.len();
    diagnostics.structural = structural.len();
    diagnostics.graph = graph.len();

    let mut union: BTreeSet<NodeId> = BTreeSet::new();
    for id in semantic.iter().map(|h| h.0).chain(structural.iter().map(|h| h.0)).chain(graph.keys().copied()) {
        match mem.store().resolve_latest(id) {
            Ok(latest) if live_experience(mem, latest) => {
                union.insert(latest);
            }
            Ok(_) => {}
            Err(err) => log::warn!("dropping candidate {id}: {err}"),
        }
    }
    diagnostics.union = union.len();

    let commits = mem.commit_count();
    let mut scored: Vec<RetrievedExperience> = union
        .into_iter()
        .map(|id| {
            let stored = mem.experience(id).expect("union holds experiences");
            let rec = &stored.record;
            let sim_sem = if cfg.enable_semantic {
                mem.task_index().score(&query.embedding, id).ok().flatten().unwrap_or(0.0).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let sim_sigma =
                if cfg.enable_structural { signature_similarity(&query.signature, &rec.signature) } else { 0.0 };
            let prox_g = graph.get(&id).copied().unwrap_or(0.0);
            let scores = ScoreBreakdown::compose(
                sim_sem,
                sim_sigma,
                prox_g,
                rec.evaluation.quality,
                recency(commits, stored.commit_seq),
                cfg.weights,
            );
            let mut entities = Vec::new();
            for node in rec.goal.entity_bindings.iter().filter_map(|b| b.node) {
                let latest = mem.store().resolve_latest(node).unwrap_or(node);
                if !entities.contains(&latest) {
                    entities.push(latest);
                }
            }
            RetrievedExperience { id, status: rec.status, scores, entities, record: rec.clone() }
        })
        .collect();
    scored.sort_by(|a, b| b.scores.total.total_cmp(&a.scores.total).then(a.id.cmp(&b.id)));

    let (mut positives, mut negatives): (Vec<_>, Vec<_>) =
        scored.into_iter().partition(|r| r.status == Status::Successful);
    diagnostics.successful = positives.len();
    diagnostics.failed = negatives.len();
    let (k_pos, k_neg) = policy.limits(cfg, positives.len(), negatives.len());
    positives.truncate(k_pos);
    negatives.truncate(k_neg);
    RetrievalBundle { positives, negatives, diagnostics, weights: Some(cfg.weights) }
}
