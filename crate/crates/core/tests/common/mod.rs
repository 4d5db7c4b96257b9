#![allow(dead_code)]

use std::sync::Arc;

use procmem::embedding::{Embedder, StubEmbedder};
use procmem::ids::{NodeId, NodeKind};
use procmem::ingest::{commit, CommitReport};
use procmem::memory::Memory;
use procmem::ontology::{
    assemble_experience, Budgets, EntityBinding, EvaluationBlock, ExperienceDraft, ExperienceRecord, Intent,
    IterationStep, PlanDecomposition, QualityWeights, StructuralSignature, DEFAULT_THETA,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DIM: usize = 256;

pub fn embedder() -> Arc<dyn Embedder> {
    Arc::new(StubEmbedder::new(DIM))
}

pub fn memory(ns: &str) -> Memory {
    Memory::new(ns, embedder())
}

/// Everything needed to build one committed experience.
#[derive(Clone, Debug)]
pub struct Spec {
    pub description: String,
    pub domain: String,
    pub ops: Vec<String>,
    pub c: f64,
    pub eta: f64,
    pub kappa: f64,
    pub reject: bool,
    pub entities: Vec<String>,
    pub feedback: String,
    pub derived_from: Vec<NodeId>,
}

impl Spec {
    pub fn new(description: &str, domain: &str, ops: &[&str]) -> Self {
        Self {
            description: description.into(),
            domain: domain.into(),
            ops: ops.iter().map(|s| s.to_string()).collect(),
            c: 1.0,
            eta: 1.0,
            kappa: 1.0,
            reject: false,
            entities: Vec::new(),
            feedback: String::new(),
            derived_from: Vec::new(),
        }
    }

    pub fn scores(mut self, c: f64, eta: f64, kappa: f64, reject: bool) -> Self {
        (self.c, self.eta, self.kappa, self.reject) = (c, eta, kappa, reject);
        self
    }

    pub fn entities(mut self, names: &[&str]) -> Self {
        self.entities = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn feedback(mut self, text: &str) -> Self {
        self.feedback = text.into();
        self
    }
}

pub fn record(mem: &Memory, spec: &Spec) -> ExperienceRecord {
    let weights = QualityWeights::default();
    let signature = StructuralSignature::new(spec.ops.clone());
    let (errors, patches) =
        procmem::ingest::decompose_feedback(&spec.feedback, &procmem::ingest::TaggedLineExtractor);
    assemble_experience(ExperienceDraft {
        task_description: spec.description.clone(),
        task_embedding: mem.embedder().embed(&spec.description).unwrap(),
        domain: spec.domain.clone(),
        plan: PlanDecomposition {
            entities: spec.entities.iter().map(|m| EntityBinding { mention: m.clone(), node: None }).collect(),
            signature: Some(signature.clone()),
            ..Default::default()
        },
        signature,
        budgets: Budgets::default(),
        evidence: Vec::new(),
        trace: vec![IterationStep {
            iteration: 1,
            intent: Intent::Exploration,
            artifact: "artifact".into(),
            result: "result".into(),
            validation: !spec.reject,
            feedback: String::new(),
        }],
        error_registry: errors,
        patches,
        evaluation: EvaluationBlock {
            correctness: spec.c,
            efficiency: spec.eta,
            completeness: spec.kappa,
            quality: weights.combine(spec.c, spec.eta, spec.kappa),
            teacher_feedback: spec.feedback.clone(),
            weights,
            theta: DEFAULT_THETA,
            oracle_reject: spec.reject,
        },
        derived_from: spec.derived_from.clone(),
        ground_truth: None,
    })
    .expect("fixture record is valid")
}

pub fn add(mem: &mut Memory, spec: &Spec) -> CommitReport {
    let rec = record(mem, spec);
    commit(mem, rec, &[]).expect("fixture commit")
}

pub const OPS: [&str; 8] = [
    "op:entity_resolution",
    "op:schema_traversal",
    "op:temporal_filter",
    "op:aggregation",
    "op:comparison",
    "op:ranking",
    "op:data_loading",
    "op:visualization",
];

const WORDS: [&str; 24] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
    "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray",
];

const ENTITIES: [&str; 5] = ["acme", "globex", "initech", "hooli", "wonka"];

pub fn random_ops(rng: &mut impl Rng, bases: &[Vec<String>]) -> Vec<String> {
    let mut ops = bases.choose(rng).unwrap().clone();
    if rng.gen_bool(0.3) {
        let i = rng.gen_range(0..ops.len());
        ops[i] = OPS.choose(rng).unwrap().to_string();
    }
    ops
}

pub fn random_bases(rng: &mut impl Rng, n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(2..=5);
            (0..len).map(|_| OPS.choose(rng).unwrap().to_string()).collect()
        })
        .collect()
}

pub fn random_text(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(3..=6);
    (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Commits `n` random experiences: a few shared signatures with mutations,
/// two domains, random scores and outcomes, entity bindings, provenance,
/// and an occasional entity version bump.
pub fn random_memory(rng: &mut impl Rng, ns: &str, n: usize) -> Memory {
    let mut mem = memory(ns);
    let bases = random_bases(rng, 6);
    let mut ids: Vec<NodeId> = Vec::new();
    for _ in 0..n {
        let n_entities = rng.gen_range(0..=2);
        let mut spec = Spec {
            description: random_text(rng),
            domain: ["d1", "d2"].choose(rng).unwrap().to_string(),
            ops: random_ops(rng, &bases),
            c: if rng.gen_bool(0.6) { 1.0 } else { rng.gen_range(0.0..1.0) },
            eta: rng.gen_range(0.0..=1.0),
            kappa: rng.gen_range(0.0..=1.0),
            reject: rng.gen_bool(0.2),
            entities: ENTITIES.choose_multiple(rng, n_entities).map(|s| s.to_string()).collect(),
            feedback: String::new(),
            derived_from: Vec::new(),
        };
        if spec.reject || spec.c < 0.3 {
            spec.feedback = "ERROR: tool_failure @step 1\nCAUSE: timeout 0.7".into();
        }
        if !ids.is_empty() && rng.gen_bool(0.3) {
            spec.derived_from.push(*ids.choose(rng).unwrap());
        }
        let report = add(&mut mem, &spec);
        ids.push(report.node.unwrap());
        if rng.gen_bool(0.05) {
            let entities: Vec<NodeId> = mem
                .store()
                .nodes_of_kind(NodeKind::Entity)
                .map(|e| e.id)
                .filter(|id| !mem.store().is_superseded(*id))
                .collect();
            if let Some(&old) = entities.choose(rng) {
                let node = mem.store().node(old).unwrap().clone();
                let next = procmem::graph::NewNode::new(
                    node.title.clone(),
                    format!("{} (updated)", node.description),
                    node.domain_tag.clone(),
                    node.payload.clone(),
                );
                mem.version_entity(old, next).unwrap();
            }
        }
    }
    mem
}
