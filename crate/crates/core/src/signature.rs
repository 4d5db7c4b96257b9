//! Operation canon, signature extraction and LCS structural similarity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, GraphStore, NewNode, NodePayload};
use crate::ids::{EdgeKind, NodeId, NodeKind};
use crate::ontology::StructuralSignature;
use crate::resolver::{EntityResolver, ResolverError, GLOBAL_DOMAIN};

/// Canon shipped with the crate.
pub const DEFAULT_CANON: &str = include_str!("../data/operations.canon");

#[derive(Debug, Error, PartialEq)]
pub enum CanonError {
    #[error("line {line}: expected `synonym => op:name`")]
    Syntax { line: usize },
    #[error("synonym `{synonym}` maps to both {first} and {second}")]
    Conflict { synonym: String, first: String, second: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum SignatureError {
    #[error("no steps to extract a signature from")]
    EmptySteps,
    #[error("resolution failed on step {step}: {source}")]
    ResolutionFailure { step: usize, source: ResolverError },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Lower-cases, maps every non-alphanumeric character to a space and
/// collapses runs of whitespace.
pub fn normalize(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Synonym table mapping raw step text to canonical `op:` identifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationCanon {
    synonyms: BTreeMap<String, String>,
}

impl OperationCanon {
    pub fn parse(text: &str) -> Result<Self, CanonError> {
        let mut synonyms: BTreeMap<String, String> = BTreeMap::new();
        let mut add = |synonym: String, op: String| -> Result<(), CanonError> {
            match synonyms.get(&synonym) {
                Some(existing) if *existing != op => Err(CanonError::Conflict {
                    synonym,
                    first: existing.clone(),
                    second: op,
                }),
                _ => {
                    synonyms.insert(synonym, op);
                    Ok(())
                }
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = line.split_once("=>").ok_or(CanonError::Syntax { line: i + 1 })?;
            let op = rhs.trim();
            let name = op.strip_prefix("op:").filter(|n| !n.is_empty()).ok_or(CanonError::Syntax { line: i + 1 })?;
            let synonym = normalize(lhs);
            if synonym.is_empty() {
                return Err(CanonError::Syntax { line: i + 1 });
            }
            add(synonym, op.to_string())?;
            add(normalize(name), op.to_string())?;
        }
        Ok(Self { synonyms })
    }

    pub fn canonical_ops(&self) -> std::collections::BTreeSet<&str> {
        self.synonyms.values().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.synonyms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty()
    }

    /// Exact synonym, else longest leading word sequence that is a synonym,
    /// else a fresh `op:<snake_case>` id.
    /// Text already in `op:` form is kept as an explicit id.
    pub fn canonicalize(&self, step: &str) -> String {
        if let Some(explicit) = step.trim().strip_prefix("op:") {
            let name = normalize(explicit).replace(' ', "_");
            return if name.is_empty() { "op:unnamed".to_string() } else { format!("op:{name}") };
        }
        let norm = normalize(step);
        if let Some(op) = self.synonyms.get(&norm) {
            return op.clone();
        }
        let words: Vec<&str> = norm.split(' ').filter(|w| !w.is_empty()).collect();
        for n in (1..words.len()).rev() {
            if let Some(op) = self.synonyms.get(&words[..n].join(" ")) {
                return op.clone();
            }
        }
        if words.is_empty() {
            "op:unnamed".to_string()
        } else {
            format!("op:{}", words.join("_"))
        }
    }
}

impl Default for OperationCanon {
    fn default() -> Self {
        Self::parse(DEFAULT_CANON).expect("shipped canon is well-formed")
    }
}

/// One raw plan step with the metadata it names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpec {
    pub text: String,
    #[serde(default)]
    pub entities: Vec<String>,
    #[serde(default)]
    pub properties: Vec<String>,
    #[serde(default)]
    pub topic: Option<String>,
}

impl StepSpec {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Default::default() }
    }
}

/// Signature implied by the steps, with no graph writes.
pub fn canonical_signature(canon: &OperationCanon, steps: &[StepSpec]) -> StructuralSignature {
    StructuralSignature::new(steps.iter().map(|s| canon.canonicalize(&s.text)).collect())
}

fn link(store: &mut GraphStore, from: NodeId, to: NodeId, kind: EdgeKind) -> Result<(), GraphError> {
    if !store.has_edge(from, to, kind) {
        store.add_edge(from, to, kind, None)?;
    }
    Ok(())
}

fn topic_node(store: &mut GraphStore, topic: &str, domain: &str) -> Result<NodeId, GraphError> {
    let existing = store
        .nodes_of_kind(NodeKind::TaskTopic)
        .find(|n| n.title == topic && n.domain_tag == domain)
        .map(|n| n.id);
    match existing {
        Some(id) => Ok(id),
        None => store.add_node(NewNode::new(topic, format!("task topic `{topic}`"), domain, NodePayload::TaskTopic)),
    }
}

/// Resolves each step to an Operation node, links consecutive operations
/// with FOLLOWED_BY and writes the USES / RELATES_TO / MEMBER_OF edges the
/// step metadata names. Existing edges are not duplicated.
pub fn extract_signature(
    store: &mut GraphStore,
    resolver: &mut EntityResolver,
    canon: &OperationCanon,
    steps: &[StepSpec],
    domain: &str,
) -> Result<StructuralSignature, SignatureError> {
    if steps.is_empty() {
        return Err(SignatureError::EmptySteps);
    }
    let failure = |step: usize| move |source| SignatureError::ResolutionFailure { step, source };
    let mut ops = Vec::with_capacity(steps.len());
    let mut prev: Option<NodeId> = None;
    for (i, step) in steps.iter().enumerate() {
        let op = canon.canonicalize(&step.text);
        let op_node = resolver.resolve(store, &op, NodeKind::Operation, GLOBAL_DOMAIN).map_err(failure(i))?.node;
        if let Some(p) = prev {
            link(store, p, op_node, EdgeKind::FollowedBy)?;
        }
        let mut entity_nodes = Vec::new();
        for mention in &step.entities {
            let e = resolver.resolve(store, mention, NodeKind::Entity, domain).map_err(failure(i))?.node;
            link(store, op_node, e, EdgeKind::Uses)?;
            entity_nodes.push(e);
        }
        for prop in &step.properties {
            let p = resolver.resolve(store, prop, NodeKind::Entity, domain).map_err(failure(i))?.node;
            link(store, op_node, p, EdgeKind::Uses)?;
            for &e in &entity_nodes {
                if e != p {
                    link(store, e, p, EdgeKind::RelatesTo)?;
                }
            }
        }
        if let Some(topic) = step.topic.as_deref().filter(|t| !t.trim().is_empty()) {
            let t = topic_node(store, topic, domain)?;
            link(store, op_node, t, EdgeKind::MemberOf)?;
        }
        ops.push(op);
        prev = Some(op_node);
    }
    Ok(StructuralSignature::new(ops))
}

/// Length of the longest common subsequence under exact equality.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `LCS(a, b) / min(|a|, |b|)`, defined as 0 when either side is empty.
pub fn structural_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let denom = a.len().min(b.len());
    if denom == 0 {
        return 0.0;
    }
    lcs_length(a, b) as f64 / denom as f64
}

pub fn signature_similarity(a: &StructuralSignature, b: &StructuralSignature) -> f64 {
    structural_similarity(&a.ops, &b.ops)
}
