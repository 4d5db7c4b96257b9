//! Typed property graph backing the procedural knowledge graph.
//!
//! Nodes are never deleted. Entity changes are modelled as new versions linked
//! by `supersedes` edges (newer → older), and experiences are retired by an
//! `archived` flag. Every mutation is appended to the namespace [`Journal`].

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{EdgeId, EdgeKind, NodeId, NodeKind};
use crate::journal::{FlagKind, Journal, LogRecord};

/// `similar_to` requires a strictly greater cosine than this.
pub const SIMILAR_TO_MIN: f64 = 0.85;
/// `structurally_similar_to` requires at least this structural similarity.
pub const STRUCTURALLY_SIMILAR_MIN: f64 = 0.6;
/// Experience-to-experience `supersedes` requires a strictly greater structural similarity.
pub const SUPERSEDES_MIN: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node {0} already exists")]
    DuplicateId(NodeId),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("unknown node {0}")]
    MissingEndpoint(NodeId),
    #[error("{kind} cannot connect {from} -> {to}")]
    TypeConstraintViolation { kind: EdgeKind, from: NodeKind, to: NodeKind },
    #[error("{kind} weight {weight:?} violates its threshold")]
    ThresholdViolation { kind: EdgeKind, weight: Option<f64> },
    #[error("{0} is not an entity")]
    NotAnEntity(NodeId),
    #[error("{0} is already superseded")]
    AlreadySuperseded(NodeId),
    #[error("supersedes chain through {0} is cyclic")]
    CycleDetected(NodeId),
    #[error("journal replay out of order: {0}")]
    OutOfOrder(String),
}

pub type GraphResult<T> = Result<T, GraphError>;

/// Kind-specific data attached to a node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodePayload {
    Entity {
        #[serde(default)]
        properties: BTreeMap<String, String>,
    },
    /// Reference into the experience store; the record itself is journaled separately.
    Experience { commit_seq: u64 },
    SubTask { parent: Option<NodeId> },
    Operation { op: String },
    TaskTopic,
}

impl NodePayload {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodePayload::Entity { .. } => NodeKind::Entity,
            NodePayload::Experience { .. } => NodeKind::Experience,
            NodePayload::SubTask { .. } => NodeKind::SubTask,
            NodePayload::Operation { .. } => NodeKind::Operation,
            NodePayload::TaskTopic => NodeKind::TaskTopic,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub title: String,
    pub description: String,
    pub domain_tag: String,
    pub payload: NodePayload,
    pub created_at: u64,
    pub version: u32,
}

/// A node before the store assigns its id, sequence number and version.
#[derive(Clone, Debug, PartialEq)]
pub struct NewNode {
    pub title: String,
    pub description: String,
    pub domain_tag: String,
    pub payload: NodePayload,
}

impl NewNode {
    pub fn new(
        title: impl Into<String>,
        description: impl Into<String>,
        domain_tag: impl Into<String>,
        payload: NodePayload,
    ) -> Self {
        Self {
            title: title.into(),
            description: description.into(),
            domain_tag: domain_tag.into(),
            payload,
        }
    }

    pub fn kind(&self) -> NodeKind {
        self.payload.kind()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    pub created_at: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFlags {
    pub archived: bool,
    pub stale: bool,
}

/// In-memory graph for one namespace plus its append-only journal.
#[derive(Debug)]
pub struct GraphStore {
    nodes: Vec<GraphNode>,
    flags: Vec<NodeFlags>,
    edges: Vec<GraphEdge>,
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
    clock: u64,
    journal: Journal,
}

impl GraphStore {
    pub fn new(namespace: &str) -> Self {
        Self::with_journal(Journal::new(namespace, None))
    }

    pub fn with_journal(journal: Journal) -> Self {
        Self {
            nodes: Vec::new(),
            flags: Vec::new(),
            edges: Vec::new(),
            outgoing: Vec::new(),
            incoming: Vec::new(),
            clock: 0,
            journal,
        }
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn journal_mut(&mut self) -> &mut Journal {
        &mut self.journal
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn index_of(&self, id: NodeId) -> Option<usize> {
        let idx = usize::try_from(id.seq()).ok()?.checked_sub(1)?;
        match self.nodes.get(idx) {
            Some(node) if node.id == id => Some(idx),
            _ => None,
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn edges(&self) -> impl Iterator<Item = &GraphEdge> {
        self.edges.iter()
    }

    pub fn flags(&self, id: NodeId) -> NodeFlags {
        self.index_of(id).map(|i| self.flags[i]).unwrap_or_default()
    }

    pub fn is_archived(&self, id: NodeId) -> bool {
        self.flags(id).archived
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &GraphEdge> {
        let list = self.index_of(id).map(|i| self.outgoing[i].as_slice()).unwrap_or(&[]);
        list.iter().map(move |&e| &self.edges[e])
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &GraphEdge> {
        let list = self.index_of(id).map(|i| self.incoming[i].as_slice()).unwrap_or(&[]);
        list.iter().map(move |&e| &self.edges[e])
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId, kind: EdgeKind) -> bool {
        self.outgoing(from).any(|e| e.to == to && e.kind == kind)
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Inserts a node; the store assigns the id, `created_at` and version 1.
    pub fn add_node(&mut self, node: NewNode) -> GraphResult<NodeId> {
        validate_new_node(&node)?;
        let kind = node.kind();
        let id = NodeId::new(kind, self.nodes.len() as u64 + 1);
        let created_at = self.tick();
        let node = GraphNode {
            id,
            kind,
            title: node.title,
            description: node.description,
            domain_tag: node.domain_tag,
            payload: node.payload,
            created_at,
            version: 1,
        };
        self.journal.append(&LogRecord::Node { node: node.clone() });
        self.push_node(node);
        Ok(id)
    }

    fn push_node(&mut self, node: GraphNode) {
        self.nodes.push(node);
        self.flags.push(NodeFlags::default());
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
    }

    /// Replays a journaled node verbatim.
    pub fn insert_node(&mut self, node: GraphNode) -> GraphResult<NodeId> {
        if self.contains(node.id) || node.id.seq() <= self.nodes.len() as u64 {
            return Err(GraphError::DuplicateId(node.id));
        }
        if node.id.seq() != self.nodes.len() as u64 + 1 {
            return Err(GraphError::OutOfOrder(format!("node {} leaves a gap", node.id)));
        }
        if node.kind != node.payload.kind() || node.id.kind() != node.kind || node.version == 0 {
            return Err(GraphError::MalformedPayload(format!("node {} is inconsistent", node.id)));
        }
        validate_text(&node.title, &node.description)?;
        if node.created_at <= self.clock {
            return Err(GraphError::OutOfOrder(format!("node {} created_at regressed", node.id)));
        }
        self.clock = node.created_at;
        self.journal.append(&LogRecord::Node { node: node.clone() });
        let id = node.id;
        self.push_node(node);
        Ok(id)
    }

    /// Adds a typed edge after checking endpoint kinds and weight thresholds.
    pub fn add_edge(
        &mut self,
        from: NodeId,
        to: NodeId,
        kind: EdgeKind,
        weight: Option<f64>,
    ) -> GraphResult<EdgeId> {
        self.check_edge(from, to, kind, weight)?;
        let edge = GraphEdge {
            id: EdgeId(self.edges.len() as u64 + 1),
            from,
            to,
            kind,
            weight,
            created_at: self.tick(),
        };
        self.journal.append(&LogRecord::Edge { edge: edge.clone() });
        let id = edge.id;
        self.push_edge(edge);
        Ok(id)
    }

    /// Replays a journaled edge verbatim, re-checking every constraint.
    pub fn insert_edge(&mut self, edge: GraphEdge) -> GraphResult<EdgeId> {
        if edge.id.0 != self.edges.len() as u64 + 1 {
            return Err(GraphError::OutOfOrder(format!("edge {} out of sequence", edge.id)));
        }
        if edge.created_at <= self.clock {
            return Err(GraphError::OutOfOrder(format!("edge {} created_at regressed", edge.id)));
        }
        self.check_edge(edge.from, edge.to, edge.kind, edge.weight)?;
        self.clock = edge.created_at;
        self.journal.append(&LogRecord::Edge { edge: edge.clone() });
        let id = edge.id;
        self.push_edge(edge);
        Ok(id)
    }

    fn push_edge(&mut self, edge: GraphEdge) {
        let idx = self.edges.len();
        let from = self.index_of(edge.from).expect("checked endpoint");
        let to = self.index_of(edge.to).expect("checked endpoint");
        self.outgoing[from].push(idx);
        self.incoming[to].push(idx);
        self.edges.push(edge);
    }

    fn check_edge(
        &self,
        from: NodeId,
        to: NodeId,
        kind: EdgeKind,
        weight: Option<f64>,
    ) -> GraphResult<()> {
        let from_kind = self.node(from).ok_or(GraphError::MissingEndpoint(from))?.kind;
        let to_kind = self.node(to).ok_or(GraphError::MissingEndpoint(to))?.kind;
        use NodeKind::*;
        let endpoints_ok = match kind {
            EdgeKind::FollowedBy => from_kind == Operation && to_kind == Operation,
            EdgeKind::RelatesTo | EdgeKind::EquivalentTo => from_kind == Entity && to_kind == Entity,
            EdgeKind::Uses => from_kind == Operation && to_kind == Entity,
            EdgeKind::MemberOf => from_kind != TaskTopic && to_kind == TaskTopic,
            EdgeKind::UsesEntity => from_kind == Experience && to_kind == Entity,
            EdgeKind::SimilarTo | EdgeKind::StructurallySimilarTo | EdgeKind::DerivedFrom => {
                from_kind == Experience && to_kind == Experience
            }
            EdgeKind::Supersedes => {
                from_kind == to_kind && matches!(from_kind, Experience | Entity) && from != to
            }
        };
        let violation = GraphError::TypeConstraintViolation { kind, from: from_kind, to: to_kind };
        if !endpoints_ok {
            return Err(violation);
        }
        let weighted = kind.is_similarity() || (kind == EdgeKind::Supersedes && from_kind == Experience);
        if weighted != weight.is_some() {
            return Err(violation);
        }
        if let Some(w) = weight {
            let in_range = w.is_finite() && (0.0..=1.0).contains(&w);
            let passes = match kind {
                EdgeKind::SimilarTo => w > SIMILAR_TO_MIN,
                EdgeKind::StructurallySimilarTo => w >= STRUCTURALLY_SIMILAR_MIN,
                EdgeKind::Supersedes => w > SUPERSEDES_MIN,
                _ => true,
            };
            if !in_range || !passes {
                return Err(GraphError::ThresholdViolation { kind, weight });
            }
        }
        if kind == EdgeKind::Supersedes {
            if self.successor(to).is_some() {
                return Err(GraphError::AlreadySuperseded(to));
            }
            // `from` must not already descend from `to`, or the chain would loop.
            if self.chain_reaches(from, to)? {
                return Err(GraphError::CycleDetected(to));
            }
        }
        Ok(())
    }

    fn chain_reaches(&self, start: NodeId, target: NodeId) -> GraphResult<bool> {
        let mut cur = start;
        for _ in 0..=self.nodes.len() {
            if cur == target {
                return Ok(true);
            }
            match self.successor(cur) {
                Some(next) => cur = next,
                None => return Ok(false),
            }
        }
        Err(GraphError::CycleDetected(start))
    }

    /// The node that supersedes `id`, if any.
    pub fn successor(&self, id: NodeId) -> Option<NodeId> {
        self.incoming(id).find(|e| e.kind == EdgeKind::Supersedes).map(|e| e.from)
    }

    pub fn is_superseded(&self, id: NodeId) -> bool {
        self.successor(id).is_some()
    }

    /// Creates the next version of an entity and links it with `supersedes`.
    pub fn version_entity(&mut self, old_id: NodeId, replacement: NewNode) -> GraphResult<NodeId> {
        let old = self.node(old_id).ok_or(GraphError::MissingEndpoint(old_id))?;
        if old.kind != NodeKind::Entity || replacement.kind() != NodeKind::Entity {
            return Err(GraphError::NotAnEntity(old_id));
        }
        if self.is_superseded(old_id) {
            return Err(GraphError::AlreadySuperseded(old_id));
        }
        validate_new_node(&replacement)?;
        let version = old.version + 1;
        let id = NodeId::new(NodeKind::Entity, self.nodes.len() as u64 + 1);
        let created_at = self.tick();
        let node = GraphNode {
            id,
            kind: NodeKind::Entity,
            title: replacement.title,
            description: replacement.description,
            domain_tag: replacement.domain_tag,
            payload: replacement.payload,
            created_at,
            version,
        };
        self.journal.append(&LogRecord::Node { node: node.clone() });
        self.push_node(node);
        self.add_edge(id, old_id, EdgeKind::Supersedes, None)?;
        Ok(id)
    }

    /// Follows the supersedes chain from `id` to its newest element.
    pub fn resolve_latest(&self, id: NodeId) -> GraphResult<NodeId> {
        if !self.contains(id) {
            return Err(GraphError::MissingEndpoint(id));
        }
        let mut cur = id;
        for _ in 0..=self.nodes.len() {
            match self.successor(cur) {
                Some(next) => cur = next,
                None => return Ok(cur),
            }
        }
        Err(GraphError::CycleDetected(id))
    }

    /// Breadth-first closure over the given edge kinds, in both directions,
    /// excluding the seeds.
    pub fn traverse(
        &self,
        seeds: &BTreeSet<NodeId>,
        kinds: &[EdgeKind],
        max_hops: u32,
    ) -> BTreeSet<NodeId> {
        self.traverse_depths(seeds, kinds, max_hops).into_keys().collect()
    }

    /// Like [`traverse`](Self::traverse) but reports the hop distance of each reached node.
    pub fn traverse_depths(
        &self,
        seeds: &BTreeSet<NodeId>,
        kinds: &[EdgeKind],
        max_hops: u32,
    ) -> BTreeMap<NodeId, u32> {
        let mut seen: BTreeSet<NodeId> = seeds.iter().copied().filter(|s| self.contains(*s)).collect();
        let mut out = BTreeMap::new();
        let mut queue: VecDeque<(NodeId, u32)> = seen.iter().map(|&s| (s, 0)).collect();
        while let Some((node, depth)) = queue.pop_front() {
            if depth >= max_hops {
                continue;
            }
            let neighbours = self
                .outgoing(node)
                .filter(|e| kinds.contains(&e.kind))
                .map(|e| e.to)
                .chain(self.incoming(node).filter(|e| kinds.contains(&e.kind)).map(|e| e.from));
            let fresh: Vec<NodeId> = neighbours.collect();
            for next in fresh {
                if seen.insert(next) {
                    out.insert(next, depth + 1);
                    queue.push_back((next, depth + 1));
                }
            }
        }
        out
    }

    /// Sets a status flag; a no-op (and no journal entry) when unchanged.
    pub fn set_flag(&mut self, id: NodeId, flag: FlagKind, value: bool) -> GraphResult<bool> {
        let idx = self.index_of(id).ok_or(GraphError::MissingEndpoint(id))?;
        let slot = match flag {
            FlagKind::Archived => &mut self.flags[idx].archived,
            FlagKind::Stale => &mut self.flags[idx].stale,
        };
        if *slot == value {
            return Ok(false);
        }
        *slot = value;
        self.journal.append(&LogRecord::Flag { node: id, flag, value });
        Ok(true)
    }
}

fn validate_text(title: &str, description: &str) -> GraphResult<()> {
    if title.trim().is_empty() {
        return Err(GraphError::MalformedPayload("title is empty".into()));
    }
    if description.trim().is_empty() {
        return Err(GraphError::MalformedPayload("description is empty".into()));
    }
    Ok(())
}

fn validate_new_node(node: &NewNode) -> GraphResult<()> {
    validate_text(&node.title, &node.description)?;
    if let NodePayload::Operation { op } = &node.payload {
        if !op.starts_with("op:") || op.len() <= 3 {
            return Err(GraphError::MalformedPayload(format!("operation id `{op}` lacks the op: prefix")));
        }
    }
    Ok(())
}
