//! Identifiers and the closed node/edge taxonomies of the knowledge graph.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The five node kinds of the procedural knowledge graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Entity,
    Experience,
    SubTask,
    Operation,
    TaskTopic,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Entity,
        NodeKind::Experience,
        NodeKind::SubTask,
        NodeKind::Operation,
        NodeKind::TaskTopic,
    ];

    /// Prefix used when rendering ids of this kind.
    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::Entity => "ent",
            NodeKind::Experience => "exp",
            NodeKind::SubTask => "sub",
            NodeKind::Operation => "opr",
            NodeKind::TaskTopic => "tpc",
        }
    }

    fn from_prefix(prefix: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.prefix() == prefix)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NodeKind::Entity => "entity",
            NodeKind::Experience => "experience",
            NodeKind::SubTask => "sub_task",
            NodeKind::Operation => "operation",
            NodeKind::TaskTopic => "task_topic",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed id `{0}`")]
pub struct ParseIdError(pub String);

/// Namespace-scoped node id: a monotonic sequence number plus the kind
/// prefix it renders with (`exp:000042`). Ordering follows the sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    kind: NodeKind,
    seq: u64,
}

impl NodeId {
    pub fn new(kind: NodeKind, seq: u64) -> Self {
        Self { kind, seq }
    }

    pub fn kind(self) -> NodeKind {
        self.kind
    }

    pub fn seq(self) -> u64 {
        self.seq
    }
}

impl Ord for NodeId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.seq.cmp(&other.seq).then(self.kind.cmp(&other.kind))
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:06}", self.kind.prefix(), self.seq)
    }
}

impl FromStr for NodeId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (prefix, digits) = s.split_once(':').ok_or_else(|| ParseIdError(s.to_string()))?;
        let kind = NodeKind::from_prefix(prefix).ok_or_else(|| ParseIdError(s.to_string()))?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseIdError(s.to_string()));
        }
        let seq = digits.parse().map_err(|_| ParseIdError(s.to_string()))?;
        Ok(NodeId { kind, seq })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Edge id, rendered `edge:000007`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "edge:{:06}", self.0)
    }
}

impl FromStr for EdgeId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("edge:")
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .map(EdgeId)
            .ok_or_else(|| ParseIdError(s.to_string()))
    }
}

impl Serialize for EdgeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EdgeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The ten edge kinds. Upper-case kinds are structural links built during
/// planning; lower-case kinds connect experiences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    #[serde(rename = "FOLLOWED_BY")]
    FollowedBy,
    #[serde(rename = "RELATES_TO")]
    RelatesTo,
    #[serde(rename = "USES")]
    Uses,
    #[serde(rename = "EQUIVALENT_TO")]
    EquivalentTo,
    #[serde(rename = "MEMBER_OF")]
    MemberOf,
    #[serde(rename = "uses_entity")]
    UsesEntity,
    #[serde(rename = "similar_to")]
    SimilarTo,
    #[serde(rename = "structurally_similar_to")]
    StructurallySimilarTo,
    #[serde(rename = "derived_from")]
    DerivedFrom,
    #[serde(rename = "supersedes")]
    Supersedes,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 10] = [
        EdgeKind::FollowedBy,
        EdgeKind::RelatesTo,
        EdgeKind::Uses,
        EdgeKind::EquivalentTo,
        EdgeKind::MemberOf,
        EdgeKind::UsesEntity,
        EdgeKind::SimilarTo,
        EdgeKind::StructurallySimilarTo,
        EdgeKind::DerivedFrom,
        EdgeKind::Supersedes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::FollowedBy => "FOLLOWED_BY",
            EdgeKind::RelatesTo => "RELATES_TO",
            EdgeKind::Uses => "USES",
            EdgeKind::EquivalentTo => "EQUIVALENT_TO",
            EdgeKind::MemberOf => "MEMBER_OF",
            EdgeKind::UsesEntity => "uses_entity",
            EdgeKind::SimilarTo => "similar_to",
            EdgeKind::StructurallySimilarTo => "structurally_similar_to",
            EdgeKind::DerivedFrom => "derived_from",
            EdgeKind::Supersedes => "supersedes",
        }
    }

    /// Kinds whose weight carries a similarity score.
    pub fn is_similarity(self) -> bool {
        matches!(self, EdgeKind::SimilarTo | EdgeKind::StructurallySimilarTo)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_id_renders_and_parses() {
        let id = NodeId::new(NodeKind::Experience, 42);
        assert_eq!(id.to_string(), "exp:000042");
        assert_eq!("exp:000042".parse::<NodeId>().unwrap(), id);
        assert_eq!("ent:1234567".parse::<NodeId>().unwrap().seq(), 1_234_567);
        assert!("exp:".parse::<NodeId>().is_err());
        assert!("foo:000001".parse::<NodeId>().is_err());
        assert!("exp:12a".parse::<NodeId>().is_err());
    }

    #[test]
    fn node_ids_order_by_sequence() {
        let a = NodeId::new(NodeKind::TaskTopic, 3);
        let b = NodeId::new(NodeKind::Entity, 10);
        assert!(a < b);
    }

    #[test]
    fn edge_kind_serde_names() {
        for kind in EdgeKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.as_str()));
        }
    }
}
