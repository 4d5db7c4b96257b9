//! Embedding provider interface, a deterministic offline stub, and an exact
//! cosine index over stored vectors.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::NodeId;

pub const DEFAULT_DIM: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("embedding contains non-finite values")]
    NonFinite,
}

/// Fixed-length embedding. Values are stored as `f32` and serialized with nine
/// significant digits, which round-trips every `f32` exactly.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

fn nine_digits(v: f32) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|&v| nine_digits(v)))
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        EmbeddingVector::new(raw.into_iter().map(|v| v as f32).collect()).map_err(serde::de::Error::custom)
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum::<f64>() + 0.0
}

/// Same value as `dot(a, b)` when `nz` lists every index where `b` is
/// non-zero in ascending order: skipped terms are exact zeros.
fn sparse_dot(a: &[f32], b: &[f32], nz: &[u32]) -> f64 {
    nz.iter().map(|&i| f64::from(a[i as usize]) * f64::from(b[i as usize])).sum::<f64>() + 0.0
}

fn nonzeros(v: &[f32]) -> Vec<u32> {
    v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i as u32).collect()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

/// Text embedding provider.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Signed-hash bag of whitespace tokens, L2-normalised.
///
/// Tokens are lower-cased and stripped of surrounding punctuation. Each token
/// hashes (SHA-256) to one bucket with a ±1 contribution, so similarity grows
/// with lexical overlap and texts with no shared token are near-orthogonal.
#[derive(Clone, Debug)]
pub struct StubEmbedder {
    dim: usize,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM)
    }
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
}

fn token_hash(token: &str) -> u64 {
    let digest = Sha256::digest(token.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl Embedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0f64; self.dim];
        for token in tokens(text) {
            let h = token_hash(&token);
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[(h % self.dim as u64) as usize] += sign;
        }
        let mut norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // All tokens cancelled (or were pure punctuation): fall back to the whole text.
            let h = token_hash(text.trim());
            acc[(h % self.dim as u64) as usize] = 1.0;
            norm = 1.0;
        }
        EmbeddingVector::new(acc.into_iter().map(|v| (v / norm) as f32).collect())
    }
}

/// Orders scored hits by descending score, then ascending id.
pub fn rank_order(a: &(NodeId, f64), b: &(NodeId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Exact linear-scan cosine index.
#[derive(Clone, Debug)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<NodeId>,
    vectors: Vec<EmbeddingVector>,
    norms: Vec<f64>,
    nonzeros: Vec<Vec<u32>>,
    positions: HashMap<NodeId, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self { dim, ids: Vec::new(), vectors: Vec::new(), norms: Vec::new(), nonzeros: Vec::new(), positions: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&EmbeddingVector> {
        self.positions.get(&id).map(|&i| &self.vectors[i])
    }

    /// Inserts or replaces the vector stored for `id`.
    pub fn insert(&mut self, id: NodeId, vector: EmbeddingVector) -> Result<(), EmbedError> {
        if vector.dim() != self.dim {
            return Err(EmbedError::DimMismatch { left: vector.dim(), right: self.dim });
        }
        let norm = vector.norm();
        if norm == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        match self.positions.get(&id) {
            Some(&i) => {
                self.nonzeros[i] = nonzeros(vector.values());
                self.vectors[i] = vector;
                self.norms[i] = norm;
            }
            None => {
                self.positions.insert(id, self.ids.len());
                self.ids.push(id);
                self.nonzeros.push(nonzeros(vector.values()));
                self.vectors.push(vector);
                self.norms.push(norm);
            }
        }
        Ok(())
    }

    /// Cosine between the query and a stored vector.
    pub fn score(&self, query: &EmbeddingVector, id: NodeId) -> Result<Option<f64>, EmbedError> {
        if query.dim() != self.dim {
            return Err(EmbedError::DimMismatch { left: query.dim(), right: self.dim });
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(self
            .positions
            .get(&id)
            .map(|&i| (self.dot_at(query, i) / (qn * self.norms[i])).clamp(-1.0, 1.0)))
    }

    fn dot_at(&self, query: &EmbeddingVector, i: usize) -> f64 {
        sparse_dot(query.values(), self.vectors[i].values(), &self.nonzeros[i])
    }

    /// Cosine between two stored vectors; equals `cosine` on the same vectors.
    pub fn similarity(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (&i, &j) = (self.positions.get(&a)?, self.positions.get(&b)?);
        let d = sparse_dot(self.vectors[i].values(), self.vectors[j].values(), &self.nonzeros[j]);
        Some((d / (self.norms[i] * self.norms[j])).clamp(-1.0, 1.0))
    }

    /// Top-`k` ids by cosine among those passing `filter`, ties by ascending id.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        filter: impl Fn(NodeId) -> bool,
    ) -> Result<Vec<(NodeId, f64)>, EmbedError> {
        if query.dim() != self.dim {
            return Err(EmbedError::DimMismatch { left: query.dim(), right: self.dim });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let qn = query.norm();
        if qn == 0.0 {
            return Err(EmbedError::ZeroVector);
        }
        let mut hits: Vec<(NodeId, f64)> = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| filter(**id))
            .map(|(i, &id)| {
                let s = self.dot_at(query, i) / (qn * self.norms[i]);
                (id, s.clamp(-1.0, 1.0))
            })
            .collect();
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_by(rank_order);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::NodeKind;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[1.0, 1.0, 0.0]);
        let b = v(&[1.0, 0.0, 0.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert!((cosine(&b, &v(&[0.0, 1.0, 0.0])).unwrap()).abs() < 1e-12);
        assert!((cosine(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine(&a, &v(&[1.0, 0.0])), Err(EmbedError::DimMismatch { left: 3, right: 2 }));
        assert_eq!(cosine(&a, &v(&[0.0, 0.0, 0.0])), Err(EmbedError::ZeroVector));
    }

    #[test]
    fn stub_is_deterministic_and_self_similar() {
        let e = StubEmbedder::default();
        let x = e.embed("group csv by category").unwrap();
        assert_eq!(x, e.embed("group csv by category").unwrap());
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(e.embed("   "), Err(EmbedError::EmptyText));
        assert_eq!(x.dim(), DEFAULT_DIM);
    }

    #[test]
    fn stub_similarity_tracks_token_overlap() {
        let e = StubEmbedder::default();
        let base = e.embed("load sales table filter region").unwrap();
        let four_shared = e.embed("load sales table filter quarter").unwrap();
        let none_shared = e.embed("compute orbital period of moons").unwrap();
        // Overlap oracle: 4 shared of 5 unique tokens each gives 4/5 absent collisions.
        let close = cosine(&base, &four_shared).unwrap();
        let far = cosine(&base, &none_shared).unwrap();
        assert!(close > far);
        assert!((close - 0.8).abs() < 0.2);
    }

    #[test]
    fn serialization_round_trips_exactly() {
        let e = StubEmbedder::new(64);
        let x = e.embed("a b c d e f g").unwrap();
        let json = serde_json::to_string(&x).unwrap();
        let back: EmbeddingVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, x);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn index_edge_cases() {
        let idx = VectorIndex::new(3);
        assert!(idx.search(&v(&[1.0, 0.0, 0.0]), 5, |_| true).unwrap().is_empty());
        let mut idx = VectorIndex::new(3);
        let a = NodeId::new(NodeKind::Experience, 1);
        let b = NodeId::new(NodeKind::Experience, 2);
        idx.insert(b, v(&[1.0, 0.0, 0.0])).unwrap();
        idx.insert(a, v(&[1.0, 0.0, 0.0])).unwrap();
        let hits = idx.search(&v(&[1.0, 0.0, 0.0]), 10, |_| true).unwrap();
        assert_eq!(hits.iter().map(|h| h.0).collect::<Vec<_>>(), vec![a, b]);
        assert!(idx.search(&v(&[1.0, 0.0]), 1, |_| true).is_err());
        assert_eq!(idx.search(&v(&[1.0, 0.0, 0.0]), 10, |id| id != a).unwrap().len(), 1);
    }
}
