//! Mention-to-node resolution: embed, search same-kind same-domain
//! candidates, match, disambiguate or create, with an LRU outcome cache.

use std::collections::{BTreeSet, HashMap};
use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{tokens, EmbedError, Embedder, EmbeddingVector, VectorIndex};
use crate::graph::{GraphError, GraphStore, NewNode, NodePayload};
use crate::ids::{NodeId, NodeKind};

/// Domain tag under which Operation nodes live; operations are shared by
/// every task domain.
pub const GLOBAL_DOMAIN: &str = "global";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolverConfig {
    pub tau_r: f64,
    pub delta_amb: f64,
    /// Zero disables the cache.
    pub cache_capacity: usize,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self { tau_r: 0.85, delta_amb: 0.02, cache_capacity: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionAction {
    MatchedExisting,
    CreatedNew,
    Disambiguated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionOutcome {
    pub node: NodeId,
    pub action: ResolutionAction,
    pub score: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ResolverError {
    #[error("mention is empty")]
    EmptyMention,
    #[error("only entity and operation mentions are resolvable, got {0}")]
    UnsupportedKind(NodeKind),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub node: NodeId,
    pub title: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub node: NodeId,
    pub rationale: String,
}

#[derive(Debug, Error)]
#[error("disambiguator failed: {0}")]
pub struct DisambiguatorFailure(pub String);

/// Picks one of several near-tied candidates for a mention.
pub trait Disambiguator: Send + Sync {
    fn choose(&self, mention: &str, candidates: &[Candidate]) -> Result<Choice, DisambiguatorFailure>;
}

/// Highest token Jaccard overlap with the mention, then lowest node id.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalDisambiguator;

fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokens(a).collect();
    let b: BTreeSet<String> = tokens(b).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

impl Disambiguator for LexicalDisambiguator {
    fn choose(&self, mention: &str, candidates: &[Candidate]) -> Result<Choice, DisambiguatorFailure> {
        let best = candidates
            .iter()
            .map(|c| (jaccard(mention, &c.title), c))
            .max_by(|(ja, a), (jb, b)| ja.total_cmp(jb).then(b.node.cmp(&a.node)))
            .ok_or_else(|| DisambiguatorFailure("no candidates".into()))?;
        Ok(Choice { node: best.1.node, rationale: format!("lexical overlap {:.3}, lowest id on ties", best.0) })
    }
}

type CacheKey = (String, NodeKind, String);

pub struct EntityResolver {
    cfg: ResolverConfig,
    embedder: Arc<dyn Embedder>,
    mentions: VectorIndex,
    disambiguator: Box<dyn Disambiguator>,
    cache: Option<LruCache<CacheKey, (u64, ResolutionOutcome)>>,
    generations: HashMap<(NodeKind, String), u64>,
}

impl std::fmt::Debug for EntityResolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EntityResolver").field("cfg", &self.cfg).field("indexed", &self.mentions.len()).finish()
    }
}

enum Decision {
    Match(ResolutionOutcome),
    Create(EmbeddingVector),
}

impl EntityResolver {
    pub fn new(cfg: ResolverConfig, embedder: Arc<dyn Embedder>) -> Self {
        let cache = NonZeroUsize::new(cfg.cache_capacity).map(LruCache::new);
        Self {
            mentions: VectorIndex::new(embedder.dim()),
            cfg,
            embedder,
            disambiguator: Box::new(LexicalDisambiguator),
            cache,
            generations: HashMap::new(),
        }
    }

    pub fn with_disambiguator(mut self, hook: Box<dyn Disambiguator>) -> Self {
        self.disambiguator = hook;
        self
    }

    pub fn config(&self) -> &ResolverConfig {
        &self.cfg
    }

    /// Indexes an existing Entity or Operation node under its title.
    pub fn index_node(&mut self, id: NodeId, title: &str) -> Result<(), ResolverError> {
        let v = self.embedder.embed(title)?;
        self.mentions.insert(id, v)?;
        Ok(())
    }

    /// Invalidates cached outcomes for one (kind, domain) bucket.
    pub fn invalidate(&mut self, kind: NodeKind, domain: &str) {
        *self.generations.entry((kind, domain.to_string())).or_default() += 1;
    }

    fn generation(&self, kind: NodeKind, domain: &str) -> u64 {
        self.generations.get(&(kind, domain.to_string())).copied().unwrap_or(0)
    }

    fn decide(
        &self,
        store: &GraphStore,
        mention: &str,
        kind: NodeKind,
        domain: &str,
    ) -> Result<(Decision, Option<Vec<Candidate>>), ResolverError> {
        if mention.trim().is_empty() {
            return Err(ResolverError::EmptyMention);
        }
        if !matches!(kind, NodeKind::Entity | NodeKind::Operation) {
            return Err(ResolverError::UnsupportedKind(kind));
        }
        let query = self.embedder.embed(mention)?;
        let hits = self.mentions.search(&query, usize::MAX, |id| {
            id.kind() == kind
                && !store.is_superseded(id)
                && store.node(id).is_some_and(|n| n.domain_tag == domain)
        })?;
        let Some(&(top, top_score)) = hits.first() else {
            return Ok((Decision::Create(query), None));
        };
        if top_score < self.cfg.tau_r {
            return Ok((Decision::Create(query), None));
        }
        let close: Vec<Candidate> = hits
            .iter()
            .take_while(|(_, s)| *s >= self.cfg.tau_r && top_score - *s <= self.cfg.delta_amb)
            .map(|&(node, score)| Candidate {
                node,
                title: store.node(node).map(|n| n.title.clone()).unwrap_or_default(),
                score,
            })
            .collect();
        if close.len() >= 2 {
            return Ok((Decision::Create(query), Some(close)));
        }
        Ok((
            Decision::Match(ResolutionOutcome { node: top, action: ResolutionAction::MatchedExisting, score: top_score }),
            None,
        ))
    }

    /// Resolution without writes: `None` where `resolve` would create a node.
    pub fn lookup(
        &self,
        store: &GraphStore,
        mention: &str,
        kind: NodeKind,
        domain: &str,
    ) -> Result<Option<ResolutionOutcome>, ResolverError> {
        match self.decide(store, mention, kind, domain)? {
            (Decision::Match(out), _) => Ok(Some(out)),
            (Decision::Create(_), Some(candidates)) => Ok(self.disambiguate(mention, &candidates)),
            (Decision::Create(_), None) => Ok(None),
        }
    }

    fn disambiguate(&self, mention: &str, candidates: &[Candidate]) -> Option<ResolutionOutcome> {
        match self.disambiguator.choose(mention, candidates) {
            Ok(choice) => match candidates.iter().find(|c| c.node == choice.node) {
                Some(c) => {
                    log::debug!("disambiguated `{mention}` to {}: {}", c.node, choice.rationale);
                    Some(ResolutionOutcome { node: c.node, action: ResolutionAction::Disambiguated, score: c.score })
                }
                None => {
                    log::warn!("disambiguator chose non-candidate {} for `{mention}`; creating a new node", choice.node);
                    None
                }
            },
            Err(err) => {
                log::warn!("{err}; creating a new node for `{mention}`");
                None
            }
        }
    }

    /// Resolves a mention to a node, creating one when nothing matches.
    pub fn resolve(
        &mut self,
        store: &mut GraphStore,
        mention: &str,
        kind: NodeKind,
        domain: &str,
    ) -> Result<ResolutionOutcome, ResolverError> {
        let key: CacheKey = (mention.to_string(), kind, domain.to_string());
        let generation = self.generation(kind, domain);
        if let Some(cache) = self.cache.as_mut() {
            if let Some((g, out)) = cache.get(&key) {
                if *g == generation {
                    return Ok(out.clone());
                }
            }
        }

        let (decision, candidates) = self.decide(store, mention, kind, domain)?;
        let outcome = match decision {
            Decision::Match(out) => out,
            Decision::Create(query) => match candidates.and_then(|c| self.disambiguate(mention, &c)) {
                Some(out) => out,
                None => {
                    let payload = match kind {
                        NodeKind::Entity => NodePayload::Entity { properties: Default::default() },
                        _ => NodePayload::Operation { op: mention.to_string() },
                    };
                    let description = format!("{kind} `{mention}` in domain {domain}");
                    let id = store.add_node(NewNode::new(mention, description, domain, payload))?;
                    self.mentions.insert(id, query)?;
                    self.invalidate(kind, domain);
                    let created = ResolutionOutcome { node: id, action: ResolutionAction::CreatedNew, score: 1.0 };
                    // Cache what a fresh call would now compute, so hits equal misses.
                    if let Some(cache) = self.cache.as_mut() {
                        cache.pop(&key);
                    }
                    return Ok(created);
                }
            },
        };
        if let Some(cache) = self.cache.as_mut() {
            cache.put(key, (generation, outcome.clone()));
        }
        Ok(outcome)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.len())
    }
}
