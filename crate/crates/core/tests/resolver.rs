use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use procmem::embedding::{EmbedError, Embedder, EmbeddingVector};
use procmem::graph::{GraphStore, NewNode, NodePayload};
use procmem::ids::{NodeId, NodeKind};
use procmem::resolver::{
    Candidate, Choice, DisambiguatorFailure, Disambiguator, EntityResolver, ResolutionAction, ResolverConfig,
};

/// Embeds a fixed set of texts to hand-picked unit vectors.
struct TableEmbedder(HashMap<&'static str, Vec<f32>>);

impl Embedder for TableEmbedder {
    fn dim(&self) -> usize {
        4
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        EmbeddingVector::new(self.0.get(text).cloned().ok_or(EmbedError::EmptyText)?)
    }
}

/// Query vector `e0` and two stored vectors at the given cosines to it.
fn embedder(cos_a: f32, cos_b: f32) -> Arc<dyn Embedder> {
    let ortho = |c: f32| (1.0 - c * c).sqrt();
    Arc::new(TableEmbedder(HashMap::from([
        ("query", vec![1.0, 0.0, 0.0, 0.0]),
        ("alpha", vec![cos_a, ortho(cos_a), 0.0, 0.0]),
        ("beta", vec![cos_b, 0.0, ortho(cos_b), 0.0]),
    ])))
}

#[derive(Default)]
struct Recording {
    calls: Mutex<Vec<Vec<(NodeId, f64)>>>,
    pick_second: bool,
}

struct Hook(Arc<Recording>);

impl Disambiguator for Hook {
    fn choose(&self, _: &str, candidates: &[Candidate]) -> Result<Choice, DisambiguatorFailure> {
        self.0.calls.lock().push(candidates.iter().map(|c| (c.node, c.score)).collect());
        let pick = if self.0.pick_second { &candidates[1] } else { &candidates[0] };
        Ok(Choice { node: pick.node, rationale: "test".into() })
    }
}

fn setup(cos_a: f32, cos_b: f32, hook: Arc<Recording>) -> (GraphStore, EntityResolver, NodeId, NodeId) {
    let cfg = ResolverConfig { tau_r: 0.85, delta_amb: 0.02, cache_capacity: 0 };
    let mut resolver = EntityResolver::new(cfg, embedder(cos_a, cos_b)).with_disambiguator(Box::new(Hook(hook)));
    let mut store = GraphStore::new("r");
    let mut add = |title: &str| {
        let id = store
            .add_node(NewNode::new(title, "d", "x", NodePayload::Entity { properties: Default::default() }))
            .unwrap();
        resolver.index_node(id, title).unwrap();
        id
    };
    let a = add("alpha");
    let b = add("beta");
    (store, resolver, a, b)
}

#[test]
fn near_tie_within_delta_goes_to_the_hook() {
    let hook = Arc::new(Recording { pick_second: true, ..Default::default() });
    let (mut store, mut resolver, a, b) = setup(0.91, 0.90, hook.clone());
    let out = resolver.resolve(&mut store, "query", NodeKind::Entity, "x").unwrap();
    assert_eq!(out.action, ResolutionAction::Disambiguated);
    assert_eq!(out.node, b);
    let calls = hook.calls.lock();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].iter().map(|c| c.0).collect::<Vec<_>>(), vec![a, b]);
    assert!((calls[0][0].1 - 0.91).abs() < 1e-6 && (calls[0][1].1 - 0.90).abs() < 1e-6);
    assert_eq!(store.node_count(), 2);
}

#[test]
fn clear_winner_matches_without_the_hook() {
    let hook = Arc::new(Recording::default());
    let (mut store, mut resolver, a, _) = setup(0.91, 0.88, hook.clone());
    let out = resolver.resolve(&mut store, "query", NodeKind::Entity, "x").unwrap();
    assert_eq!(out.action, ResolutionAction::MatchedExisting);
    assert_eq!(out.node, a);
    assert!(hook.calls.lock().is_empty());
}

#[test]
fn below_threshold_creates_a_node() {
    let hook = Arc::new(Recording::default());
    let (mut store, mut resolver, _, _) = setup(0.84, 0.83, hook.clone());
    assert_eq!(resolver.lookup(&store, "query", NodeKind::Entity, "x").unwrap(), None);
    let out = resolver.resolve(&mut store, "query", NodeKind::Entity, "x").unwrap();
    assert_eq!(out.action, ResolutionAction::CreatedNew);
    assert_eq!(store.node_count(), 3);
    assert!(hook.calls.lock().is_empty());
    // The new node is now the exact match.
    let again = resolver.resolve(&mut store, "query", NodeKind::Entity, "x").unwrap();
    assert_eq!((again.node, again.action), (out.node, ResolutionAction::MatchedExisting));
}

#[test]
fn lookup_never_writes() {
    let hook = Arc::new(Recording::default());
    let (store, resolver, a, _) = setup(0.91, 0.90, hook);
    let before = store.journal().export_string();
    let out = resolver.lookup(&store, "query", NodeKind::Entity, "x").unwrap().unwrap();
    assert_eq!(out.node, a);
    assert_eq!(store.journal().export_string(), before);
}

#[test]
fn cached_results_equal_fresh_ones() {
    let embed: Arc<dyn Embedder> = Arc::new(procmem::embedding::StubEmbedder::new(128));
    let mut cached = EntityResolver::new(ResolverConfig { cache_capacity: 8, ..Default::default() }, embed.clone());
    let mut fresh = EntityResolver::new(ResolverConfig { cache_capacity: 0, ..Default::default() }, embed);
    let (mut s1, mut s2) = (GraphStore::new("a"), GraphStore::new("a"));
    for mention in ["acme", "globex", "acme", "acme corp", "globex", "acme"] {
        let x = cached.resolve(&mut s1, mention, NodeKind::Entity, "biz").unwrap();
        let y = fresh.resolve(&mut s2, mention, NodeKind::Entity, "biz").unwrap();
        assert_eq!(x, y, "mention {mention}");
    }
    assert!(cached.cache_len() > 0);
}
