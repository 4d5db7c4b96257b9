mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use procmem::graph::{GraphError, GraphStore, NewNode, NodePayload};
use procmem::ids::{EdgeKind, NodeId, NodeKind};
use procmem::memory::Memory;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [EdgeKind; 10] = EdgeKind::ALL;

/// Plain BFS over an adjacency map built from the raw edge list.
fn bfs_oracle(store: &GraphStore, seeds: &BTreeSet<NodeId>, kinds: &[EdgeKind], hops: u32) -> BTreeMap<NodeId, u32> {
    let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for e in store.edges().filter(|e| kinds.contains(&e.kind)) {
        adj.entry(e.from).or_default().push(e.to);
        adj.entry(e.to).or_default().push(e.from);
    }
    let mut dist: HashMap<NodeId, u32> = seeds.iter().filter(|s| store.contains(**s)).map(|&s| (s, 0)).collect();
    let mut queue: VecDeque<NodeId> = dist.keys().copied().collect();
    while let Some(n) = queue.pop_front() {
        let d = dist[&n];
        if d == hops {
            continue;
        }
        for &m in adj.get(&n).into_iter().flatten() {
            if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(m) {
                slot.insert(d + 1);
                queue.push_back(m);
            }
        }
    }
    dist.into_iter().filter(|(_, d)| *d > 0).collect()
}

fn entity(title: &str) -> NewNode {
    NewNode::new(title, "d", "x", NodePayload::Entity { properties: Default::default() })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traversal_matches_bfs_oracle(seed in any::<u64>(), n in 5usize..40, hops in 0u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mem = common::random_memory(&mut rng, "graph", n);
        let store = mem.store();
        let all: Vec<NodeId> = store.nodes().map(|n| n.id).collect();
        let k = rng.gen_range(1..=3);
        let seeds: BTreeSet<NodeId> = all.choose_multiple(&mut rng, k).copied().collect();
        let kinds: Vec<EdgeKind> = KINDS.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        let got = store.traverse_depths(&seeds, &kinds, hops);
        prop_assert_eq!(&got, &bfs_oracle(store, &seeds, &kinds, hops));
        prop_assert!(got.keys().all(|id| !seeds.contains(id)));
        prop_assert_eq!(store.traverse(&seeds, &kinds, hops), got.keys().copied().collect::<BTreeSet<_>>());
    }

    #[test]
    fn version_chains_resolve_to_newest(len in 1usize..8) {
        let mut store = GraphStore::new("chain");
        let first = store.add_node(entity("v1")).unwrap();
        let mut chain = vec![first];
        for i in 1..len {
            let next = store.version_entity(*chain.last().unwrap(), entity(&format!("v{}", i + 1))).unwrap();
            prop_assert_eq!(store.node(next).unwrap().version, i as u32 + 1);
            chain.push(next);
        }
        let newest = *chain.last().unwrap();
        for &id in &chain {
            prop_assert_eq!(store.resolve_latest(id).unwrap(), newest);
            prop_assert_eq!(store.is_superseded(id), id != newest);
        }
    }

    #[test]
    fn replay_reproduces_graph(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mem = common::random_memory(&mut rng, "replay", n);
        let back = Memory::import_str(&mem.export_string(), common::embedder()).unwrap();
        prop_assert_eq!(back.store().nodes().collect::<Vec<_>>(), mem.store().nodes().collect::<Vec<_>>());
        prop_assert_eq!(back.store().edges().collect::<Vec<_>>(), mem.store().edges().collect::<Vec<_>>());
        for node in mem.store().nodes() {
            prop_assert_eq!(back.store().flags(node.id), mem.store().flags(node.id));
        }
        prop_assert_eq!(back.commit_order(), mem.commit_order());
    }
}

#[test]
fn superseded_entity_cannot_be_versioned_twice() {
    let mut store = GraphStore::new("t");
    let a = store.add_node(entity("a")).unwrap();
    store.version_entity(a, entity("a2")).unwrap();
    assert!(matches!(store.version_entity(a, entity("a3")), Err(GraphError::AlreadySuperseded(id)) if id == a));
}

#[test]
fn only_entities_are_versioned() {
    let mut store = GraphStore::new("t");
    let op = store
        .add_node(NewNode::new("op:join", "d", "global", NodePayload::Operation { op: "op:join".into() }))
        .unwrap();
    assert!(matches!(store.version_entity(op, entity("x")), Err(GraphError::NotAnEntity(_))));
    assert_eq!(op.kind(), NodeKind::Operation);
}

#[test]
fn missing_nodes_are_reported() {
    let store = GraphStore::new("t");
    let ghost = NodeId::new(NodeKind::Entity, 99);
    assert!(matches!(store.resolve_latest(ghost), Err(GraphError::MissingEndpoint(_))));
    assert!(store.traverse(&BTreeSet::from([ghost]), &KINDS, 2).is_empty());
}
