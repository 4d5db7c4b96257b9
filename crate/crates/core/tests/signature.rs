mod common;

use procmem::ids::{EdgeKind, NodeKind};
use procmem::ontology::StructuralSignature;
use procmem::signature::{
    canonical_signature, extract_signature, lcs_length, signature_similarity, structural_similarity, OperationCanon,
    StepSpec,
};
use proptest::prelude::*;

fn seq() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..12)
}

proptest! {
    #[test]
    fn lcs_is_symmetric_and_bounded(a in seq(), b in seq()) {
        let l = lcs_length(&a, &b);
        prop_assert_eq!(l, lcs_length(&b, &a));
        prop_assert!(l <= a.len().min(b.len()));
        let s = structural_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, structural_similarity(&b, &a));
    }

    #[test]
    fn subsequences_are_fully_similar(a in prop::collection::vec(0u8..5, 1..12), mask in any::<u16>()) {
        let sub: Vec<u8> = a.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, x)| *x).collect();
        prop_assert_eq!(lcs_length(&a, &sub), sub.len());
        if !sub.is_empty() {
            prop_assert_eq!(structural_similarity(&a, &sub), 1.0);
        }
        prop_assert_eq!(structural_similarity(&a, &a), 1.0);
    }

    #[test]
    fn appending_never_shrinks_lcs(a in seq(), b in seq(), x in 0u8..5) {
        let mut longer = a.clone();
        longer.push(x);
        let base = lcs_length(&a, &b);
        let grown = lcs_length(&longer, &b);
        prop_assert!(grown == base || grown == base + 1);
    }

    #[test]
    fn canonicalization_is_idempotent(text in "[a-z ]{1,30}") {
        let canon = OperationCanon::default();
        let op = canon.canonicalize(&text);
        prop_assert!(op.starts_with("op:"));
        prop_assert_eq!(canon.canonicalize(&op), op);
    }
}

#[test]
fn empty_sequences_have_zero_similarity() {
    let empty: [u8; 0] = [];
    assert_eq!(structural_similarity(&empty, &[1u8, 2]), 0.0);
    assert_eq!(structural_similarity(&empty, &empty), 0.0);
}

#[test]
fn similarity_uses_the_shorter_length() {
    let a = StructuralSignature::new(vec!["op:a".into(), "op:b".into()]);
    let b = StructuralSignature::new(vec!["op:x".into(), "op:a".into(), "op:y".into(), "op:b".into()]);
    assert_eq!(signature_similarity(&a, &b), 1.0);
    let c = StructuralSignature::new(vec!["op:b".into(), "op:a".into(), "op:z".into()]);
    assert_eq!(signature_similarity(&a, &c), 0.5);
}

#[test]
fn synonyms_share_a_signature() {
    let canon = OperationCanon::default();
    let steps = |texts: &[&str]| texts.iter().map(|t| StepSpec::new(*t)).collect::<Vec<_>>();
    let a = canonical_signature(&canon, &steps(&["Resolve entity", "group by", "compare"]));
    let b = canonical_signature(&canon, &steps(&["link entity", "aggregate", "contrast"]));
    assert_eq!(a, b);
    assert_eq!(a.ops, ["op:entity_resolution", "op:aggregation", "op:comparison"]);
    assert_eq!(canon.canonicalize("op:Custom Thing"), "op:custom_thing");
}

#[test]
fn extraction_reuses_global_operation_nodes() {
    let mut mem = common::memory("sig");
    let steps: Vec<StepSpec> = ["resolve entity", "aggregate", "resolve entity"].iter().map(|s| StepSpec::new(*s)).collect();
    for domain in ["sports", "business"] {
        let (store, resolver, canon) = mem.graph_and_resolver();
        let sig = extract_signature(store, resolver, canon, &steps, domain).unwrap();
        assert_eq!(sig.ops, ["op:entity_resolution", "op:aggregation", "op:entity_resolution"]);
    }
    let ops: Vec<_> = mem.store().nodes_of_kind(NodeKind::Operation).collect();
    assert_eq!(ops.len(), 2, "operations are shared across domains");
    let follows = mem.store().edges().filter(|e| e.kind == EdgeKind::FollowedBy).count();
    assert_eq!(follows, 2, "repeated transitions are not duplicated");
}
