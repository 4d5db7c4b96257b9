mod common;

use common::Spec;
use procmem::ids::{EdgeKind, NodeId};
use procmem::ingest::{commit, IngestError};
use procmem::maintenance::compact;
use procmem::ontology::{ErrorClass, Status};
use procmem::retrieval::{retrieve, RetrievalConfig, RetrievalQuery};

const OPS: [&str; 3] = ["op:lookup", "op:aggregation", "op:ranking"];

fn edge(mem: &procmem::memory::Memory, from: NodeId, to: NodeId, kind: EdgeKind) -> bool {
    mem.store().has_edge(from, to, kind)
}

#[test]
fn higher_quality_same_status_supersedes() {
    let mut mem = common::memory("dom");
    let old = common::add(&mut mem, &Spec::new("rank teams by wins", "sports", &OPS).scores(1.0, 0.2, 0.2, false));
    let new = common::add(&mut mem, &Spec::new("rank teams by goals", "sports", &OPS).scores(1.0, 1.0, 1.0, false));
    let (old, new) = (old.node.unwrap(), new.node.unwrap());
    assert!(edge(&mem, new, old, EdgeKind::Supersedes));
    assert!(mem.store().flags(old).archived);
    assert!(!mem.is_live(old) && mem.is_live(new));

    let query = RetrievalQuery {
        embedding: mem.embedder().embed("rank teams by wins").unwrap(),
        signature: procmem::ontology::StructuralSignature::new(OPS.iter().map(|s| s.to_string()).collect()),
    };
    let bundle = retrieve(&mem, &query, &RetrievalConfig::default());
    assert_eq!(bundle.ids().collect::<Vec<_>>(), vec![new]);
}

#[test]
fn lower_quality_newcomer_does_not_supersede() {
    let mut mem = common::memory("dom");
    let best = common::add(&mut mem, &Spec::new("a b c", "d", &OPS)).node.unwrap();
    let worse = common::add(&mut mem, &Spec::new("a b d", "d", &OPS).scores(0.9, 0.0, 0.0, false));
    assert!(worse.superseded.is_empty());
    assert!(mem.is_live(best) && mem.is_live(worse.node.unwrap()));
    // Compaction then archives the dominated newcomer, never the best.
    let report = compact(&mut mem).unwrap();
    assert_eq!(report.archived.len(), 1);
    assert_eq!(report.archived[0].archived, worse.node.unwrap());
    assert!(mem.is_live(best));
}

#[test]
fn dominance_needs_same_domain_and_status() {
    let mut mem = common::memory("dom");
    let a = common::add(&mut mem, &Spec::new("x y", "d1", &OPS).scores(0.5, 0.0, 0.0, false)).node.unwrap();
    let other_domain = common::add(&mut mem, &Spec::new("x y", "d2", &OPS));
    assert!(other_domain.superseded.is_empty());
    let failed = common::add(&mut mem, &Spec::new("x y", "d1", &OPS).scores(0.0, 1.0, 1.0, true));
    assert!(failed.superseded.is_empty());
    assert!(mem.is_live(a));
    // Identical descriptions across domains still get a similarity edge.
    let b = other_domain.node.unwrap();
    assert!(edge(&mem, b, a, EdgeKind::SimilarTo));
    assert!(edge(&mem, b, a, EdgeKind::StructurallySimilarTo));
}

#[test]
fn structural_edges_follow_the_threshold() {
    let mut mem = common::memory("edges");
    let a = common::add(&mut mem, &Spec::new("first", "d", &["op:a", "op:b", "op:c", "op:d", "op:e"])).node.unwrap();
    let close = common::add(&mut mem, &Spec::new("second", "d", &["op:a", "op:b", "op:c", "op:x", "op:y"]));
    let far = common::add(&mut mem, &Spec::new("third", "d", &["op:a", "op:b", "op:x", "op:y", "op:z"]));
    assert_eq!(close.structurally_similar_to, vec![(a, 0.6)]);
    assert!(far.structurally_similar_to.iter().all(|(id, _)| *id != a));
}

#[test]
fn failed_records_carry_typed_errors() {
    let mut mem = common::memory("errors");
    let spec = Spec::new("join tables", "d", &OPS)
        .scores(0.0, 0.5, 0.5, true)
        .feedback("ERROR: schema_mismatch @step 2\nCAUSE: field-renamed 0.9\nPATCH: replace_logic step2 inspect-schema");
    let id = common::add(&mut mem, &spec).node.unwrap();
    let rec = &mem.experience(id).unwrap().record;
    assert_eq!(rec.status, Status::Failed);
    assert_eq!(rec.error_registry.len(), 1);
    assert_eq!(rec.error_registry[0].error_class, ErrorClass::SchemaMismatch);
    assert_eq!(rec.patches.len(), 1);
    assert!(rec.retrieval_keys.failure_modes.iter().any(|m| m == "schema_mismatch"));
}

#[test]
fn invalid_records_leave_memory_untouched() {
    let mut mem = common::memory("invalid");
    common::add(&mut mem, &Spec::new("seed", "d", &OPS));
    let before = mem.export_string();
    let mut rec = common::record(&mem, &Spec::new("broken", "d", &OPS));
    rec.signature.ops.push("op:extra".into());
    assert!(matches!(commit(&mut mem, rec, &[]), Err(IngestError::InvalidRecord(_))));
    let mut rec = common::record(&mem, &Spec::new("broken", "d", &OPS));
    rec.evaluation.quality = 0.1;
    assert!(matches!(commit(&mut mem, rec, &[]), Err(IngestError::InvalidRecord(_))));
    assert_eq!(mem.export_string(), before);
}

#[test]
fn provenance_keeps_only_known_experiences() {
    let mut mem = common::memory("prov");
    let parent = common::add(&mut mem, &Spec::new("parent", "d", &OPS)).node.unwrap();
    let mut spec = Spec::new("child", "d", &["op:join"]);
    spec.derived_from = vec![parent, NodeId::new(procmem::ids::NodeKind::Experience, 999)];
    let child = common::add(&mut mem, &spec).node.unwrap();
    assert_eq!(mem.experience(child).unwrap().record.derived_from, vec![parent]);
    assert!(edge(&mem, child, parent, EdgeKind::DerivedFrom));
}

#[test]
fn entity_bindings_resolve_and_link() {
    let mut mem = common::memory("ent");
    let a = common::add(&mut mem, &Spec::new("acme revenue", "biz", &OPS).entities(&["acme"])).node.unwrap();
    let b = common::add(&mut mem, &Spec::new("acme costs", "biz", &["op:join"]).entities(&["acme"])).node.unwrap();
    let ea = mem.experience(a).unwrap().record.goal.entity_bindings[0].node.unwrap();
    let eb = mem.experience(b).unwrap().record.goal.entity_bindings[0].node.unwrap();
    assert_eq!(ea, eb);
    assert!(edge(&mem, a, ea, EdgeKind::UsesEntity) && edge(&mem, b, ea, EdgeKind::UsesEntity));
}
