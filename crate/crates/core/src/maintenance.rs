//! Explicit memory upkeep: dominance archival, template consolidation and
//! stale-entity flagging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, SUPERSEDES_MIN};
use crate::ids::{EdgeKind, NodeId};
use crate::journal::FlagKind;
use crate::memory::{Memory, TemplateMark};
use crate::ontology::{parse_procedure_ref, procedure_ref, Status};
use crate::signature::signature_similarity;

/// Minimum size of a consolidation group.
pub const TEMPLATE_GROUP_MIN: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Archival {
    pub archived: NodeId,
    pub by: NodeId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionReport {
    pub namespace: String,
    pub archived: Vec<Archival>,
    pub templates: Vec<TemplateMark>,
    pub stale: Vec<NodeId>,
}

impl CompactionReport {
    pub fn is_empty(&self) -> bool {
        self.archived.is_empty() && self.templates.is_empty() && self.stale.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Runs all three passes. Never edits record content, only flags, edges and
/// template marks.
pub fn compact(mem: &mut Memory) -> Result<CompactionReport, GraphError> {
    let mut report = CompactionReport { namespace: mem.namespace().to_string(), ..Default::default() };
    archive_dominated(mem, &mut report)?;
    consolidate(mem, &mut report);
    flag_stale(mem, &mut report)?;
    Ok(report)
}

fn live_ids(mem: &Memory) -> Vec<NodeId> {
    mem.experiences().map(|e| e.node).filter(|id| mem.is_live(*id)).collect()
}

/// Within each (domain, signature, status) class, archives every member with
/// q below the class maximum, superseded by the lowest-id maximal member.
fn archive_dominated(mem: &mut Memory, report: &mut CompactionReport) -> Result<(), GraphError> {
    let mut classes: BTreeMap<(String, String, bool), Vec<(NodeId, f64)>> = BTreeMap::new();
    for id in live_ids(mem) {
        let rec = &mem.experience(id).expect("live experience").record;
        let key = (rec.goal.domain.clone(), rec.signature.fingerprint.clone(), rec.status == Status::Successful);
        classes.entry(key).or_default().push((id, rec.evaluation.quality));
    }
    for members in classes.values() {
        let max_q = members.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        let keeper = members.iter().filter(|m| m.1 == max_q).map(|m| m.0).min().expect("non-empty class");
        for &(id, q) in members {
            if q < max_q {
                mem.store_mut().add_edge(keeper, id, EdgeKind::Supersedes, Some(1.0))?;
                mem.store_mut().set_flag(id, FlagKind::Archived, true)?;
                report.archived.push(Archival { archived: id, by: keeper });
            }
        }
    }
    Ok(())
}

/// Greedy grouping of live successful experiences whose pairwise structural
/// similarity exceeds the supersedes threshold; the max-q member (lowest id
/// on ties) becomes the group's template with a bumped procedure version.
fn consolidate(mem: &mut Memory, report: &mut CompactionReport) {
    let pool: Vec<NodeId> = live_ids(mem)
        .into_iter()
        .filter(|id| mem.experience(*id).is_some_and(|e| e.record.status == Status::Successful))
        .collect();
    let mut assigned = vec![false; pool.len()];
    for i in 0..pool.len() {
        if assigned[i] {
            continue;
        }
        let mut group = vec![i];
        for j in i + 1..pool.len() {
            if assigned[j] {
                continue;
            }
            let fits = group.iter().all(|&g| {
                let a = &mem.experience(pool[g]).expect("pool").record.signature;
                let b = &mem.experience(pool[j]).expect("pool").record.signature;
                signature_similarity(a, b) > SUPERSEDES_MIN
            });
            if fits {
                group.push(j);
            }
        }
        if group.len() < TEMPLATE_GROUP_MIN {
            continue;
        }
        for &g in &group {
            assigned[g] = true;
        }
        let members: Vec<NodeId> = group.iter().map(|&g| pool[g]).collect();
        let rep = *members
            .iter()
            .max_by(|a, b| {
                let qa = mem.experience(**a).expect("pool").record.evaluation.quality;
                let qb = mem.experience(**b).expect("pool").record.evaluation.quality;
                qa.total_cmp(&qb).then(b.cmp(a))
            })
            .expect("non-empty group");
        let previous = mem.templates().get(&rep);
        if previous.is_some_and(|m| m.members == members) {
            continue;
        }
        let base = previous
            .map(|m| m.procedure_ref.clone())
            .unwrap_or_else(|| mem.experience(rep).expect("pool").record.procedure.procedure_ref.clone());
        let bumped = match parse_procedure_ref(&base) {
            Some((name, v)) => procedure_ref(name, v + 1),
            None => procedure_ref("Template", 2),
        };
        let mark = TemplateMark { node: rep, procedure_ref: bumped, members };
        mem.put_template(mark.clone());
        report.templates.push(mark);
    }
}

/// Flags experiences bound (via `uses_entity`) to a superseded entity.
fn flag_stale(mem: &mut Memory, report: &mut CompactionReport) -> Result<(), GraphError> {
    let ids: Vec<NodeId> = mem.experiences().map(|e| e.node).collect();
    for id in ids {
        let stale = mem
            .store()
            .outgoing(id)
            .filter(|e| e.kind == EdgeKind::UsesEntity)
            .any(|e| mem.store().is_superseded(e.to));
        if stale && mem.store_mut().set_flag(id, FlagKind::Stale, true)? {
            report.stale.push(id);
        }
    }
    Ok(())
}
