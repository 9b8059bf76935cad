use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use super::graph::{ActivityDef, WorkflowGraph};
use super::VersionRef;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaChange {
    pub node: String,
    pub old: Option<VersionRef>,
    pub new: Option<VersionRef>,
}

/// Set-level difference between two graph versions. Nodes are matched by
/// id and edges by endpoint pair; nested subgraphs are included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChangeSet {
    pub added_nodes: BTreeSet<String>,
    pub removed_nodes: BTreeSet<String>,
    pub modified_nodes: BTreeSet<String>,
    pub added_edges: BTreeSet<(String, String)>,
    pub removed_edges: BTreeSet<(String, String)>,
    pub schema_changes: Vec<SchemaChange>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.modified_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.schema_changes.is_empty()
    }
}

/// Node equality for diffing ignores the nested subgraph: changes inside it
/// show up as their own node and edge entries.
fn same_shape(a: &ActivityDef, b: &ActivityDef) -> bool {
    a.kind == b.kind && a.outcome_schema == b.outcome_schema && a.role == b.role && a.split == b.split && a.join == b.join
}

pub fn diff_graphs(old: &WorkflowGraph, new: &WorkflowGraph) -> ChangeSet {
    let old_nodes: BTreeMap<&str, &ActivityDef> = old.all_nodes().into_iter().map(|n| (n.id.as_str(), n)).collect();
    let new_nodes: BTreeMap<&str, &ActivityDef> = new.all_nodes().into_iter().map(|n| (n.id.as_str(), n)).collect();
    let old_edges: BTreeSet<(String, String)> = old.all_edges().into_iter().map(|e| e.key()).collect();
    let new_edges: BTreeSet<(String, String)> = new.all_edges().into_iter().map(|e| e.key()).collect();

    let mut cs = ChangeSet::default();
    for (id, n) in &new_nodes {
        match old_nodes.get(id) {
            None => {
                cs.added_nodes.insert((*id).into());
            }
            Some(o) => {
                if !same_shape(o, n) {
                    cs.modified_nodes.insert((*id).into());
                }
                if o.outcome_schema != n.outcome_schema {
                    cs.schema_changes.push(SchemaChange {
                        node: (*id).into(),
                        old: o.outcome_schema.clone(),
                        new: n.outcome_schema.clone(),
                    });
                }
            }
        }
    }
    cs.removed_nodes = old_nodes.keys().filter(|id| !new_nodes.contains_key(*id)).map(|s| (*s).into()).collect();
    cs.added_edges = new_edges.difference(&old_edges).cloned().collect();
    cs.removed_edges = old_edges.difference(&new_edges).cloned().collect();
    cs
}
