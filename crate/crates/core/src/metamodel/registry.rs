use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::diff::{diff_graphs, ChangeSet};
use super::validate::validate_graph;
use super::{graph_of, sorted_violations, Body, DescriptionRecord, Kind, Rule, VersionRef, Violation, WorkflowGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    Version(u32),
    Latest,
}

#[derive(Debug, Clone)]
struct Lineage {
    kind: Kind,
    versions: Vec<Arc<DescriptionRecord>>,
}

/// Append-only store of description records, keyed by name with dense
/// version numbers.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    lineages: BTreeMap<String, Lineage>,
    clock: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Meta-schema check: the body must satisfy the rules of its kind and
    /// every schema it references must already be published.
    pub fn check_body(&self, body: &Body) -> Vec<Violation> {
        let mut v = match body {
            Body::Item(g) | Body::Activity(g) => validate_graph(g),
            Body::Schema(s) => s.check(),
            Body::Connector(c) => c.check(),
        };
        if let Some(g) = body.graph() {
            v.extend(self.check_schema_refs(g));
        }
        sorted_violations(v)
    }

    fn check_schema_refs(&self, g: &WorkflowGraph) -> Vec<Violation> {
        g.schema_refs()
            .into_iter()
            .filter(|(_, r)| !matches!(self.resolve_ref(r), Ok(rec) if rec.kind() == Kind::OutcomeSchema))
            .map(|(node, r)| Violation::new(Rule::UnknownSchema, alloc::format!("{node}:{r}")))
            .collect()
    }

    pub fn publish(&mut self, name: &str, body: Body) -> Result<VersionRef> {
        if name.is_empty() || name.contains('/') {
            return Err(Error::ValidationFailed(alloc::vec![Violation::new(Rule::EmptyName, name)]));
        }
        if let Some(l) = self.lineages.get(name) {
            if l.kind != body.kind() {
                return Err(Error::KindMismatch {
                    name: name.into(),
                    expected: l.kind,
                    found: body.kind(),
                });
            }
        }
        let violations = self.check_body(&body);
        if !violations.is_empty() {
            return Err(Error::ValidationFailed(violations));
        }
        let version = self.lineages.get(name).map_or(0, |l| l.versions.len() as u32) + 1;
        self.clock += 1;
        let record = DescriptionRecord {
            reference: VersionRef::new(name, version),
            body,
            predecessor: (version > 1).then(|| version - 1),
            published_at: self.clock,
        };
        self.attach(record)
    }

    /// Re-attach a record loaded from storage. Density, kind and
    /// meta-schema rules are enforced exactly as on publish.
    pub fn restore(&mut self, record: DescriptionRecord) -> Result<VersionRef> {
        let name = &record.reference.name;
        let expected = self.lineages.get(name).map_or(0, |l| l.versions.len() as u32) + 1;
        if record.reference.version != expected || record.predecessor != (expected > 1).then(|| expected - 1) {
            return Err(Error::Invalid(alloc::format!(
                "record {} out of order (expected version {expected})",
                record.reference
            )));
        }
        if let Some(l) = self.lineages.get(name) {
            if l.kind != record.kind() {
                return Err(Error::KindMismatch {
                    name: name.clone(),
                    expected: l.kind,
                    found: record.kind(),
                });
            }
        }
        let violations = self.check_body(&record.body);
        if !violations.is_empty() {
            return Err(Error::ValidationFailed(violations));
        }
        self.clock = self.clock.max(record.published_at);
        self.attach(record)
    }

    fn attach(&mut self, record: DescriptionRecord) -> Result<VersionRef> {
        let reference = record.reference.clone();
        self.lineages
            .entry(reference.name.clone())
            .or_insert_with(|| Lineage {
                kind: record.kind(),
                versions: Vec::new(),
            })
            .versions
            .push(Arc::new(record));
        Ok(reference)
    }

    pub fn resolve(&self, name: &str, selector: Selector) -> Result<Arc<DescriptionRecord>> {
        let lineage = self.lineages.get(name).ok_or_else(|| Error::NotFound(name.into()))?;
        let rec = match selector {
            Selector::Latest => lineage.versions.last(),
            Selector::Version(v) => v.checked_sub(1).and_then(|i| lineage.versions.get(i as usize)),
        };
        rec.cloned().ok_or_else(|| match selector {
            Selector::Version(v) => Error::NotFound(alloc::format!("{name}@{v}")),
            Selector::Latest => Error::NotFound(name.into()),
        })
    }

    pub fn resolve_ref(&self, r: &VersionRef) -> Result<Arc<DescriptionRecord>> {
        self.resolve(&r.name, Selector::Version(r.version))
    }

    pub fn latest_version(&self, name: &str) -> Option<u32> {
        self.lineages.get(name).map(|l| l.versions.len() as u32)
    }

    pub fn kind_of(&self, name: &str) -> Option<Kind> {
        self.lineages.get(name).map(|l| l.kind)
    }

    /// Every published reference, ordered by name then version.
    pub fn list(&self) -> Vec<(VersionRef, Kind)> {
        self.lineages
            .values()
            .flat_map(|l| l.versions.iter().map(move |r| (r.reference.clone(), l.kind)))
            .collect()
    }

    /// Records in publish order.
    pub fn records(&self) -> Vec<Arc<DescriptionRecord>> {
        let mut all: Vec<_> = self.lineages.values().flat_map(|l| l.versions.iter().cloned()).collect();
        all.sort_by_key(|r| r.published_at);
        all
    }

    pub fn diff(&self, name: &str, a: u32, b: u32) -> Result<ChangeSet> {
        let ra = self.resolve(name, Selector::Version(a))?;
        let rb = self.resolve(name, Selector::Version(b))?;
        Ok(diff_graphs(graph_of(&ra)?, graph_of(&rb)?))
    }
}
