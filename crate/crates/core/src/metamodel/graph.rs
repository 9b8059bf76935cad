use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::VersionRef;
use crate::docmodel::{parse_expr, Expr};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityKind {
    #[default]
    Elementary,
    Composite,
}

/// Split or join semantics of a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gate {
    #[default]
    None,
    And,
    Xor,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityDef {
    pub id: String,
    #[serde(default, skip_serializing_if = "is_default")]
    pub kind: ActivityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_schema: Option<VersionRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<Box<WorkflowGraph>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub role: String,
    #[serde(default, skip_serializing_if = "is_default")]
    pub split: Gate,
    #[serde(default, skip_serializing_if = "is_default")]
    pub join: Gate,
}

impl ActivityDef {
    pub fn elementary(id: impl Into<String>) -> Self {
        ActivityDef {
            id: id.into(),
            kind: ActivityKind::Elementary,
            outcome_schema: None,
            subgraph: None,
            role: String::new(),
            split: Gate::None,
            join: Gate::None,
        }
    }

    pub fn composite(id: impl Into<String>, subgraph: WorkflowGraph) -> Self {
        ActivityDef {
            kind: ActivityKind::Composite,
            subgraph: Some(Box::new(subgraph)),
            ..ActivityDef::elementary(id)
        }
    }

    pub fn with_role(mut self, role: impl Into<String>) -> Self {
        self.role = role.into();
        self
    }

    pub fn with_schema(mut self, schema: VersionRef) -> Self {
        self.outcome_schema = Some(schema);
        self
    }

    pub fn with_split(mut self, g: Gate) -> Self {
        self.split = g;
        self
    }

    pub fn with_join(mut self, g: Gate) -> Self {
        self.join = g;
        self
    }

    pub fn is_composite(&self) -> bool {
        self.kind == ActivityKind::Composite
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<Expr>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub is_default: bool,
}

impl Transition {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Transition {
            from: from.into(),
            to: to.into(),
            guard: None,
            is_default: false,
        }
    }

    pub fn guarded(from: impl Into<String>, to: impl Into<String>, guard: &str) -> Self {
        Transition {
            guard: Some(parse_expr(guard).expect("guard expression")),
            ..Transition::new(from, to)
        }
    }

    pub fn default_edge(from: impl Into<String>, to: impl Into<String>) -> Self {
        Transition {
            is_default: true,
            ..Transition::new(from, to)
        }
    }

    pub fn key(&self) -> (String, String) {
        (self.from.clone(), self.to.clone())
    }
}

/// Directed activity graph with one start and one end node. Start and end
/// are ordinary node ids that the engine passes through automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowGraph {
    pub nodes: Vec<ActivityDef>,
    pub edges: Vec<Transition>,
    pub start: String,
    pub end: String,
}

pub const START: &str = "start";
pub const END: &str = "end";

impl WorkflowGraph {
    /// Empty graph holding only `start` and `end` nodes (no edges yet).
    pub fn bare() -> Self {
        WorkflowGraph {
            nodes: alloc::vec![ActivityDef::elementary(START), ActivityDef::elementary(END)],
            edges: Vec::new(),
            start: START.to_string(),
            end: END.to_string(),
        }
    }

    /// `start → a₁ → … → aₙ → end`. Pass a prefix to keep ids distinct when
    /// the graph is nested as a subgraph.
    pub fn sequence(ids: &[&str]) -> Self {
        Self::sequence_with(ids, START, END)
    }

    pub fn sequence_with(ids: &[&str], start: &str, end: &str) -> Self {
        let mut nodes = Vec::with_capacity(ids.len() + 2);
        nodes.push(ActivityDef::elementary(start));
        nodes.extend(ids.iter().map(|id| ActivityDef::elementary(*id)));
        nodes.push(ActivityDef::elementary(end));
        let edges = nodes.windows(2).map(|w| Transition::new(w[0].id.clone(), w[1].id.clone())).collect();
        WorkflowGraph {
            nodes,
            edges,
            start: start.to_string(),
            end: end.to_string(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&ActivityDef> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: &str) -> Option<&mut ActivityDef> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn add(mut self, node: ActivityDef) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn edge(mut self, t: Transition) -> Self {
        self.edges.push(t);
        self
    }

    pub fn outgoing<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.edges.iter().filter(move |e| e.from == id)
    }

    pub fn incoming<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.edges.iter().filter(move |e| e.to == id)
    }

    /// Every node in this graph and its nested subgraphs, depth-first in
    /// declaration order.
    pub fn all_nodes(&self) -> Vec<&ActivityDef> {
        let mut out = Vec::new();
        self.collect_nodes(&mut out);
        out
    }

    fn collect_nodes<'a>(&'a self, out: &mut Vec<&'a ActivityDef>) {
        for n in &self.nodes {
            out.push(n);
            if let Some(sub) = &n.subgraph {
                sub.collect_nodes(out);
            }
        }
    }

    pub fn all_edges(&self) -> Vec<&Transition> {
        let mut out: Vec<&Transition> = self.edges.iter().collect();
        for n in &self.nodes {
            if let Some(sub) = &n.subgraph {
                out.extend(sub.all_edges());
            }
        }
        out
    }

    /// Locate the (possibly nested) graph that declares `id`.
    pub fn owner_of_mut(&mut self, id: &str) -> Option<&mut WorkflowGraph> {
        if self.nodes.iter().any(|n| n.id == id) {
            return Some(self);
        }
        self.nodes
            .iter_mut()
            .filter_map(|n| n.subgraph.as_deref_mut())
            .find_map(|g| g.owner_of_mut(id))
    }

    pub fn find(&self, id: &str) -> Option<&ActivityDef> {
        self.all_nodes().into_iter().find(|n| n.id == id)
    }

    /// Schema references used anywhere in the graph.
    pub fn schema_refs(&self) -> Vec<(&str, &VersionRef)> {
        self.all_nodes()
            .into_iter()
            .filter_map(|n| n.outcome_schema.as_ref().map(|r| (n.id.as_str(), r)))
            .collect()
    }
}
