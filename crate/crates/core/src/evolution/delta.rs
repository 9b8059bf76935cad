use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::docmodel::Expr;
use crate::error::{Error, Result};
use crate::metamodel::{validate_graph, ActivityDef, Gate, Transition, WorkflowGraph};

/// Per-instance structural modification, stored on the item and applied on
/// top of its description graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeltaOp {
    /// New node placed after `after`: it inherits `after`'s outgoing edges
    /// and split, and `after` gains a single edge to it.
    InsertAfter { activity: ActivityDef, after: String },
    SkipActivity { id: String },
    ReplaceGuard { from: String, to: String, expr: Expr },
}

impl DeltaOp {
    /// Node the op is about, used as the event's activity id.
    pub fn subject(&self) -> &str {
        match self {
            DeltaOp::InsertAfter { activity, .. } => &activity.id,
            DeltaOp::SkipActivity { id } => id,
            DeltaOp::ReplaceGuard { from, .. } => from,
        }
    }
}

fn conflict(msg: impl Into<String>) -> Error {
    Error::DeltaConflict(msg.into())
}

fn apply_one(g: &mut WorkflowGraph, op: &DeltaOp) -> Result<()> {
    match op {
        DeltaOp::InsertAfter { activity, after } => {
            if g.find(&activity.id).is_some() {
                return Err(conflict(alloc::format!("{} already exists", activity.id)));
            }
            let owner = g
                .owner_of_mut(after)
                .ok_or_else(|| conflict(alloc::format!("no node {after}")))?;
            let pos = owner.nodes.iter().position(|n| n.id == *after).expect("owner holds node");
            let mut node = activity.clone();
            node.split = owner.nodes[pos].split;
            owner.nodes[pos].split = Gate::None;
            for e in owner.edges.iter_mut().filter(|e| e.from == *after) {
                e.from = node.id.clone();
            }
            owner.edges.push(Transition::new(after.clone(), node.id.clone()));
            owner.nodes.insert(pos + 1, node);
        }
        DeltaOp::SkipActivity { id } => {
            if g.find(id).is_none() {
                return Err(conflict(alloc::format!("no node {id}")));
            }
        }
        DeltaOp::ReplaceGuard { from, to, expr } => {
            let edge = g
                .owner_of_mut(from)
                .and_then(|o| o.edges.iter_mut().find(|e| e.from == *from && e.to == *to))
                .ok_or_else(|| conflict(alloc::format!("no edge {from}->{to}")))?;
            edge.guard = Some(expr.clone());
        }
    }
    Ok(())
}

/// `base` with `ops` applied in order. The result must be well formed.
pub fn apply_delta(base: &WorkflowGraph, ops: &[DeltaOp]) -> Result<WorkflowGraph> {
    let mut g = base.clone();
    for op in ops {
        apply_one(&mut g, op)?;
    }
    let violations = validate_graph(&g);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(conflict(text.join(", ")));
    }
    Ok(g)
}
