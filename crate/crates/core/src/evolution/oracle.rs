//! Brute-force execution enumerator. Written separately from the token
//! engine so the two can be checked against each other.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::metamodel::{ActivityKind, Gate, WorkflowGraph};

/// Largest `max_events` accepted by [`enumerate_executions`].
pub const MAX_EVENTS_LIMIT: usize = 20;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Mark {
    Idle,
    Ready,
    Done,
    Skip,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shape {
    Task,
    Begin,
    Finish { parent: Option<usize> },
    Block { inner_start: usize },
}

struct FlatNode {
    id: String,
    shape: Shape,
    split: Gate,
    join: Gate,
    /// Indices into `Flat::arcs`.
    outs: Vec<usize>,
    ins: Vec<usize>,
}

struct Arc {
    to: usize,
    default: bool,
}

struct Flat {
    nodes: Vec<FlatNode>,
    arcs: Vec<Arc>,
    start: usize,
}

impl Flat {
    fn build(g: &WorkflowGraph) -> Flat {
        let mut flat = Flat {
            nodes: Vec::new(),
            arcs: Vec::new(),
            start: 0,
        };
        let mut index = BTreeMap::new();
        flat.start = flat.add_graph(g, None, &mut index);
        flat
    }

    fn add_graph(&mut self, g: &WorkflowGraph, parent: Option<usize>, index: &mut BTreeMap<String, usize>) -> usize {
        let mut local = Vec::new();
        for n in &g.nodes {
            let i = self.nodes.len();
            index.insert(n.id.clone(), i);
            self.nodes.push(FlatNode {
                id: n.id.clone(),
                shape: Shape::Task,
                split: n.split,
                join: n.join,
                outs: Vec::new(),
                ins: Vec::new(),
            });
            local.push((i, n));
        }
        for (i, n) in &local {
            self.nodes[*i].shape = if n.id == g.start {
                Shape::Begin
            } else if n.id == g.end {
                Shape::Finish { parent }
            } else if n.kind == ActivityKind::Composite {
                let sub = n.subgraph.as_deref().expect("validated composite");
                Shape::Block {
                    inner_start: self.add_graph(sub, Some(*i), index),
                }
            } else {
                Shape::Task
            };
        }
        for e in &g.edges {
            let (from, to) = (index[&e.from], index[&e.to]);
            let a = self.arcs.len();
            self.arcs.push(Arc {
                to,
                default: e.is_default,
            });
            self.nodes[from].outs.push(a);
            self.nodes[to].ins.push(a);
        }
        index[&g.start]
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Sim {
    marks: Vec<Mark>,
    tokens: Vec<u32>,
    visits: Vec<u32>,
}

struct Explorer<'f> {
    flat: &'f Flat,
    bound: u32,
    max_events: usize,
    found: BTreeSet<Vec<String>>,
}

impl Explorer<'_> {
    /// Every way a node can hand tokens on.
    fn emissions(&self, sim: &Sim, n: usize) -> Vec<Vec<usize>> {
        let node = &self.flat.nodes[n];
        if node.split != Gate::Xor {
            return alloc::vec![node.outs.clone()];
        }
        if sim.marks[n] == Mark::Skip {
            return alloc::vec![node.outs.iter().copied().filter(|a| self.flat.arcs[*a].default).collect()];
        }
        node.outs.iter().map(|a| alloc::vec![*a]).collect()
    }

    fn joinable(&self, sim: &Sim, n: usize) -> bool {
        let node = &self.flat.nodes[n];
        if sim.marks[n] == Mark::Ready {
            return false;
        }
        match node.join {
            Gate::And => !node.ins.is_empty() && node.ins.iter().all(|a| sim.tokens[*a] > 0),
            _ => node.ins.iter().any(|a| sim.tokens[*a] > 0),
        }
    }

    /// Consume join tokens of `n` and activate it. Returns the nodes that
    /// must emit next, or `None` when the visit bound is exceeded.
    fn activate(&self, sim: &mut Sim, n: usize, pending: &mut Vec<usize>) -> bool {
        let node = &self.flat.nodes[n];
        if node.join == Gate::And {
            for a in &node.ins {
                sim.tokens[*a] -= 1;
            }
        } else if let Some(a) = node.ins.iter().find(|a| sim.tokens[**a] > 0) {
            sim.tokens[*a] -= 1;
        }
        self.arrive(sim, n, pending)
    }

    fn arrive(&self, sim: &mut Sim, n: usize, pending: &mut Vec<usize>) -> bool {
        sim.visits[n] += 1;
        if sim.visits[n] > self.bound {
            return false;
        }
        if sim.marks[n] == Mark::Skip {
            pending.push(n);
            return true;
        }
        match self.flat.nodes[n].shape {
            Shape::Task => {
                sim.marks[n] = Mark::Ready;
                true
            }
            Shape::Begin => {
                sim.marks[n] = Mark::Done;
                pending.push(n);
                true
            }
            Shape::Block { inner_start } => {
                sim.marks[n] = Mark::Ready;
                self.arrive(sim, inner_start, pending)
            }
            Shape::Finish { parent } => {
                sim.marks[n] = Mark::Done;
                if let Some(p) = parent {
                    sim.marks[p] = Mark::Done;
                    pending.push(p);
                }
                true
            }
        }
    }

    /// Run automatic behaviour to quiescence, forking on XOR choices.
    fn settle(&self, sim: Sim, mut pending: Vec<usize>, out: &mut Vec<Sim>) {
        let Some(n) = pending.pop() else {
            out.push(sim);
            return;
        };
        for arcs in self.emissions(&sim, n) {
            let mut s = sim.clone();
            let mut p = pending.clone();
            for a in &arcs {
                s.tokens[*a] += 1;
            }
            if self.propagate(&mut s, &mut p, n, &arcs) {
                self.settle(s, p, out);
            }
        }
    }

    /// Activate whatever became joinable after tokens landed on `arcs`
    /// (and `n` itself, which may hold earlier tokens).
    fn propagate(&self, sim: &mut Sim, pending: &mut Vec<usize>, n: usize, arcs: &[usize]) -> bool {
        let mut candidates: Vec<usize> = arcs.iter().map(|a| self.flat.arcs[*a].to).collect();
        candidates.push(n);
        for c in candidates {
            if self.joinable(sim, c) && !self.activate(sim, c, pending) {
                return false;
            }
        }
        true
    }

    fn explore(&mut self, sim: Sim, trace: &mut Vec<String>) {
        self.found.insert(trace.clone());
        if trace.len() >= self.max_events {
            return;
        }
        let ready: Vec<usize> = (0..sim.marks.len())
            .filter(|n| sim.marks[*n] == Mark::Ready && self.flat.nodes[*n].shape == Shape::Task)
            .collect();
        for n in ready {
            let mut s = sim.clone();
            s.marks[n] = Mark::Done;
            let mut next = Vec::new();
            self.settle(s, alloc::vec![n], &mut next);
            next.sort();
            next.dedup();
            trace.push(self.flat.nodes[n].id.clone());
            for s in next {
                self.explore(s, trace);
            }
            trace.pop();
        }
    }
}

/// Every completion sequence of at most `max_events` activities reachable
/// in `graph`, with each node entered at most twice.
pub fn enumerate_executions(graph: &WorkflowGraph, max_events: usize) -> Result<BTreeSet<Vec<String>>> {
    enumerate_executions_with(graph, max_events, crate::enactment::DEFAULT_LOOP_BOUND, &BTreeSet::new())
}

/// As [`enumerate_executions`] with an explicit entry bound and a set of
/// activities that are skipped from the outset.
pub fn enumerate_executions_with(
    graph: &WorkflowGraph,
    max_events: usize,
    bound: u32,
    skipped: &BTreeSet<String>,
) -> Result<BTreeSet<Vec<String>>> {
    if max_events > MAX_EVENTS_LIMIT {
        return Err(Error::BoundExceeded {
            requested: max_events,
            limit: MAX_EVENTS_LIMIT,
        });
    }
    let flat = Flat::build(graph);
    let n = flat.nodes.len();
    let mut sim = Sim {
        marks: flat
            .nodes
            .iter()
            .map(|f| if skipped.contains(&f.id) { Mark::Skip } else { Mark::Idle })
            .collect(),
        tokens: alloc::vec![0; flat.arcs.len()],
        visits: alloc::vec![0; n],
    };
    let mut ex = Explorer {
        flat: &flat,
        bound,
        max_events,
        found: BTreeSet::new(),
    };
    let mut pending = Vec::new();
    let mut starts = Vec::new();
    if ex.arrive(&mut sim, flat.start, &mut pending) {
        ex.settle(sim, pending, &mut starts);
    }
    starts.sort();
    starts.dedup();
    for s in starts {
        ex.explore(s, &mut Vec::new());
    }
    Ok(ex.found.into_iter().map(|t| t.into_iter().map(|s| s.to_string()).collect()).collect())
}
