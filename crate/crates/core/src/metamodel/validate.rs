use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use super::graph::{ActivityKind, Gate, WorkflowGraph};
use super::{Rule, Violation};

fn edge_name(from: &str, to: &str) -> String {
    alloc::format!("{from}->{to}")
}

/// Check every structural rule on `graph` and its subgraphs. The result is
/// sorted and free of duplicates; empty means well-formed.
pub fn validate_graph(graph: &WorkflowGraph) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for n in graph.all_nodes() {
        *counts.entry(n.id.as_str()).or_default() += 1;
    }
    for (id, c) in counts {
        if c > 1 {
            out.insert(Violation::new(Rule::DuplicateId, id));
        }
    }
    check_level(graph, &mut out);
    out.into_iter().collect()
}

fn check_level(g: &WorkflowGraph, out: &mut BTreeSet<Violation>) {
    let ids: BTreeSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    let has_start = ids.contains(g.start.as_str());
    let has_end = ids.contains(g.end.as_str());
    if !has_start {
        out.insert(Violation::new(Rule::MissingStart, &g.start));
    }
    if !has_end {
        out.insert(Violation::new(Rule::MissingEnd, &g.end));
    }
    if g.start == g.end {
        out.insert(Violation::new(Rule::StartIsEnd, &g.start));
    }

    let mut seen_edges = BTreeSet::new();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut pred: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &g.edges {
        let name = edge_name(&e.from, &e.to);
        if !ids.contains(e.from.as_str()) || !ids.contains(e.to.as_str()) {
            out.insert(Violation::new(Rule::DanglingEdge, name));
            continue;
        }
        if !seen_edges.insert((e.from.as_str(), e.to.as_str())) {
            out.insert(Violation::new(Rule::DuplicateEdge, name));
        }
        succ.entry(&e.from).or_default().push(&e.to);
        pred.entry(&e.to).or_default().push(&e.from);
    }

    if has_start && pred.contains_key(g.start.as_str()) {
        out.insert(Violation::new(Rule::StartHasIncoming, &g.start));
    }
    if has_end && succ.contains_key(g.end.as_str()) {
        out.insert(Violation::new(Rule::EndHasOutgoing, &g.end));
    }

    if has_start {
        let fwd = reach(&g.start, &succ);
        for id in &ids {
            if !fwd.contains(id) {
                out.insert(Violation::new(Rule::Unreachable, *id));
            }
        }
    }
    if has_end {
        let back = reach(&g.end, &pred);
        for id in &ids {
            if !back.contains(id) {
                out.insert(Violation::new(Rule::DeadEnd, *id));
            }
        }
    }

    for n in &g.nodes {
        let id = n.id.as_str();
        let outs: Vec<_> = g.outgoing(id).filter(|e| ids.contains(e.to.as_str())).collect();
        let ins = g.incoming(id).filter(|e| ids.contains(e.from.as_str())).count();
        if (n.split == Gate::None) != (outs.len() <= 1) {
            out.insert(Violation::new(Rule::SplitMismatch, id));
        }
        if (n.join == Gate::None) != (ins <= 1) {
            out.insert(Violation::new(Rule::JoinMismatch, id));
        }
        if n.split == Gate::Xor {
            let defaults = outs.iter().filter(|e| e.is_default).count();
            if defaults == 0 {
                out.insert(Violation::new(Rule::NoDefault, id));
            } else if defaults > 1 {
                out.insert(Violation::new(Rule::MultipleDefaults, id));
            }
            for e in &outs {
                let name = edge_name(&e.from, &e.to);
                match (e.is_default, e.guard.is_some()) {
                    (true, true) => {
                        out.insert(Violation::new(Rule::GuardOnDefault, name));
                    }
                    (false, false) => {
                        out.insert(Violation::new(Rule::MissingGuard, name));
                    }
                    _ => {}
                }
            }
        } else {
            for e in &outs {
                if e.guard.is_some() {
                    out.insert(Violation::new(Rule::GuardOnNonXor, edge_name(&e.from, &e.to)));
                }
                if e.is_default {
                    out.insert(Violation::new(Rule::DefaultOnNonXor, edge_name(&e.from, &e.to)));
                }
            }
        }

        match (n.kind, &n.subgraph) {
            (ActivityKind::Composite, None) => {
                out.insert(Violation::new(Rule::MissingSubgraph, id));
            }
            (ActivityKind::Elementary, Some(_)) => {
                out.insert(Violation::new(Rule::UnexpectedSubgraph, id));
            }
            _ => {}
        }
        if n.kind == ActivityKind::Composite && n.outcome_schema.is_some() {
            out.insert(Violation::new(Rule::SchemaOnComposite, id));
        }
        if (id == g.start || id == g.end) && (n.kind == ActivityKind::Composite || n.outcome_schema.is_some()) {
            out.insert(Violation::new(Rule::TerminalNotPlain, id));
        }
        if let Some(sub) = &n.subgraph {
            check_level(sub, out);
        }
    }
}

fn reach<'a>(from: &'a str, adj: &BTreeMap<&'a str, Vec<&'a str>>) -> BTreeSet<&'a str> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        for &m in adj.get(n).into_iter().flatten() {
            if seen.insert(m) {
                queue.push_back(m);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::graph::{ActivityDef, Transition};

    #[test]
    fn minimal_graph_is_legal() {
        assert!(validate_graph(&WorkflowGraph::sequence(&["A"])).is_empty());
    }

    #[test]
    fn unreachable_node() {
        let g = WorkflowGraph::sequence(&["A"])
            .add(ActivityDef::elementary("B"))
            .edge(Transition::new("B", "end"))
            .with_join_fix();
        assert_eq!(validate_graph(&g), [Violation::new(Rule::Unreachable, "B")]);
    }

    #[test]
    fn xor_without_default() {
        let mut g = WorkflowGraph::bare()
            .add(ActivityDef::elementary("A").with_split(Gate::Xor))
            .add(ActivityDef::elementary("B"))
            .add(ActivityDef::elementary("C"))
            .add(ActivityDef::elementary("J").with_join(Gate::Xor))
            .edge(Transition::new("start", "A"))
            .edge(Transition::guarded("A", "B", "$r.x > 1"))
            .edge(Transition::guarded("A", "C", "$r.x <= 1"))
            .edge(Transition::new("B", "J"))
            .edge(Transition::new("C", "J"))
            .edge(Transition::new("J", "end"));
        assert_eq!(validate_graph(&g), [Violation::new(Rule::NoDefault, "A")]);
        g.edges[2] = Transition::default_edge("A", "C");
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn nested_ids_must_be_globally_unique() {
        let sub = WorkflowGraph::sequence_with(&["A"], "s1", "e1");
        let g = WorkflowGraph::sequence(&["A"]).add(ActivityDef::composite("C", sub));
        assert!(validate_graph(&g).contains(&Violation::new(Rule::DuplicateId, "A")));
    }

    impl WorkflowGraph {
        /// test helper: declare XOR joins wherever in-degree ≥ 2
        fn with_join_fix(mut self) -> Self {
            let indeg: Vec<(String, usize)> = self
                .nodes
                .iter()
                .map(|n| (n.id.clone(), self.incoming(&n.id).count()))
                .collect();
            for (id, d) in indeg {
                if d >= 2 {
                    self.node_mut(&id).unwrap().join = Gate::Xor;
                }
            }
            self
        }
    }
}
