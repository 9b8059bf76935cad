//! Token flow over a flattened view of a workflow graph.
//!
//! Tokens live on edges. A node is entered when its join condition is met
//! (NONE/XOR: any incoming token, AND: a token on every incoming edge), and
//! consumes those tokens on entry. Start, end and composite nodes are
//! automatic: they never wait for an agent. A SKIPPED node stays skipped and
//! forwards tokens as if it had completed, taking the default branch of an
//! XOR split.
//!
//! The same code serves live enactment (XOR branches chosen by guards) and
//! the bounded replay search used for migration checks (XOR branches
//! explored as free choices, each node entered at most `bound` times).

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::ActivityState;
use crate::docmodel::{eval_expr, Doc, Value};
use crate::error::Error;
use crate::metamodel::{ActivityDef, ActivityKind, Gate, Transition, WorkflowGraph};

/// Upper bound on node entries within a single live settle; exceeding it
/// means the graph spins through automatic nodes without reaching an agent.
const LIVE_ENTRY_BUDGET: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeRole {
    Plain,
    Start,
    End,
    Composite,
}

#[derive(Debug)]
pub(crate) struct NodeInfo<'g> {
    pub def: &'g ActivityDef,
    pub parent: Option<&'g str>,
    pub role: NodeRole,
    sub_start: Option<&'g str>,
}

pub(crate) fn edge_key(from: &str, to: &str) -> String {
    alloc::format!("{from}->{to}")
}

#[derive(Debug)]
pub(crate) struct Net<'g> {
    pub start: &'g str,
    pub nodes: BTreeMap<&'g str, NodeInfo<'g>>,
    /// All node ids in declaration order (depth first).
    pub order: Vec<&'g str>,
    out: BTreeMap<&'g str, Vec<&'g Transition>>,
    inc: BTreeMap<&'g str, Vec<&'g Transition>>,
    cyclic: bool,
}

/// Marking plus per-node activity states. `entries` counts node entries and
/// is only meaningful during bounded search.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct RunState {
    pub states: BTreeMap<String, ActivityState>,
    pub marking: BTreeMap<String, u32>,
    pub entries: BTreeMap<String, u32>,
    pub restarts: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Choice<'d> {
    Guards(&'d Doc),
    Free { bound: u32 },
}

/// Why a flow computation stopped.
#[derive(Debug)]
pub(crate) enum Halt {
    Fail(Error),
    /// Branch exceeded the entry bound; dropped silently.
    Pruned,
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Fail(e)
    }
}

type Flow<T = ()> = Result<T, Halt>;

impl<'g> Net<'g> {
    pub fn new(graph: &'g WorkflowGraph, cyclic: bool) -> Self {
        let mut net = Net {
            start: &graph.start,
            nodes: BTreeMap::new(),
            order: Vec::new(),
            out: BTreeMap::new(),
            inc: BTreeMap::new(),
            cyclic,
        };
        net.add_level(graph, None);
        net
    }

    fn add_level(&mut self, g: &'g WorkflowGraph, parent: Option<&'g str>) {
        for n in &g.nodes {
            let role = if n.id == g.start {
                NodeRole::Start
            } else if n.id == g.end {
                NodeRole::End
            } else if n.kind == ActivityKind::Composite {
                NodeRole::Composite
            } else {
                NodeRole::Plain
            };
            self.order.push(&n.id);
            self.nodes.insert(
                &n.id,
                NodeInfo {
                    def: n,
                    parent,
                    role,
                    sub_start: n.subgraph.as_deref().map(|s| s.start.as_str()),
                },
            );
            if let Some(sub) = n.subgraph.as_deref() {
                self.add_level(sub, Some(&n.id));
            }
        }
        for e in &g.edges {
            self.out.entry(&e.from).or_default().push(e);
            self.inc.entry(&e.to).or_default().push(e);
        }
    }

    pub fn info(&self, id: &str) -> Option<&NodeInfo<'g>> {
        self.nodes.get(id)
    }

    /// Nodes an agent can act on: plain elementary activities.
    pub fn is_agent_activity(&self, id: &str) -> bool {
        matches!(self.info(id), Some(i) if i.role == NodeRole::Plain)
    }

    fn outgoing(&self, id: &str) -> &[&'g Transition] {
        self.out.get(id).map_or(&[], Vec::as_slice)
    }

    fn incoming(&self, id: &str) -> &[&'g Transition] {
        self.inc.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn blank_state(&self) -> RunState {
        RunState {
            states: self.order.iter().map(|id| (id.to_string(), ActivityState::Waiting)).collect(),
            marking: BTreeMap::new(),
            entries: BTreeMap::new(),
            restarts: 0,
        }
    }

    /// Enter the start node of a fresh state and settle.
    pub fn begin(&self, mut st: RunState, choice: Choice<'_>) -> Result<Vec<RunState>, Error> {
        let mut queue = VecDeque::new();
        let mut budget = LIVE_ENTRY_BUDGET;
        let mut out = Vec::new();
        let start = self.start;
        match self
            .enter(&mut st, &mut queue, start, &choice, &mut budget)
            .and_then(|()| self.drain(st, queue, &choice, &mut out, &mut budget))
        {
            Ok(()) | Err(Halt::Pruned) => Ok(out),
            Err(Halt::Fail(e)) => Err(e),
        }
    }

    /// `id` has just completed (or been skipped while enabled): emit its
    /// tokens and settle.
    pub fn emit_from(&self, st: RunState, id: &str, choice: Choice<'_>) -> Result<Vec<RunState>, Error> {
        let mut budget = LIVE_ENTRY_BUDGET;
        let mut out = Vec::new();
        match self.drain(st, VecDeque::from([id.to_string()]), &choice, &mut out, &mut budget) {
            Ok(()) | Err(Halt::Pruned) => Ok(out),
            Err(Halt::Fail(e)) => Err(e),
        }
    }

    fn drain(
        &self,
        mut st: RunState,
        mut queue: VecDeque<String>,
        choice: &Choice<'_>,
        out: &mut Vec<RunState>,
        budget: &mut u32,
    ) -> Flow {
        while let Some(node) = queue.pop_front() {
            let mut alts = self.alternatives(&st, &node, choice)?;
            if alts.len() == 1 {
                let edges = alts.pop().unwrap_or_default();
                self.fire_edges(&mut st, &mut queue, &edges, choice, budget)?;
                self.try_enter(&mut st, &mut queue, &node, choice, budget)?;
                continue;
            }
            for edges in alts {
                let mut st2 = st.clone();
                let mut q2 = queue.clone();
                let step = self
                    .fire_edges(&mut st2, &mut q2, &edges, choice, budget)
                    .and_then(|()| self.try_enter(&mut st2, &mut q2, &node, choice, budget))
                    .and_then(|()| self.drain(st2, q2, choice, out, budget));
                match step {
                    Ok(()) | Err(Halt::Pruned) => {}
                    Err(e) => return Err(e),
                }
            }
            return Ok(());
        }
        out.push(st);
        Ok(())
    }

    /// Edge sets that may fire when `node` emits. More than one set only
    /// under free XOR choice.
    fn alternatives(&self, st: &RunState, node: &str, choice: &Choice<'_>) -> Flow<Vec<Vec<&'g Transition>>> {
        let edges = self.outgoing(node);
        let Some(info) = self.info(node) else {
            return Ok(alloc::vec![Vec::new()]);
        };
        if info.def.split != Gate::Xor {
            return Ok(alloc::vec![edges.to_vec()]);
        }
        let default = edges.iter().copied().filter(|e| e.is_default).collect::<Vec<_>>();
        if st.states.get(node) == Some(&ActivityState::Skipped) {
            return Ok(alloc::vec![default]);
        }
        match choice {
            Choice::Free { .. } => Ok(edges.iter().map(|e| alloc::vec![*e]).collect()),
            Choice::Guards(doc) => {
                for e in edges.iter().filter(|e| !e.is_default) {
                    let Some(guard) = &e.guard else { continue };
                    match eval_expr(guard, doc) {
                        Value::Bool(true) => return Ok(alloc::vec![alloc::vec![*e]]),
                        Value::Bool(false) => {}
                        other => {
                            let detail = match other {
                                Value::Error(d) => d,
                                v => alloc::format!("guard produced non-boolean {v:?}"),
                            };
                            return Err(Halt::Fail(Error::GuardError {
                                from: e.from.clone(),
                                to: e.to.clone(),
                                detail,
                            }));
                        }
                    }
                }
                Ok(alloc::vec![default])
            }
        }
    }

    fn fire_edges(
        &self,
        st: &mut RunState,
        queue: &mut VecDeque<String>,
        edges: &[&'g Transition],
        choice: &Choice<'_>,
        budget: &mut u32,
    ) -> Flow {
        for e in edges {
            *st.marking.entry(edge_key(&e.from, &e.to)).or_default() += 1;
        }
        for e in edges {
            self.try_enter(st, queue, &e.to, choice, budget)?;
        }
        Ok(())
    }

    fn take_token(st: &mut RunState, e: &Transition) -> bool {
        let key = edge_key(&e.from, &e.to);
        match st.marking.get_mut(&key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                if *n == 0 {
                    st.marking.remove(&key);
                }
                true
            }
            _ => false,
        }
    }

    fn has_token(st: &RunState, e: &Transition) -> bool {
        st.marking.get(&edge_key(&e.from, &e.to)).is_some_and(|n| *n > 0)
    }

    fn try_enter(
        &self,
        st: &mut RunState,
        queue: &mut VecDeque<String>,
        id: &str,
        choice: &Choice<'_>,
        budget: &mut u32,
    ) -> Flow {
        let Some(info) = self.info(id) else { return Ok(()) };
        if matches!(st.states.get(id), Some(ActivityState::Enabled | ActivityState::Started)) {
            return Ok(());
        }
        let incoming = self.incoming(id);
        let ready = match info.def.join {
            Gate::And => !incoming.is_empty() && incoming.iter().all(|e| Self::has_token(st, e)),
            Gate::None | Gate::Xor => incoming.iter().any(|e| Self::has_token(st, e)),
        };
        if !ready {
            return Ok(());
        }
        match info.def.join {
            Gate::And => {
                for e in incoming {
                    Self::take_token(st, e);
                }
            }
            Gate::None | Gate::Xor => {
                if let Some(e) = incoming.iter().find(|e| Self::has_token(st, e)) {
                    Self::take_token(st, e);
                }
            }
        }
        self.enter(st, queue, id, choice, budget)
    }

    fn enter(
        &self,
        st: &mut RunState,
        queue: &mut VecDeque<String>,
        id: &str,
        choice: &Choice<'_>,
        budget: &mut u32,
    ) -> Flow {
        let count = st.entries.entry(id.to_string()).or_default();
        *count += 1;
        match choice {
            Choice::Free { bound } if *count > *bound => return Err(Halt::Pruned),
            Choice::Free { .. } => {}
            Choice::Guards(_) => {
                st.entries.clear();
                *budget = budget.saturating_sub(1);
                if *budget == 0 {
                    return Err(Halt::Fail(Error::IllegalTransition(alloc::format!(
                        "token flow does not settle around {id}"
                    ))));
                }
            }
        }
        let Some(info) = self.info(id) else { return Ok(()) };
        if st.states.get(id) == Some(&ActivityState::Skipped) {
            queue.push_back(id.to_string());
            return Ok(());
        }
        match info.role {
            NodeRole::Plain => {
                st.states.insert(id.to_string(), ActivityState::Enabled);
            }
            NodeRole::Start => {
                st.states.insert(id.to_string(), ActivityState::Completed);
                queue.push_back(id.to_string());
            }
            NodeRole::Composite => {
                st.states.insert(id.to_string(), ActivityState::Started);
                if let Some(sub) = info.sub_start {
                    self.enter(st, queue, sub, choice, budget)?;
                }
            }
            NodeRole::End => {
                st.states.insert(id.to_string(), ActivityState::Completed);
                match info.parent {
                    Some(parent) => {
                        st.states.insert(parent.to_string(), ActivityState::Completed);
                        queue.push_back(parent.to_string());
                    }
                    None if self.cyclic => {
                        st.restarts += 1;
                        let start = self.start;
                        self.enter(st, queue, start, choice, budget)?;
                    }
                    None => {}
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metamodel::Transition;

    fn enabled(st: &RunState) -> Vec<&str> {
        st.states
            .iter()
            .filter(|(_, s)| **s == ActivityState::Enabled)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    fn and_graph() -> WorkflowGraph {
        WorkflowGraph::bare()
            .add(ActivityDef::elementary("A"))
            .add(ActivityDef::elementary("B"))
            .add(ActivityDef::elementary("C").with_join(Gate::And))
            .edge(Transition::new("start", "A"))
            .edge(Transition::new("start", "B"))
            .edge(Transition::new("A", "C"))
            .edge(Transition::new("B", "C"))
            .edge(Transition::new("C", "end"))
            .tap(|g| g.node_mut("start").unwrap().split = Gate::And)
    }

    impl WorkflowGraph {
        fn tap(mut self, f: impl FnOnce(&mut Self)) -> Self {
            f(&mut self);
            self
        }
    }

    fn complete(net: &Net<'_>, mut st: RunState, id: &str) -> RunState {
        st.states.insert(id.into(), ActivityState::Completed);
        let doc = Doc::new("x");
        let mut v = net.emit_from(st, id, Choice::Guards(&doc)).unwrap();
        assert_eq!(v.len(), 1);
        v.pop().unwrap()
    }

    #[test]
    fn and_join_waits_for_all_branches() {
        let g = and_graph();
        let net = Net::new(&g, false);
        let doc = Doc::new("x");
        let st = net.begin(net.blank_state(), Choice::Guards(&doc)).unwrap().pop().unwrap();
        assert_eq!(enabled(&st), ["A", "B"]);
        let st = complete(&net, st, "A");
        assert_eq!(enabled(&st), ["B"]);
        let st = complete(&net, st, "B");
        assert_eq!(enabled(&st), ["C"]);
        let st = complete(&net, st, "C");
        assert_eq!(st.states["end"], ActivityState::Completed);
        assert!(st.marking.is_empty());
    }

    #[test]
    fn free_choice_forks_xor() {
        let g = WorkflowGraph::bare()
            .add(ActivityDef::elementary("A").with_split(Gate::Xor))
            .add(ActivityDef::elementary("B"))
            .add(ActivityDef::elementary("C"))
            .add(ActivityDef::elementary("J").with_join(Gate::Xor))
            .edge(Transition::new("start", "A"))
            .edge(Transition::guarded("A", "B", "false"))
            .edge(Transition::default_edge("A", "C"))
            .edge(Transition::new("B", "J"))
            .edge(Transition::new("C", "J"))
            .edge(Transition::new("J", "end"));
        let net = Net::new(&g, false);
        let mut st = net.begin(net.blank_state(), Choice::Free { bound: 2 }).unwrap().pop().unwrap();
        st.states.insert("A".into(), ActivityState::Completed);
        let forks = net.emit_from(st, "A", Choice::Free { bound: 2 }).unwrap();
        let sets: Vec<Vec<&str>> = forks.iter().map(enabled).collect();
        assert_eq!(sets, [alloc::vec!["B"], alloc::vec!["C"]]);
    }

    #[test]
    fn composite_runs_its_subgraph() {
        let sub = WorkflowGraph::sequence_with(&["X"], "s", "e");
        let g = WorkflowGraph::bare()
            .add(ActivityDef::composite("K", sub))
            .edge(Transition::new("start", "K"))
            .edge(Transition::new("K", "end"));
        let net = Net::new(&g, false);
        let doc = Doc::new("x");
        let st = net.begin(net.blank_state(), Choice::Guards(&doc)).unwrap().pop().unwrap();
        assert_eq!(st.states["K"], ActivityState::Started);
        assert_eq!(enabled(&st), ["X"]);
        let st = complete(&net, st, "X");
        assert_eq!(st.states["K"], ActivityState::Completed);
        assert_eq!(st.states["end"], ActivityState::Completed);
    }

    #[test]
    fn cyclic_net_restarts_at_end() {
        let g = WorkflowGraph::sequence(&["handle"]);
        let net = Net::new(&g, true);
        let doc = Doc::new("x");
        let st = net.begin(net.blank_state(), Choice::Guards(&doc)).unwrap().pop().unwrap();
        let st = complete(&net, st, "handle");
        assert_eq!(st.restarts, 1);
        assert_eq!(enabled(&st), ["handle"]);
    }
}
