use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Serialize, Serializer};

use super::DeltaOp;
use crate::docmodel::Doc;
use crate::enactment::net::{Choice, Net, NodeRole, RunState};
use crate::enactment::{ActivityState, Engine, Event, EventKind, Item, ItemStatus};
use crate::error::{Error, Result};
use crate::metamodel::{Body, VersionRef, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Reason {
    TraceNotReplayable,
    StartedActivityRemoved(String),
    /// The item's own delta does not apply to the target graph.
    DeltaNotApplicable(String),
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reason::TraceNotReplayable => f.write_str("TRACE_NOT_REPLAYABLE"),
            Reason::StartedActivityRemoved(id) => write!(f, "STARTED_ACTIVITY_REMOVED({id})"),
            Reason::DeltaNotApplicable(d) => write!(f, "DELTA_NOT_APPLICABLE({d})"),
        }
    }
}

impl Serialize for Reason {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MigrationReport {
    pub item_id: String,
    pub from: VersionRef,
    pub to: VersionRef,
    pub verdict: Verdict,
    pub reasons: Vec<Reason>,
    /// Activity states to adopt; covers every node of the target graph.
    pub state_mapping: BTreeMap<String, ActivityState>,
    /// Edge tokens matching `state_mapping`.
    pub marking: BTreeMap<String, u32>,
}

impl MigrationReport {
    pub fn reasons_text(&self) -> String {
        let parts: Vec<String> = self.reasons.iter().map(|r| r.to_string()).collect();
        parts.join(", ")
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

/// Outcome of replaying a trace against a graph.
pub(crate) struct Replay {
    /// Reachable states after the last trace element, deduplicated.
    pub finals: BTreeSet<RunState>,
}

/// All states reachable by completing exactly `trace`, in order, with XOR
/// branches chosen freely and every node entered at most `bound` times.
pub(crate) fn replay_trace(net: &Net<'_>, trace: &[String], skipped: &BTreeSet<String>, bound: u32) -> Result<Replay> {
    let choice = Choice::Free { bound };
    let mut base = net.blank_state();
    for id in skipped {
        if let Some(s) = base.states.get_mut(id) {
            *s = ActivityState::Skipped;
        }
    }
    let mut frontier: BTreeSet<RunState> = net.begin(base, choice)?.into_iter().collect();
    for a in trace {
        let mut next = BTreeSet::new();
        for st in &frontier {
            if st.states.get(a) != Some(&ActivityState::Enabled) {
                continue;
            }
            let mut st = st.clone();
            st.states.insert(a.clone(), ActivityState::Completed);
            next.extend(net.emit_from(st, a, choice)?);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(Replay { finals: frontier })
}

/// Pick the replayed state closest to the live one. States in which every
/// started activity is enabled come first, then the most agreement with
/// the live activity states.
fn closest<'a>(finals: &'a BTreeSet<RunState>, live: &BTreeMap<String, ActivityState>, started: &[String]) -> Option<&'a RunState> {
    let score = |st: &RunState| {
        let ready = started.iter().all(|id| st.states.get(id) == Some(&ActivityState::Enabled));
        let agree = st.states.iter().filter(|(k, v)| live.get(*k) == Some(*v)).count();
        (ready, agree)
    };
    let mut best: Option<(&RunState, (bool, usize))> = None;
    for st in finals {
        let s = score(st);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((st, s));
        }
    }
    best.map(|(st, _)| st)
}

impl Engine {
    /// The item's description graph with its ad-hoc delta applied.
    pub fn effective_graph(&self, item_id: &str) -> Result<WorkflowGraph> {
        let item = self.item(item_id)?;
        self.graph_with_delta(&item.described_by, &item.adhoc_delta)
    }

    pub fn migration_report(&self, item_id: &str, target: &VersionRef) -> Result<MigrationReport> {
        let item = self.item(item_id)?;
        if target.name != item.described_by.name {
            return Err(Error::NameMismatch {
                item: item.described_by.to_string(),
                target: target.to_string(),
            });
        }
        self.resolve_graph_record(target)?;
        Ok(self.plan(item, target, &item.adhoc_delta, self.config.loop_bound)?.0)
    }

    /// Activities an agent has started, by the item's current graph.
    fn started_activities(&self, item: &Item) -> Result<Vec<String>> {
        let graph = self.graph_with_delta(&item.described_by, &item.adhoc_delta)?;
        let net = Net::new(&graph, self.is_cyclic(&item.described_by));
        Ok(item
            .in_state(ActivityState::Started)
            .into_iter()
            .filter(|id| net.info(id).is_some_and(|i| i.role == NodeRole::Plain))
            .collect())
    }

    /// Migration check against `target` with `delta` on top. The flag says
    /// whether every started activity was enabled in the chosen replay.
    fn plan(&self, item: &Item, target: &VersionRef, delta: &[DeltaOp], bound: u32) -> Result<(MigrationReport, bool)> {
        let mut report = MigrationReport {
            item_id: item.id.clone(),
            from: item.described_by.clone(),
            to: target.clone(),
            verdict: Verdict::Invalid,
            reasons: Vec::new(),
            state_mapping: BTreeMap::new(),
            marking: BTreeMap::new(),
        };
        let graph = match self.graph_with_delta(target, delta) {
            Ok(g) => g,
            Err(Error::DeltaConflict(d)) => {
                report.reasons.push(Reason::DeltaNotApplicable(d));
                return Ok((report, false));
            }
            Err(e) => return Err(e),
        };
        let net = Net::new(&graph, self.is_cyclic(target));
        let started = self.started_activities(item)?;
        for id in &started {
            if !net.is_agent_activity(id) {
                report.reasons.push(Reason::StartedActivityRemoved(id.clone()));
            }
        }
        let skipped = item.in_state(ActivityState::Skipped);
        let replay = replay_trace(&net, &item.trace(), &skipped, bound)?;
        let Some(chosen) = closest(&replay.finals, &item.states, &started) else {
            report.reasons.push(Reason::TraceNotReplayable);
            return Ok((report, false));
        };
        if !report.reasons.is_empty() {
            return Ok((report, false));
        }
        let ready = started.iter().all(|id| chosen.states.get(id) == Some(&ActivityState::Enabled));
        let mut chosen = chosen.clone();
        for id in &started {
            chosen.states.insert(id.clone(), ActivityState::Started);
        }
        report.verdict = Verdict::Valid;
        report.state_mapping = chosen.states;
        report.marking = chosen.marking;
        Ok((report, ready))
    }

    /// Move the item to `target` if the report is VALID. On failure the
    /// item is left untouched.
    pub fn migrate(&mut self, item_id: &str, target: &VersionRef) -> Result<&Item> {
        let report = self.migration_report(item_id, target)?;
        if !report.is_valid() {
            return Err(Error::MigrationInvalid(Box::new(report)));
        }
        let item = self.item(item_id)?;
        let mut ev = self.new_event(item, "", EventKind::Migrate, crate::enactment::engine::SYSTEM_AGENT);
        ev.migrated_from = Some(item.described_by.clone());
        ev.desc_version = target.clone();
        self.commit(ev)?;
        self.item(item_id)
    }

    pub(crate) fn apply_migrate_event(&self, item: &Item, ev: &Event) -> Result<Item> {
        if ev.migrated_from.as_ref() != Some(&item.described_by) {
            return Err(Error::Invalid(alloc::format!("MIGRATE event does not start from {}", item.described_by)));
        }
        let target = &ev.desc_version;
        if target.name != item.described_by.name {
            return Err(Error::NameMismatch {
                item: item.described_by.to_string(),
                target: target.to_string(),
            });
        }
        self.resolve_graph_record(target)?;
        let (report, _) = self.plan(item, target, &item.adhoc_delta, self.config.loop_bound)?;
        if !report.is_valid() {
            return Err(Error::MigrationInvalid(Box::new(report)));
        }
        let graph = self.graph_with_delta(target, &item.adhoc_delta)?;
        let mut next = item.clone();
        next.described_by = target.clone();
        next.status = Engine::status_of(&report.state_mapping, &graph, self.is_cyclic(target));
        next.states = report.state_mapping;
        next.marking = report.marking;
        Ok(next)
    }

    /// Record a per-instance modification on the item.
    pub fn apply_adhoc(&mut self, item_id: &str, op: DeltaOp) -> Result<&Item> {
        let item = self.item(item_id)?;
        let mut ev = self.new_event(item, op.subject(), EventKind::Adhoc, crate::enactment::engine::SYSTEM_AGENT);
        ev.delta = Some(op);
        self.commit(ev)?;
        self.item(item_id)
    }

    pub(crate) fn apply_adhoc_event(&self, item: &Item, ev: &Event) -> Result<Item> {
        let op = ev
            .delta
            .as_ref()
            .ok_or_else(|| Error::Invalid("ADHOC event without delta".into()))?;
        if item.status != ItemStatus::Active {
            return Err(Error::IllegalTransition(alloc::format!("item {} is not active", item.id)));
        }
        let mut delta = item.adhoc_delta.clone();
        delta.push(op.clone());
        let graph = self.graph_with_delta(&item.described_by, &delta)?;
        let unknown = self.registry.check_body(&Body::Item(graph.clone()));
        if !unknown.is_empty() {
            let text: Vec<String> = unknown.iter().map(|v| v.to_string()).collect();
            return Err(Error::DeltaConflict(text.join(", ")));
        }
        let cyclic = self.is_cyclic(&item.described_by);
        let net = Net::new(&graph, cyclic);
        let mut next = item.clone();
        next.adhoc_delta = delta.clone();
        match op {
            DeltaOp::ReplaceGuard { .. } => {}
            DeltaOp::SkipActivity { id } => {
                let role = net.info(id).map(|i| i.role);
                let current = item.state(id).unwrap_or(ActivityState::Waiting);
                let mut st = Engine::run_state(item);
                st.states.insert(id.clone(), ActivityState::Skipped);
                let st = match (role, current) {
                    (Some(NodeRole::Plain | NodeRole::Composite), ActivityState::Waiting) => st,
                    (Some(NodeRole::Plain), ActivityState::Enabled) => {
                        let empty = Doc::new("outcome");
                        let mut v = net.emit_from(st, id, Choice::Guards(&empty))?;
                        if v.len() != 1 {
                            return Err(Error::IllegalTransition("token flow forked".into()));
                        }
                        v.pop().expect("one state")
                    }
                    _ => {
                        return Err(Error::IllegalTransition(alloc::format!("{id}: {current} -> SKIPPED")));
                    }
                };
                next.states = st.states;
                next.marking = st.marking;
            }
            DeltaOp::InsertAfter { activity, .. } => {
                let bound = item.trace().len() as u32 + self.config.loop_bound + 1;
                let (report, started_ready) = self.plan(item, &item.described_by, &delta, bound)?;
                if !report.is_valid() {
                    return Err(Error::DeltaConflict(alloc::format!(
                        "history does not fit after inserting {}: {}",
                        activity.id,
                        report.reasons_text()
                    )));
                }
                if !started_ready {
                    return Err(Error::DeltaConflict(alloc::format!(
                        "inserting {} would move a started activity back",
                        activity.id
                    )));
                }
                next.states = report.state_mapping;
                next.marking = report.marking;
            }
        }
        next.status = Engine::status_of(&next.states, &graph, cyclic);
        Ok(next)
    }
}
