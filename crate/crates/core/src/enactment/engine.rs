use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::net::{Choice, Net, NodeRole, RunState};
use super::{ActivityState, Event, EventKind, Fire, Item, ItemStatus};
use crate::docmodel::{validate_outcome, Doc};
use crate::error::{Error, Result};
use crate::evolution::apply_delta;
use crate::metamodel::{Body, DescriptionRecord, Kind, Registry, Rule, VersionRef, Violation, WorkflowGraph};

/// Default loop unrolling depth for replay checks.
pub const DEFAULT_LOOP_BOUND: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// How many times the replay search may enter any one node.
    pub loop_bound: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            loop_bound: DEFAULT_LOOP_BOUND,
        }
    }
}

/// Descriptions plus the live items interpreted against them.
///
/// All writes go through `&mut self`, so each item has a single writer;
/// callers that share an engine across threads wrap it in a lock.
#[derive(Debug, Clone, Default)]
pub struct Engine {
    pub(crate) registry: Registry,
    pub(crate) items: BTreeMap<String, Item>,
    pub(crate) clock: u64,
    pub(crate) config: EngineConfig,
}

pub(crate) const SYSTEM_AGENT: &str = "system";

impl Engine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_config(config: EngineConfig) -> Self {
        Engine {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn publish(&mut self, name: &str, body: Body) -> Result<VersionRef> {
        self.registry.publish(name, body)
    }

    /// Attach a stored description record (see [`Registry::restore`]).
    pub fn restore_description(&mut self, record: DescriptionRecord) -> Result<VersionRef> {
        self.registry.restore(record)
    }

    pub fn item(&self, id: &str) -> Result<&Item> {
        self.items.get(id).ok_or_else(|| Error::NotFound(alloc::format!("item {id}")))
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub(crate) fn resolve_graph_record(&self, r: &VersionRef) -> Result<Arc<DescriptionRecord>> {
        let rec = self.registry.resolve_ref(r)?;
        match rec.kind() {
            Kind::ItemDesc | Kind::ConnectorDesc => Ok(rec),
            other => Err(Error::KindMismatch {
                name: r.name.clone(),
                expected: Kind::ItemDesc,
                found: other,
            }),
        }
    }

    pub(crate) fn is_cyclic(&self, r: &VersionRef) -> bool {
        self.registry.kind_of(&r.name) == Some(Kind::ConnectorDesc)
    }

    /// Description graph of `desc` with `delta` applied in order.
    pub(crate) fn graph_with_delta(&self, desc: &VersionRef, delta: &[crate::evolution::DeltaOp]) -> Result<WorkflowGraph> {
        let rec = self.resolve_graph_record(desc)?;
        let base = rec.body.graph().expect("graph-bearing kind");
        if delta.is_empty() {
            return Ok(base.clone());
        }
        apply_delta(base, delta)
    }

    pub(crate) fn run_state(item: &Item) -> RunState {
        RunState {
            states: item.states.clone(),
            marking: item.marking.clone(),
            entries: BTreeMap::new(),
            restarts: 0,
        }
    }

    pub(crate) fn status_of(states: &BTreeMap<String, ActivityState>, graph: &WorkflowGraph, cyclic: bool) -> ItemStatus {
        let busy = states
            .values()
            .any(|s| matches!(s, ActivityState::Enabled | ActivityState::Started));
        if !cyclic && !busy && states.get(&graph.end) == Some(&ActivityState::Completed) {
            ItemStatus::Completed
        } else {
            ItemStatus::Active
        }
    }

    /// Fresh instance state and the ENABLE events that record it.
    fn fresh(&self, id: &str, desc: &VersionRef, timestamp: u64) -> Result<(Item, Vec<Event>)> {
        let graph = self.graph_with_delta(desc, &[])?;
        let cyclic = self.is_cyclic(desc);
        let net = Net::new(&graph, cyclic);
        let empty = Doc::new("outcome");
        let mut states = net.begin(net.blank_state(), Choice::Guards(&empty))?;
        let st = states.pop().ok_or_else(|| Error::IllegalTransition("start cannot be entered".into()))?;
        let mut enabled_ids = alloc::vec![net.start.to_string()];
        enabled_ids.extend(
            net.order
                .iter()
                .filter(|n| st.states.get(**n) == Some(&ActivityState::Enabled))
                .map(|n| n.to_string()),
        );
        let events: Vec<Event> = enabled_ids
            .into_iter()
            .enumerate()
            .map(|(i, a)| Event {
                seq: i as u64 + 1,
                item_id: id.to_string(),
                activity_id: a,
                transition: EventKind::Enable,
                agent: SYSTEM_AGENT.to_string(),
                timestamp,
                outcome: None,
                desc_version: desc.clone(),
                migrated_from: None,
                delta: None,
                correlation: None,
            })
            .collect();
        let item = Item {
            id: id.to_string(),
            described_by: desc.clone(),
            adhoc_delta: Vec::new(),
            status: Self::status_of(&st.states, &graph, cyclic),
            states: st.states,
            marking: st.marking,
            pass_floor: 0,
            processed: BTreeSet::new(),
            log: events.clone(),
        };
        Ok((item, events))
    }

    /// Create an item described by `desc` (an ITEM_DESC record).
    pub fn instantiate(&mut self, id: &str, desc: &VersionRef) -> Result<&Item> {
        let rec = self.registry.resolve_ref(desc)?;
        if rec.kind() != Kind::ItemDesc {
            return Err(Error::KindMismatch {
                name: desc.name.clone(),
                expected: Kind::ItemDesc,
                found: rec.kind(),
            });
        }
        self.instantiate_any(id, desc)
    }

    pub(crate) fn instantiate_any(&mut self, id: &str, desc: &VersionRef) -> Result<&Item> {
        if id.is_empty() {
            return Err(Error::Invalid("empty item id".into()));
        }
        if self.items.contains_key(id) {
            return Err(Error::DuplicateItem(id.to_string()));
        }
        let (item, _) = self.fresh(id, desc, self.clock + 1)?;
        self.clock += 1;
        Ok(self.items.entry(id.to_string()).or_insert(item))
    }

    pub fn enabled(&self, id: &str) -> Result<BTreeSet<String>> {
        Ok(self.item(id)?.enabled())
    }

    pub(crate) fn new_event(&self, item: &Item, activity: &str, kind: EventKind, agent: &str) -> Event {
        Event {
            seq: item.last_seq() + 1,
            item_id: item.id.clone(),
            activity_id: activity.to_string(),
            transition: kind,
            agent: agent.to_string(),
            timestamp: self.clock + 1,
            outcome: None,
            desc_version: item.described_by.clone(),
            migrated_from: None,
            delta: None,
            correlation: None,
        }
    }

    /// Apply `ev` to the item and store the result. Nothing changes when
    /// the event is rejected.
    pub(crate) fn commit(&mut self, ev: Event) -> Result<Event> {
        let item = self.item(&ev.item_id)?;
        let next = self.apply_event(item, &ev)?;
        self.clock = self.clock.max(ev.timestamp);
        self.items.insert(next.id.clone(), next);
        Ok(ev)
    }

    pub fn fire(&mut self, id: &str, activity: &str, fire: Fire, agent: &str, outcome: Option<Doc>) -> Result<Event> {
        let mut ev = self.new_event(self.item(id)?, activity, fire.event_kind(), agent);
        ev.outcome = outcome;
        self.commit(ev)
    }

    /// Pure transition function: the item after `ev`, with `ev` appended.
    pub(crate) fn apply_event(&self, item: &Item, ev: &Event) -> Result<Item> {
        if ev.item_id != item.id {
            return Err(Error::Invalid(alloc::format!("event for {} applied to {}", ev.item_id, item.id)));
        }
        if ev.seq != item.last_seq() + 1 {
            return Err(Error::Invalid(alloc::format!("expected seq {}, got {}", item.last_seq() + 1, ev.seq)));
        }
        let mut next = match ev.transition {
            EventKind::Enable => {
                return Err(Error::IllegalTransition("ENABLE is only recorded at instantiation".into()));
            }
            EventKind::Start | EventKind::Complete | EventKind::Skip => self.apply_fire(item, ev)?,
            EventKind::Migrate => self.apply_migrate_event(item, ev)?,
            EventKind::Adhoc => self.apply_adhoc_event(item, ev)?,
        };
        next.log.push(ev.clone());
        Ok(next)
    }

    fn apply_fire(&self, item: &Item, ev: &Event) -> Result<Item> {
        if ev.desc_version != item.described_by {
            return Err(Error::Invalid(alloc::format!(
                "event names {}, item is described by {}",
                ev.desc_version, item.described_by
            )));
        }
        if item.status != ItemStatus::Active {
            return Err(Error::IllegalTransition(alloc::format!("item {} is not active", item.id)));
        }
        let graph = self.graph_with_delta(&item.described_by, &item.adhoc_delta)?;
        let cyclic = self.is_cyclic(&item.described_by);
        let net = Net::new(&graph, cyclic);
        let activity = ev.activity_id.as_str();
        let info = net
            .info(activity)
            .ok_or_else(|| Error::NotFound(alloc::format!("activity {activity} in {}", item.described_by)))?;
        let current = item.state(activity).unwrap_or(ActivityState::Waiting);
        let agent_driven = info.role == NodeRole::Plain
            || (ev.transition == EventKind::Skip && info.role == NodeRole::Composite);
        if !agent_driven {
            return Err(Error::IllegalTransition(alloc::format!("{activity} is driven by the engine")));
        }
        if !info.def.role.is_empty() && info.def.role != ev.agent {
            return Err(Error::RoleMismatch {
                activity: activity.to_string(),
                required: info.def.role.clone(),
                agent: ev.agent.clone(),
            });
        }
        let illegal = |to: ActivityState| {
            Error::IllegalTransition(alloc::format!("{activity}: {current} -> {to}"))
        };
        let mut st = Self::run_state(item);
        let empty = Doc::new("outcome");
        let settled = match ev.transition {
            EventKind::Start => {
                if current != ActivityState::Enabled {
                    return Err(illegal(ActivityState::Started));
                }
                st.states.insert(activity.to_string(), ActivityState::Started);
                st
            }
            EventKind::Complete => {
                if current != ActivityState::Started {
                    return Err(illegal(ActivityState::Completed));
                }
                if let Some(schema_ref) = &info.def.outcome_schema {
                    let rec = self.registry.resolve_ref(schema_ref)?;
                    let Body::Schema(schema) = &rec.body else {
                        return Err(Error::KindMismatch {
                            name: schema_ref.name.clone(),
                            expected: Kind::OutcomeSchema,
                            found: rec.kind(),
                        });
                    };
                    let violations = match &ev.outcome {
                        Some(doc) => validate_outcome(doc, schema),
                        None if schema.required.is_empty() => Vec::new(),
                        None => alloc::vec![Violation::new(Rule::Missing, "outcome")],
                    };
                    if !violations.is_empty() {
                        return Err(Error::SchemaViolation(violations));
                    }
                }
                st.states.insert(activity.to_string(), ActivityState::Completed);
                let doc = ev.outcome.as_ref().unwrap_or(&empty);
                single(net.emit_from(st, activity, Choice::Guards(doc))?)?
            }
            EventKind::Skip => match current {
                ActivityState::Waiting => {
                    st.states.insert(activity.to_string(), ActivityState::Skipped);
                    st
                }
                ActivityState::Enabled => {
                    st.states.insert(activity.to_string(), ActivityState::Skipped);
                    single(net.emit_from(st, activity, Choice::Guards(&empty))?)?
                }
                _ => return Err(illegal(ActivityState::Skipped)),
            },
            _ => unreachable!("dispatched by apply_event"),
        };
        let mut next = item.clone();
        next.status = Self::status_of(&settled.states, &graph, cyclic);
        if settled.restarts > 0 {
            next.pass_floor = ev.seq;
        }
        next.states = settled.states;
        next.marking = settled.marking;
        if let Some(c) = &ev.correlation {
            next.processed.insert(c.clone());
        }
        Ok(next)
    }

    /// Rebuild an item from its log alone.
    pub fn replay(&self, log: &[Event]) -> Result<Item> {
        let first = log.first().ok_or(Error::CorruptLog {
            seq: 0,
            detail: "empty log".into(),
        })?;
        if first.transition != EventKind::Enable || first.seq != 1 {
            return Err(Error::CorruptLog {
                seq: first.seq,
                detail: "log must open with the instantiation ENABLE events".into(),
            });
        }
        let (mut item, expected) = self
            .fresh(&first.item_id, &first.desc_version, first.timestamp)
            .map_err(|e| Error::CorruptLog {
                seq: 1,
                detail: alloc::format!("{e}"),
            })?;
        for (i, want) in expected.iter().enumerate() {
            if log.get(i) != Some(want) {
                return Err(Error::CorruptLog {
                    seq: i as u64 + 1,
                    detail: "instantiation events differ from the description".into(),
                });
            }
        }
        for ev in &log[expected.len()..] {
            if ev.seq != item.last_seq() + 1 {
                return Err(Error::CorruptLog {
                    seq: ev.seq,
                    detail: alloc::format!("sequence gap after {}", item.last_seq()),
                });
            }
            item = self.apply_event(&item, ev).map_err(|e| Error::CorruptLog {
                seq: ev.seq,
                detail: alloc::format!("{e}"),
            })?;
        }
        Ok(item)
    }

    /// Replay `log` and install the result as a live item.
    pub fn restore_item(&mut self, log: &[Event]) -> Result<&Item> {
        let item = self.replay(log)?;
        if self.items.contains_key(&item.id) {
            return Err(Error::DuplicateItem(item.id));
        }
        self.clock = self.clock.max(log.iter().map(|e| e.timestamp).max().unwrap_or(0));
        let id = item.id.clone();
        Ok(self.items.entry(id).or_insert(item))
    }
}

fn single(mut v: Vec<RunState>) -> Result<RunState> {
    match v.len() {
        1 => Ok(v.pop().expect("one state")),
        0 => Err(Error::IllegalTransition("token flow produced no state".into())),
        n => Err(Error::IllegalTransition(alloc::format!("token flow forked into {n} states"))),
    }
}
