//! Base-level instances and their event-sourced enactment.

pub(crate) mod engine;
pub(crate) mod net;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::docmodel::Doc;
use crate::error::Result;
use crate::evolution::DeltaOp;
use crate::metamodel::VersionRef;

pub use engine::{Engine, EngineConfig, DEFAULT_LOOP_BOUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActivityState {
    Waiting,
    Enabled,
    Started,
    Completed,
    Skipped,
}

impl ActivityState {
    pub fn code(self) -> &'static str {
        match self {
            ActivityState::Waiting => "WAITING",
            ActivityState::Enabled => "ENABLED",
            ActivityState::Started => "STARTED",
            ActivityState::Completed => "COMPLETED",
            ActivityState::Skipped => "SKIPPED",
        }
    }

    /// Moves an agent or the token flow may cause. `Completed → Enabled` is
    /// loop re-entry.
    pub fn can_move_to(self, next: ActivityState) -> bool {
        use ActivityState::*;
        matches!(
            (self, next),
            (Waiting, Enabled)
                | (Enabled, Started)
                | (Started, Completed)
                | (Waiting | Enabled, Skipped)
                | (Completed, Enabled)
        )
    }
}

impl fmt::Display for ActivityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemStatus {
    Active,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Enable,
    Start,
    Complete,
    Skip,
    Migrate,
    Adhoc,
}

/// Agent-driven transitions accepted by [`Engine::fire`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fire {
    Start,
    Complete,
    Skip,
}

impl Fire {
    pub fn event_kind(self) -> EventKind {
        match self {
            Fire::Start => EventKind::Start,
            Fire::Complete => EventKind::Complete,
            Fire::Skip => EventKind::Skip,
        }
    }

    pub fn parse(s: &str) -> Option<Fire> {
        match s {
            "start" | "START" => Some(Fire::Start),
            "complete" | "COMPLETE" => Some(Fire::Complete),
            "skip" | "SKIP" => Some(Fire::Skip),
            _ => None,
        }
    }
}

/// One entry of an item's append-only history. The log alone, together
/// with the published descriptions, reproduces the item exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub item_id: String,
    pub activity_id: String,
    pub transition: EventKind,
    pub agent: String,
    /// Logical clock value, not wall time.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<Doc>,
    pub desc_version: VersionRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub migrated_from: Option<VersionRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaOp>,
    /// Message id a connector consumed with this event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<String>,
}

impl Event {
    pub fn to_canonical(&self) -> Result<String> {
        canon::to_canonical(self)
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        canon::from_canonical(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub described_by: VersionRef,
    pub adhoc_delta: Vec<DeltaOp>,
    pub states: BTreeMap<String, ActivityState>,
    /// Tokens per edge, keyed `from->to`; zero entries are dropped.
    pub marking: BTreeMap<String, u32>,
    pub status: ItemStatus,
    /// Sequence number after which the current pass of a cyclic (connector)
    /// item began; the trace only covers later completions.
    pub pass_floor: u64,
    pub processed: BTreeSet<String>,
    pub log: Vec<Event>,
}

impl Item {
    pub fn to_canonical(&self) -> String {
        canon::to_canonical(self).expect("item state encodes")
    }

    pub fn state(&self, activity: &str) -> Option<ActivityState> {
        self.states.get(activity).copied()
    }

    pub fn enabled(&self) -> BTreeSet<String> {
        self.in_state(ActivityState::Enabled)
    }

    pub fn in_state(&self, s: ActivityState) -> BTreeSet<String> {
        self.states.iter().filter(|(_, v)| **v == s).map(|(k, _)| k.clone()).collect()
    }

    /// Completed activities of the current pass, in completion order.
    pub fn trace(&self) -> Vec<String> {
        self.log
            .iter()
            .filter(|e| e.seq > self.pass_floor && e.transition == EventKind::Complete)
            .map(|e| e.activity_id.clone())
            .collect()
    }

    pub fn last_seq(&self) -> u64 {
        self.log.last().map_or(0, |e| e.seq)
    }
}
