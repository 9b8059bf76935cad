//! The meta level: immutable, versioned description records.
//!
//! Base-level objects ([`crate::enactment::Item`]) point at a
//! [`VersionRef`]; the record behind it is never modified once published,
//! so every instance is always interpreted against exactly the description
//! it names.

mod diff;
mod graph;
mod registry;
mod validate;

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::canon;
use crate::docmodel::OutcomeSchema;
use crate::error::{Error, Result};
use crate::integration::ConnectorSpec;

pub use diff::{diff_graphs, ChangeSet, SchemaChange};
pub use graph::{ActivityDef, ActivityKind, Gate, Transition, WorkflowGraph, END, START};
pub use registry::{Registry, Selector};
pub use validate::validate_graph;

/// `name@version`, the identity of one published description.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionRef {
    pub name: String,
    pub version: u32,
}

impl VersionRef {
    pub fn new(name: impl Into<String>, version: u32) -> Self {
        VersionRef {
            name: name.into(),
            version,
        }
    }
}

impl fmt::Display for VersionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.version)
    }
}

impl FromStr for VersionRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, v) = s
            .rsplit_once('@')
            .ok_or_else(|| Error::Invalid(alloc::format!("expected name@version, got {s:?}")))?;
        let version: u32 = v
            .parse()
            .map_err(|_| Error::Invalid(alloc::format!("bad version in {s:?}")))?;
        if name.is_empty() || version == 0 {
            return Err(Error::Invalid(alloc::format!("bad version ref {s:?}")));
        }
        Ok(VersionRef::new(name, version))
    }
}

impl Serialize for VersionRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Kind {
    ItemDesc,
    ActivityDesc,
    OutcomeSchema,
    ConnectorDesc,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::ItemDesc, Kind::ActivityDesc, Kind::OutcomeSchema, Kind::ConnectorDesc];

    pub fn code(self) -> &'static str {
        match self {
            Kind::ItemDesc => "ITEM_DESC",
            Kind::ActivityDesc => "ACTIVITY_DESC",
            Kind::OutcomeSchema => "OUTCOME_SCHEMA",
            Kind::ConnectorDesc => "CONNECTOR_DESC",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Kind-specific payload of a description record.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Item(WorkflowGraph),
    Activity(WorkflowGraph),
    Schema(OutcomeSchema),
    Connector(ConnectorSpec),
}

impl Body {
    pub fn kind(&self) -> Kind {
        match self {
            Body::Item(_) => Kind::ItemDesc,
            Body::Activity(_) => Kind::ActivityDesc,
            Body::Schema(_) => Kind::OutcomeSchema,
            Body::Connector(_) => Kind::ConnectorDesc,
        }
    }

    /// The behaviour graph, for graph-bearing kinds.
    pub fn graph(&self) -> Option<&WorkflowGraph> {
        match self {
            Body::Item(g) | Body::Activity(g) => Some(g),
            Body::Connector(c) => Some(&c.behaviour),
            Body::Schema(_) => None,
        }
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        let v = match self {
            Body::Item(g) | Body::Activity(g) => serde_json::to_value(g),
            Body::Schema(s) => serde_json::to_value(s),
            Body::Connector(c) => serde_json::to_value(c),
        };
        v.map_err(|e| Error::Invalid(alloc::format!("{e}")))
    }

    fn from_json(kind: Kind, v: serde_json::Value) -> Result<Body> {
        let bad = |e: serde_json::Error| Error::Invalid(alloc::format!("{kind} body: {e}"));
        Ok(match kind {
            Kind::ItemDesc => Body::Item(serde_json::from_value(v).map_err(bad)?),
            Kind::ActivityDesc => Body::Activity(serde_json::from_value(v).map_err(bad)?),
            Kind::OutcomeSchema => Body::Schema(serde_json::from_value(v).map_err(bad)?),
            Kind::ConnectorDesc => Body::Connector(serde_json::from_value(v).map_err(bad)?),
        })
    }
}

/// A published meta-object.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionRecord {
    pub reference: VersionRef,
    pub body: Body,
    pub predecessor: Option<u32>,
    /// Logical publish sequence number (global across names).
    pub published_at: u64,
}

#[derive(Serialize, Deserialize)]
struct RecordRepr {
    #[serde(rename = "ref")]
    reference: VersionRef,
    kind: Kind,
    body: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predecessor: Option<u32>,
    published_at: u64,
}

impl DescriptionRecord {
    pub fn kind(&self) -> Kind {
        self.body.kind()
    }

    pub fn to_canonical(&self) -> Result<String> {
        canon::to_canonical(&RecordRepr {
            reference: self.reference.clone(),
            kind: self.kind(),
            body: self.body.to_json()?,
            predecessor: self.predecessor,
            published_at: self.published_at,
        })
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        let r: RecordRepr = canon::from_canonical(text)?;
        Ok(DescriptionRecord {
            body: Body::from_json(r.kind, r.body)?,
            reference: r.reference,
            predecessor: r.predecessor,
            published_at: r.published_at,
        })
    }
}

/// On-disk description file: `{"body":…,"kind":…,"name":…}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptionFile {
    pub name: String,
    pub body: Body,
}

#[derive(Serialize, Deserialize)]
struct FileRepr {
    kind: Kind,
    name: String,
    body: serde_json::Value,
}

impl DescriptionFile {
    pub fn parse(text: &str) -> Result<Self> {
        let r: FileRepr = canon::from_canonical(text)?;
        Ok(DescriptionFile {
            body: Body::from_json(r.kind, r.body)?,
            name: r.name,
        })
    }

    pub fn to_canonical(&self) -> Result<String> {
        canon::to_canonical(&FileRepr {
            kind: self.body.kind(),
            name: self.name.clone(),
            body: self.body.to_json()?,
        })
    }
}

/// Rule names reported by graph, schema and meta-schema validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    MissingStart,
    MissingEnd,
    StartIsEnd,
    StartHasIncoming,
    EndHasOutgoing,
    Unreachable,
    DeadEnd,
    DuplicateId,
    DanglingEdge,
    DuplicateEdge,
    SplitMismatch,
    JoinMismatch,
    NoDefault,
    MultipleDefaults,
    MissingGuard,
    GuardOnDefault,
    GuardOnNonXor,
    DefaultOnNonXor,
    MissingSubgraph,
    UnexpectedSubgraph,
    SchemaOnComposite,
    TerminalNotPlain,
    UnknownSchema,
    Missing,
    TypeMismatch,
    DuplicatePath,
    BadConnector,
    EmptyName,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::MissingStart => "MISSING_START",
            Rule::MissingEnd => "MISSING_END",
            Rule::StartIsEnd => "START_IS_END",
            Rule::StartHasIncoming => "START_HAS_INCOMING",
            Rule::EndHasOutgoing => "END_HAS_OUTGOING",
            Rule::Unreachable => "UNREACHABLE",
            Rule::DeadEnd => "DEAD_END",
            Rule::DuplicateId => "DUPLICATE_ID",
            Rule::DanglingEdge => "DANGLING_EDGE",
            Rule::DuplicateEdge => "DUPLICATE_EDGE",
            Rule::SplitMismatch => "SPLIT_MISMATCH",
            Rule::JoinMismatch => "JOIN_MISMATCH",
            Rule::NoDefault => "NO_DEFAULT",
            Rule::MultipleDefaults => "MULTIPLE_DEFAULTS",
            Rule::MissingGuard => "MISSING_GUARD",
            Rule::GuardOnDefault => "GUARD_ON_DEFAULT",
            Rule::GuardOnNonXor => "GUARD_ON_NON_XOR",
            Rule::DefaultOnNonXor => "DEFAULT_ON_NON_XOR",
            Rule::MissingSubgraph => "MISSING_SUBGRAPH",
            Rule::UnexpectedSubgraph => "UNEXPECTED_SUBGRAPH",
            Rule::SchemaOnComposite => "SCHEMA_ON_COMPOSITE",
            Rule::TerminalNotPlain => "TERMINAL_NOT_PLAIN",
            Rule::UnknownSchema => "UNKNOWN_SCHEMA",
            Rule::Missing => "MISSING",
            Rule::TypeMismatch => "TYPE_MISMATCH",
            Rule::DuplicatePath => "DUPLICATE_PATH",
            Rule::BadConnector => "BAD_CONNECTOR",
            Rule::EmptyName => "EMPTY_NAME",
        }
    }
}

/// One broken rule and the node, edge (`from->to`) or path it concerns.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Violation {
    pub rule: Rule,
    pub subject: String,
}

impl Violation {
    pub fn new(rule: Rule, subject: impl AsRef<str>) -> Self {
        Violation {
            rule,
            subject: subject.as_ref().to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.rule.code(), self.subject)
    }
}

/// Fixed documentation record for one description kind. These form the
/// meta-model layer: they can be listed but not edited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetaSchema {
    pub kind: Kind,
    pub body: &'static str,
    pub rules: &'static [&'static str],
}

const GRAPH_RULES: &[&str] = &[
    "exactly one start and one end node; start has no incoming edge, end no outgoing edge",
    "every node reachable from start; end reachable from every node",
    "node ids unique across the graph and its subgraphs",
    "split/join gate NONE iff degree <= 1",
    "XOR split: guarded edges plus exactly one unguarded default edge",
    "guards and default markers only on XOR-split edges",
    "COMPOSITE nodes carry a subgraph and no outcome schema",
    "outcome schema references resolve to OUTCOME_SCHEMA records",
];

static META_SCHEMAS: [MetaSchema; 4] = [
    MetaSchema {
        kind: Kind::ItemDesc,
        body: "WorkflowGraph",
        rules: GRAPH_RULES,
    },
    MetaSchema {
        kind: Kind::ActivityDesc,
        body: "WorkflowGraph",
        rules: GRAPH_RULES,
    },
    MetaSchema {
        kind: Kind::OutcomeSchema,
        body: "OutcomeSchema",
        rules: &["required paths unique", "types in {STRING, NUMBER, BOOLEAN, NODE}"],
    },
    MetaSchema {
        kind: Kind::ConnectorDesc,
        body: "ConnectorSpec",
        rules: &[
            "behaviour satisfies every WorkflowGraph rule",
            "transform targets are $out.<attr> paths",
            "inbound endpoint and route targets are non-empty names",
        ],
    },
];

pub fn meta_schemas() -> &'static [MetaSchema] {
    &META_SCHEMAS
}

pub fn meta_schema(kind: Kind) -> &'static MetaSchema {
    META_SCHEMAS.iter().find(|m| m.kind == kind).expect("every kind has a meta-schema")
}

/// Parse the graph-bearing body of a record or report which kind it was.
pub(crate) fn graph_of(rec: &DescriptionRecord) -> Result<&WorkflowGraph> {
    rec.body.graph().ok_or_else(|| Error::KindMismatch {
        name: rec.reference.name.clone(),
        expected: Kind::ItemDesc,
        found: rec.kind(),
    })
}

pub(crate) fn sorted_violations(mut v: Vec<Violation>) -> Vec<Violation> {
    v.sort();
    v.dedup();
    v
}
