//! Connectors: integration logic held as ordinary items. Each connector's
//! description carries its behaviour graph, transformation rules, routes and
//! transport binding; its instance logs one pass per message handled.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::docmodel::{apply_transform, eval_expr, parse_doc, serialize_doc, Doc, Expr, Format, TransformRule, Value};
use crate::enactment::net::Net;
use crate::enactment::{ActivityState, Engine, Event, EventKind, Item};
use crate::error::{Error, Result};
use crate::metamodel::{validate_graph, Body, Kind, Rule, Selector, VersionRef, Violation, WorkflowGraph};

/// Always-present endpoint for messages that could not be handled.
pub const DEAD_LETTER: &str = "dead-letter";

pub const HEADER_MSG_ID: &str = "msg-id";
pub const HEADER_FORMAT: &str = "format";
pub const HEADER_ERROR: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommMode {
    Inproc,
    File,
}

impl CommMode {
    pub fn parse(s: &str) -> Option<CommMode> {
        match s {
            "INPROC" | "inproc" => Some(CommMode::Inproc),
            "FILE" | "file" => Some(CommMode::File),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            CommMode::Inproc => "INPROC",
            CommMode::File => "FILE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingRule {
    pub guard: Expr,
    pub target_endpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectorSpec {
    pub comm_mode: CommMode,
    pub data_format: Format,
    pub behaviour: WorkflowGraph,
    #[serde(default)]
    pub transform: Vec<TransformRule>,
    #[serde(default)]
    pub routes: Vec<RoutingRule>,
    pub inbound_endpoint: String,
}

impl ConnectorSpec {
    /// Single `handle` activity behaviour, the common case.
    pub fn simple(inbound: &str, comm_mode: CommMode, data_format: Format) -> Self {
        ConnectorSpec {
            comm_mode,
            data_format,
            behaviour: WorkflowGraph::sequence(&["handle"]),
            transform: Vec::new(),
            routes: Vec::new(),
            inbound_endpoint: inbound.to_string(),
        }
    }

    pub fn check(&self) -> Vec<Violation> {
        let mut v = validate_graph(&self.behaviour);
        let bad = |s: String| Violation::new(Rule::BadConnector, s);
        let net = Net::new(&self.behaviour, true);
        if !net.order.iter().any(|id| net.is_agent_activity(id)) {
            v.push(bad("behaviour has no elementary activity".into()));
        }
        if self.inbound_endpoint.is_empty() || self.inbound_endpoint == DEAD_LETTER {
            v.push(bad(alloc::format!("inbound_endpoint {:?}", self.inbound_endpoint)));
        }
        for (i, r) in self.routes.iter().enumerate() {
            if r.target_endpoint.is_empty() || r.target_endpoint == self.inbound_endpoint {
                v.push(bad(alloc::format!("route {i} target {:?}", r.target_endpoint)));
            }
        }
        for (i, t) in self.transform.iter().enumerate() {
            if let Err(e) = t.check() {
                v.push(bad(alloc::format!("transform {i}: {e}")));
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub endpoint: String,
    pub payload: String,
    pub format: Format,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
}

impl Message {
    /// New message with the reserved `msg-id` and `format` headers set.
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>, payload: impl Into<String>, format: Format) -> Self {
        let id = id.into();
        let mut headers = BTreeMap::new();
        headers.insert(HEADER_MSG_ID.to_string(), id.clone());
        headers.insert(HEADER_FORMAT.to_string(), format.tag().to_string());
        Message {
            id,
            endpoint: endpoint.into(),
            payload: payload.into(),
            format,
            headers,
        }
    }

    pub fn with_header(mut self, key: &str, value: impl Into<String>) -> Self {
        self.headers.insert(key.to_string(), value.into());
        self
    }

    pub fn error(&self) -> Option<&str> {
        self.headers.get(HEADER_ERROR).map(String::as_str)
    }

    pub fn to_canonical(&self) -> String {
        crate::canon::to_canonical(self).expect("message encodes")
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        crate::canon::from_canonical(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteDecision {
    pub endpoint: String,
    /// `(rule index, detail)` for guards that did not yield a boolean.
    pub guard_errors: Vec<(usize, String)>,
}

/// First rule whose guard is true, else the dead-letter endpoint.
pub fn route(routes: &[RoutingRule], doc: &Doc) -> RouteDecision {
    let mut guard_errors = Vec::new();
    for (i, r) in routes.iter().enumerate() {
        match eval_expr(&r.guard, doc) {
            Value::Bool(true) => {
                return RouteDecision {
                    endpoint: r.target_endpoint.clone(),
                    guard_errors,
                }
            }
            Value::Bool(false) => {}
            Value::Error(d) => guard_errors.push((i, d)),
            other => guard_errors.push((i, alloc::format!("non-boolean {other:?}"))),
        }
    }
    RouteDecision {
        endpoint: DEAD_LETTER.to_string(),
        guard_errors,
    }
}

/// What handling one inbound message produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub outbound: Vec<Message>,
    /// Events appended to the connector's log (empty on dead-letter and
    /// for duplicates).
    pub events: Vec<Event>,
}

pub(crate) fn outbound_id(msg_id: &str, connector: &str) -> String {
    alloc::format!("{msg_id}>{connector}")
}

fn dead_letter(msg: &Message, connector: &str, err: &Error) -> Message {
    let mut out = Message::new(outbound_id(&msg.id, connector), DEAD_LETTER, msg.payload.clone(), msg.format);
    out.headers.insert(HEADER_ERROR.into(), alloc::format!("{}: {err}", err.code()));
    out
}

impl Engine {
    /// Publish `spec` as the next CONNECTOR_DESC version of `name` and make
    /// sure a connector item named `name` exists. An existing item keeps its
    /// version until migrated. Redeploying an identical spec is a no-op.
    pub fn deploy_connector(&mut self, name: &str, spec: ConnectorSpec) -> Result<VersionRef> {
        if let Some((other, _)) = self
            .bindings()
            .into_iter()
            .find(|(c, ep)| c != name && *ep == spec.inbound_endpoint)
        {
            return Err(Error::EndpointInUse {
                endpoint: spec.inbound_endpoint.clone(),
                connector: other,
            });
        }
        let body = Body::Connector(spec);
        let reference = match self.registry.resolve(name, Selector::Latest) {
            Ok(rec) if rec.body == body => rec.reference.clone(),
            _ => self.publish(name, body)?,
        };
        if !self.items.contains_key(name) {
            self.instantiate_any(name, &reference)?;
        }
        Ok(reference)
    }

    /// `(connector, inbound endpoint)` for every connector item.
    pub fn bindings(&self) -> Vec<(String, String)> {
        self.items
            .values()
            .filter_map(|it| Some((it.id.clone(), self.connector_spec_of(it).ok()?.inbound_endpoint)))
            .collect()
    }

    pub fn is_connector(&self, item_id: &str) -> bool {
        self.items
            .get(item_id)
            .is_some_and(|it| self.registry.kind_of(&it.described_by.name) == Some(Kind::ConnectorDesc))
    }

    fn connector_spec_of(&self, item: &Item) -> Result<ConnectorSpec> {
        let rec = self.registry.resolve_ref(&item.described_by)?;
        match &rec.body {
            Body::Connector(spec) => Ok(spec.clone()),
            _ => Err(Error::KindMismatch {
                name: item.described_by.name.clone(),
                expected: Kind::ConnectorDesc,
                found: rec.kind(),
            }),
        }
    }

    /// Spec the connector item currently runs under.
    pub fn connector_spec(&self, connector: &str) -> Result<ConnectorSpec> {
        self.connector_spec_of(self.item(connector)?)
    }

    /// Handle one inbound message to quiescence. Either the connector logs
    /// one START/COMPLETE pass and one routed message results, or nothing
    /// changes and one dead-letter message results. A message id seen
    /// before yields nothing.
    pub fn on_message(&mut self, connector: &str, msg: &Message) -> Result<Delivery> {
        let item = self.item(connector)?;
        let spec = self.connector_spec_of(item)?;
        if item.processed.contains(&msg.id) {
            return Ok(Delivery {
                outbound: Vec::new(),
                events: Vec::new(),
            });
        }
        match self.handle(connector, &spec, msg) {
            Ok((next, events, doc)) => {
                self.clock += 1;
                self.items.insert(next.id.clone(), next);
                let out = apply_transform(&spec.transform, &doc);
                let decision = route(&spec.routes, &out.doc);
                let mut reply = Message::new(
                    outbound_id(&msg.id, connector),
                    decision.endpoint,
                    serialize_doc(&out.doc),
                    Format::Canonical,
                );
                let mut problems: Vec<String> = out
                    .errors
                    .iter()
                    .map(|e| alloc::format!("transform {}: {}", e.rule, e.detail))
                    .collect();
                problems.extend(decision.guard_errors.iter().map(|(i, d)| alloc::format!("route {i}: {d}")));
                if !problems.is_empty() {
                    reply.headers.insert(HEADER_ERROR.into(), problems.join("; "));
                }
                Ok(Delivery {
                    outbound: alloc::vec![reply],
                    events,
                })
            }
            Err(e) => Ok(Delivery {
                outbound: alloc::vec![dead_letter(msg, connector, &e)],
                events: Vec::new(),
            }),
        }
    }

    /// Compute the connector's next state without committing it.
    fn handle(&self, connector: &str, spec: &ConnectorSpec, msg: &Message) -> Result<(Item, Vec<Event>, Doc)> {
        let doc = parse_doc(&msg.payload, spec.data_format)?;
        let item = self.item(connector)?;
        let graph = self.graph_with_delta(&item.described_by, &item.adhoc_delta)?;
        let net = Net::new(&graph, self.is_cyclic(&item.described_by));
        let pick = |want: ActivityState| {
            net.order
                .iter()
                .find(|id| net.is_agent_activity(id) && item.state(id) == Some(want))
                .map(|id| id.to_string())
        };
        let (activity, needs_start) = match (pick(ActivityState::Started), pick(ActivityState::Enabled)) {
            (Some(a), _) => (a, false),
            (None, Some(a)) => (a, true),
            (None, None) => return Err(Error::IllegalTransition(alloc::format!("{connector} has no enabled activity"))),
        };
        let agent = net.info(&activity).map(|i| i.def.role.clone()).filter(|r| !r.is_empty());
        let agent = agent.unwrap_or_else(|| connector.to_string());
        let mut cur = item.clone();
        let mut events = Vec::new();
        if needs_start {
            let ev = self.new_event(&cur, &activity, EventKind::Start, &agent);
            cur = self.apply_event(&cur, &ev)?;
            events.push(ev);
        }
        let mut ev = self.new_event(&cur, &activity, EventKind::Complete, &agent);
        ev.outcome = Some(doc.clone());
        ev.correlation = Some(msg.id.clone());
        cur = self.apply_event(&cur, &ev)?;
        events.push(ev);
        Ok((cur, events, doc))
    }
}
