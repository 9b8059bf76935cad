#![allow(dead_code)]

//! Order pipeline shared by the integration tests: intake (flat records)
//! feeds pricing (canonical, two transform versions), which feeds a router
//! that splits orders between `approve.in` and `auto.in`.

use std::collections::{BTreeMap, BTreeSet};

use ddsflow::{DeliveryRecord, Result, System};
use ddsflow_core::evolution::{MigrationReport, Verdict};
use ddsflow_core::docmodel::{parse_expr, Format, TransformRule};
use ddsflow_core::integration::{CommMode, ConnectorSpec, Message, RoutingRule, DEAD_LETTER};
use ddsflow_core::metamodel::VersionRef;

pub const ORDERS_IN: &str = "orders.in";
pub const SINKS: [&str; 3] = ["approve.in", "auto.in", DEAD_LETTER];
pub const MALFORMED: usize = 7;
pub const SWITCH_AFTER: usize = 10;

fn rule(target: &str, expr: &str) -> TransformRule {
    TransformRule::new(target, expr).unwrap()
}

fn route(guard: &str, target: &str) -> RoutingRule {
    RoutingRule {
        guard: parse_expr(guard).unwrap(),
        target_endpoint: target.into(),
    }
}

pub fn intake(mode: CommMode) -> ConnectorSpec {
    let mut s = ConnectorSpec::simple(ORDERS_IN, mode, Format::FlatRecord);
    s.transform = vec![
        rule("$out.id", "$record.id"),
        rule("$out.customer", "$record.customer"),
        rule("$out.amount", "$record.amount"),
    ];
    s.routes = vec![route("true", "pricing.in")];
    s
}

pub fn pricing(mode: CommMode, version: u32) -> ConnectorSpec {
    let mut s = ConnectorSpec::simple("pricing.in", mode, Format::Canonical);
    s.transform = match version {
        1 => vec![
            rule("$out.id", "$out.id"),
            rule("$out.amount", "num($out.amount)"),
            rule("$out.currency", "\"EUR\""),
            rule("$out.tier", "concat(\"std-\", $out.customer)"),
        ],
        _ => vec![
            rule("$out.id", "$out.id"),
            rule("$out.amount", "num($out.amount)"),
            rule("$out.currency", "\"CHF\""),
            rule("$out.tier", "concat(\"v2-\", $out.customer, \"-\", $out.id)"),
        ],
    };
    s.routes = vec![route("true", "router.in")];
    s
}

pub fn router(mode: CommMode) -> ConnectorSpec {
    let mut s = ConnectorSpec::simple("router.in", mode, Format::Canonical);
    s.transform = ["id", "amount", "currency", "tier"]
        .iter()
        .map(|a| rule(&format!("$out.{a}"), &format!("$out.{a}")))
        .collect();
    s.routes = vec![route("$out.amount > 100", "approve.in"), route("true", "auto.in")];
    s
}

pub struct Order {
    pub id: String,
    pub customer: &'static str,
    pub amount: &'static str,
}

pub fn orders() -> Vec<Order> {
    const CUSTOMERS: [&str; 4] = ["acme", "globex", "initech", "umbrella"];
    const AMOUNTS: [&str; 20] = [
        "250", "40", "100", "100.5", "7", "1200", "0", "99.9", "101", "55", "300", "12.25", "100", "640", "3", "150",
        "42", "88", "1000", "100.01",
    ];
    (0..20)
        .map(|i| Order {
            id: format!("o{:02}", i + 1),
            customer: CUSTOMERS[i % 4],
            amount: AMOUNTS[i],
        })
        .collect()
}

pub fn order_message(i: usize, o: &Order) -> Message {
    let payload = if i + 1 == MALFORMED {
        format!("id={}\nthis line has no separator", o.id)
    } else {
        format!("id={}\ncustomer={}\namount={}", o.id, o.customer, o.amount)
    };
    Message::new(o.id.clone(), ORDERS_IN, payload, Format::FlatRecord)
}

/// Expected sink and payload for order `i` (0-based), written out by hand.
pub fn expected_delivery(i: usize, o: &Order) -> (&'static str, String) {
    if i + 1 == MALFORMED {
        return (DEAD_LETTER, order_message(i, o).payload);
    }
    let v2 = i >= SWITCH_AFTER;
    // num() of these decimals prints back exactly as written
    let amount = o.amount;
    let big = amount.parse::<f64>().unwrap() > 100.0;
    let (currency, tier) = if v2 {
        ("CHF", format!("v2-{}-{}", o.customer, o.id))
    } else {
        ("EUR", format!("std-{}", o.customer))
    };
    let payload = format!(
        r#"{{"attrs":{{"amount":"{amount}","currency":"{currency}","id":"{}","tier":"{tier}"}},"children":[],"name":"out"}}"#,
        o.id
    );
    (if big { "approve.in" } else { "auto.in" }, payload)
}

pub fn deploy_all(sys: &mut System, mode: CommMode) -> Result<()> {
    // Redeploying the latest spec is a no-op apart from reopening endpoints
    // and creating a missing item.
    let pricing_latest = sys.engine().registry().latest_version("pricing").unwrap_or(1);
    sys.deploy_connector("intake", intake(mode))?;
    sys.deploy_connector("pricing", pricing(mode, pricing_latest))?;
    sys.deploy_connector("router", router(mode))?;
    Ok(())
}

pub fn send_orders(sys: &mut System, range: std::ops::Range<usize>) -> Result<usize> {
    let seen: BTreeSet<String> = sys.bus().history(ORDERS_IN)?.into_iter().map(|m| m.id).collect();
    let all = orders();
    let mut sent = 0;
    for i in range {
        let msg = order_message(i, &all[i]);
        if !seen.contains(&msg.id) {
            sys.send(ORDERS_IN, &msg)?;
            sent += 1;
        }
    }
    Ok(sent)
}

pub struct PipelineRun {
    pub trace: Vec<DeliveryRecord>,
    pub report: Option<MigrationReport>,
}

/// The whole scenario, written so that running it again on a recovered
/// system finishes whatever the previous run left undone. With `switch`
/// off, pricing stays on v1 throughout.
pub fn drive_pipeline(sys: &mut System, mode: CommMode, seed: u64, switch: bool) -> Result<PipelineRun> {
    deploy_all(sys, mode)?;
    let pricing_v1 = VersionRef::new("pricing", 1);
    let pricing_v2 = VersionRef::new("pricing", 2);
    let mut trace = Vec::new();
    let mut report = None;
    if sys.item("pricing")?.described_by == pricing_v1 {
        send_orders(sys, 0..SWITCH_AFTER)?;
        trace.extend(sys.run_until_quiet(seed, 1000)?);
        if switch {
            if sys.engine().registry().latest_version("pricing") == Some(1) {
                sys.deploy_connector("pricing", pricing(mode, 2))?;
            }
            let r = sys.migration_report("pricing", &pricing_v2)?;
            if r.verdict == Verdict::Valid {
                sys.migrate("pricing", &pricing_v2)?;
            }
            report = Some(r);
        }
    }
    send_orders(sys, SWITCH_AFTER..20)?;
    trace.extend(sys.run_until_quiet(seed.wrapping_add(1000), 1000)?);
    Ok(PipelineRun { trace, report })
}

/// Messages seen on each sink in arrival order, first copy of each id only:
/// `(id, payload, error header)`.
pub fn sink_sequences(sys: &System) -> BTreeMap<String, Vec<(String, String, Option<String>)>> {
    let mut out = BTreeMap::new();
    for sink in SINKS {
        let mut seen = BTreeSet::new();
        let seq: Vec<_> = sys
            .bus()
            .history(sink)
            .unwrap_or_default()
            .into_iter()
            .filter(|m| seen.insert(m.id.clone()))
            .map(|m| (m.id.clone(), m.payload.clone(), m.error().map(str::to_string)))
            .collect();
        out.insert(sink.to_string(), seq);
    }
    out
}
