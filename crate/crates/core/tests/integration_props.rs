mod common;

use common::refexpr::{reference_eval, RefValue};
use ddsflow_core::docmodel::{parse_expr, Doc, Format, Node, TransformRule};
use ddsflow_core::enactment::Engine;
use ddsflow_core::integration::{route, CommMode, ConnectorSpec, Message, RoutingRule, DEAD_LETTER};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GUARDS: &[&str] = &[
    "$out.amount > 100",
    "$out.amount <= 100",
    "$out.amount == 0",
    "$out.region == \"eu\"",
    "$out.region != \"eu\"",
    "exists($out.vip)",
    "$out.vip == true",
    "$out.missing > 1",
    "$out.amount",
    "concat($out.region, \"x\")",
    "true",
    "false",
    "not ($out.amount > 5) or $out.region == \"us\"",
];

fn random_doc<R: Rng>(rng: &mut R) -> Doc {
    let mut n = Node::new("out");
    let amounts = ["0", "5", "99.5", "100", "100.01", "250", "-3", "abc"];
    n.attrs.insert("amount".into(), amounts[rng.random_range(0..amounts.len())].into());
    if rng.random_bool(0.8) {
        let regions = ["eu", "us", "apac"];
        n.attrs.insert("region".into(), regions[rng.random_range(0..3)].into());
    }
    if rng.random_bool(0.5) {
        n.attrs.insert("vip".into(), if rng.random_bool(0.5) { "true" } else { "no" }.into());
    }
    Doc::from_root(n)
}

/// First rule whose guard the reference evaluator judges true.
fn scan(routes: &[(String, String)], doc: &Doc) -> (String, usize) {
    let mut errors = 0;
    for (guard, target) in routes {
        match reference_eval(&parse_expr(guard).unwrap(), doc) {
            RefValue::Truth(true) => return (target.clone(), errors),
            RefValue::Truth(false) => {}
            _ => errors += 1,
        }
    }
    (DEAD_LETTER.to_string(), errors)
}

#[test]
fn routing_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7007e);
    let mut dead = 0;
    for case in 0..100 {
        let routes: Vec<(String, String)> = (0..rng.random_range(0..5))
            .map(|i| (GUARDS[rng.random_range(0..GUARDS.len())].to_string(), format!("sink{i}")))
            .collect();
        let rules: Vec<RoutingRule> = routes
            .iter()
            .map(|(g, t)| RoutingRule {
                guard: parse_expr(g).unwrap(),
                target_endpoint: t.clone(),
            })
            .collect();
        let doc = random_doc(&mut rng);
        let got = route(&rules, &doc);
        let (want, errors) = scan(&routes, &doc);
        assert_eq!(got.endpoint, want, "case {case}: {routes:?} on {doc}");
        assert_eq!(got.guard_errors.len(), errors, "case {case}: {routes:?} on {doc}");
        dead += usize::from(want == DEAD_LETTER);
    }
    assert!(dead > 5 && dead < 95, "dead-letter share {dead}");
}

fn spec() -> ConnectorSpec {
    let mut s = ConnectorSpec::simple("in", CommMode::Inproc, Format::FlatRecord);
    s.transform = vec![
        TransformRule::new("$out.n", "num($record.n)").unwrap(),
        TransformRule::new("$out.tag", "concat(\"t-\", $record.n)").unwrap(),
    ];
    s.routes = vec![
        RoutingRule {
            guard: parse_expr("$out.n > 10").unwrap(),
            target_endpoint: "big".into(),
        },
        RoutingRule {
            guard: parse_expr("$out.n <= 10").unwrap(),
            target_endpoint: "small".into(),
        },
    ];
    s
}

#[test]
fn connectors_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let msgs: Vec<Message> = (0..60)
        .map(|i| {
            let payload = match rng.random_range(0..6) {
                0 => "n".to_string(),
                1 => "n=x".to_string(),
                _ => format!("n={}", rng.random_range(0..25)),
            };
            // every fifth message repeats an earlier id
            let id = if i % 5 == 4 { format!("m{}", i - 2) } else { format!("m{i}") };
            Message::new(id, "in", payload, Format::FlatRecord)
        })
        .collect();
    let run = || {
        let mut eng = Engine::new();
        eng.deploy_connector("c", spec()).unwrap();
        let out: Vec<Vec<Message>> = msgs.iter().map(|m| eng.on_message("c", m).unwrap().outbound).collect();
        (out, eng.item("c").unwrap().to_canonical())
    };
    let (a, state_a) = run();
    let (b, state_b) = run();
    assert_eq!(a, b);
    assert_eq!(state_a, state_b);
    for (m, out) in msgs.iter().zip(&a) {
        assert!(out.len() <= 1);
        if let Some(o) = out.first() {
            assert_eq!(o.id, format!("{}>c", m.id));
            assert!(["big", "small", DEAD_LETTER].contains(&o.endpoint.as_str()), "{o:?}");
        }
    }
    // repeated ids produce nothing the second time
    assert!(a.iter().any(Vec::is_empty));
}
