mod common;

use std::collections::{BTreeMap, BTreeSet};

use ddsflow_core::docmodel::{Doc, Node};
use ddsflow_core::enactment::{ActivityState, Engine, Fire, Item, ItemStatus};
use ddsflow_core::metamodel::{ActivityKind, Body, Gate, VersionRef, WorkflowGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CLERK: &str = "clerk";

/// Random block graph with every other task restricted to `CLERK`.
fn graph(seed: u64, max_nodes: usize) -> WorkflowGraph {
    let mut g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), max_nodes);
    assign_roles(&mut g);
    g
}

fn assign_roles(g: &mut WorkflowGraph) {
    for n in g.nodes.iter_mut() {
        if let Some(num) = n.id.strip_prefix('T').and_then(|s| s.parse::<u32>().ok()) {
            if num % 2 == 0 {
                n.role = CLERK.into();
            }
        }
        if let Some(sub) = n.subgraph.as_deref_mut() {
            assign_roles(sub);
        }
    }
}

fn setup(g: WorkflowGraph) -> (Engine, VersionRef) {
    let mut eng = Engine::new();
    let r = eng.publish("PartDescription", Body::Item(g)).unwrap();
    eng.instantiate("i1", &r).unwrap();
    (eng, r)
}

struct Info {
    plain: BTreeSet<String>,
    roles: BTreeMap<String, String>,
    and_joins: Vec<(String, Vec<String>)>,
    xor_splits: Vec<(String, Vec<String>)>,
    /// Every activity an agent may act on, in a fixed order.
    actors: Vec<String>,
}

fn info(g: &WorkflowGraph) -> Info {
    let mut out = Info {
        plain: BTreeSet::new(),
        roles: BTreeMap::new(),
        and_joins: Vec::new(),
        xor_splits: Vec::new(),
        actors: Vec::new(),
    };
    collect(g, &mut out);
    out
}

fn collect(g: &WorkflowGraph, out: &mut Info) {
    for n in &g.nodes {
        let terminal = n.id == g.start || n.id == g.end;
        if !terminal && n.kind == ActivityKind::Elementary {
            out.plain.insert(n.id.clone());
        }
        if !terminal {
            out.actors.push(n.id.clone());
            out.roles.insert(n.id.clone(), n.role.clone());
        }
        if n.join == Gate::And {
            out.and_joins.push((n.id.clone(), g.incoming(&n.id).map(|e| e.from.clone()).collect()));
        }
        if n.split == Gate::Xor && n.id.starts_with('X') {
            out.xor_splits.push((n.id.clone(), g.outgoing(&n.id).map(|e| e.to.clone()).collect()));
        }
        if let Some(sub) = &n.subgraph {
            collect(sub, out);
        }
    }
}

fn outcome(activity: &str, pick: bool) -> Option<Doc> {
    if activity.starts_with('X') || activity.starts_with('L') {
        let v = if pick { "1" } else { "0" };
        Some(Doc::from_root(Node::new("outcome").with_attr(activity, v)))
    } else {
        None
    }
}

fn fire_of(k: u8) -> Fire {
    [Fire::Start, Fire::Complete, Fire::Skip][k as usize % 3]
}

/// Every per-activity change between `a` and `b` must be a move the acting
/// party is allowed to make.
fn check_moves(inf: &Info, a: &Item, b: &Item, activity: &str, fire: Fire) -> Result<(), String> {
    for (id, &before) in &a.states {
        let after = b.state(id).unwrap_or(ActivityState::Waiting);
        if before == after {
            continue;
        }
        if inf.plain.contains(id) {
            // Completing a loop tail whose body was skipped re-enters it at once.
            let looped = id == activity && fire == Fire::Complete && after == ActivityState::Enabled;
            if looped && before == ActivityState::Started {
                continue;
            }
            if !before.can_move_to(after) {
                return Err(format!("{id}: {before} -> {after}"));
            }
            let by_agent = matches!(after, ActivityState::Started | ActivityState::Completed | ActivityState::Skipped);
            if by_agent {
                let want = match fire {
                    Fire::Start => ActivityState::Started,
                    Fire::Complete => ActivityState::Completed,
                    Fire::Skip => ActivityState::Skipped,
                };
                if id != activity || after != want {
                    return Err(format!("{id}: {before} -> {after} while firing {activity} {fire:?}"));
                }
            }
        } else if after == ActivityState::Enabled {
            return Err(format!("engine-driven {id} became ENABLED"));
        }
    }
    Ok(())
}

fn check_state(inf: &Info, item: &Item) -> Result<(), String> {
    if let Some((k, n)) = item.marking.iter().find(|(_, n)| **n > 1) {
        return Err(format!("edge {k} holds {n} tokens"));
    }
    for (j, preds) in &inf.and_joins {
        if matches!(item.state(j), Some(ActivityState::Enabled | ActivityState::Started)) {
            let open: Vec<&String> = preds
                .iter()
                .filter(|p| !matches!(item.state(p), Some(ActivityState::Completed | ActivityState::Skipped)))
                .collect();
            if !open.is_empty() {
                return Err(format!("join {j} active while {open:?} unfinished"));
            }
        }
    }
    for (x, succ) in &inf.xor_splits {
        let live = succ
            .iter()
            .filter(|s| matches!(item.state(s), Some(ActivityState::Enabled | ActivityState::Started)))
            .count();
        if live > 1 {
            return Err(format!("both branches of {x} active"));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn replay_tracks_live_state(
        seed in any::<u64>(),
        ops in prop::collection::vec((any::<prop::sample::Index>(), 0..3u8, any::<bool>(), any::<bool>()), 1..50),
    ) {
        let g = graph(seed, 8);
        let inf = info(&g);
        let (mut eng, _) = setup(g);
        for (pick, kind, agent_ok, guard) in ops {
            let activity = pick.get(&inf.actors).clone();
            let fire = fire_of(kind);
            let agent = if agent_ok || inf.roles[&activity].is_empty() { inf.roles[&activity].clone() } else { "intruder".into() };
            let agent = if agent.is_empty() { "anyone".to_string() } else { agent };
            let before = eng.item("i1").unwrap().clone();
            match eng.fire("i1", &activity, fire, &agent, outcome(&activity, guard)) {
                Ok(ev) => {
                    let after = eng.item("i1").unwrap();
                    prop_assert_eq!(after.log.len(), before.log.len() + 1);
                    prop_assert_eq!(after.log.last(), Some(&ev));
                    prop_assert_eq!(ev.seq, before.last_seq() + 1);
                    if let Err(e) = check_moves(&inf, &before, after, &activity, fire) {
                        prop_assert!(false, "{}", e);
                    }
                }
                Err(_) => prop_assert_eq!(eng.item("i1").unwrap(), &before),
            }
            let live = eng.item("i1").unwrap();
            if let Err(e) = check_state(&inf, live) {
                prop_assert!(false, "{}", e);
            }
            let replayed = eng.replay(&live.log).unwrap();
            prop_assert_eq!(&replayed, live);
        }
    }
}

type Key = (BTreeMap<String, ActivityState>, BTreeMap<String, u32>);

/// Exhaustive walk of every state reachable through agent moves.
fn explore(g: WorkflowGraph) -> usize {
    let inf = info(&g);
    let (eng, _) = setup(g);
    let mut seen: BTreeSet<Key> = BTreeSet::new();
    let mut stack = vec![eng];
    let mut completed = 0;
    while let Some(eng) = stack.pop() {
        let item = eng.item("i1").unwrap().clone();
        if !seen.insert((item.states.clone(), item.marking.clone())) {
            continue;
        }
        check_state(&inf, &item).unwrap_or_else(|e| panic!("{e}\n{item:#?}"));
        if item.status == ItemStatus::Completed {
            completed += 1;
        }
        let mut moved = false;
        for activity in &inf.actors {
            let agent = if inf.roles[activity].is_empty() { "anyone" } else { inf.roles[activity].as_str() };
            for fire in [Fire::Start, Fire::Complete, Fire::Skip] {
                for guard in [true, false] {
                    let mut next = eng.clone();
                    if next.fire("i1", activity, fire, agent, outcome(activity, guard)).is_ok() {
                        moved = true;
                        let after = next.item("i1").unwrap();
                        check_moves(&inf, &item, after, activity, fire).unwrap_or_else(|e| panic!("{e} firing {activity} {fire:?} {guard}\nbefore {:?}\nafter {:?}\n{:#?}", item.states, after.states, eng.effective_graph("i1").unwrap().edges));
                        assert_eq!(&next.replay(&after.log).unwrap(), after);
                        stack.push(next);
                    }
                    if outcome(activity, guard).is_none() {
                        break;
                    }
                }
            }
        }
        assert!(moved || item.status == ItemStatus::Completed, "stuck: {item:#?}");
    }
    assert!(completed > 0, "completion unreachable");
    seen.len()
}

#[test]
fn exhaustive_small_graphs() {
    let mut total = 0;
    for seed in 0..150 {
        total += explore(graph(seed, 6));
    }
    assert!(total > 1000, "explored {total} states");
}

#[test]
fn rejected_moves_name_the_rule() {
    let g = WorkflowGraph::sequence(&["A", "B"]);
    let (mut eng, _) = setup(g);
    let err = eng.fire("i1", "B", Fire::Start, "x", None).unwrap_err();
    assert_eq!(err.code(), "ILLEGAL_TRANSITION");
    let err = eng.fire("i1", "start", Fire::Complete, "x", None).unwrap_err();
    assert_eq!(err.code(), "ILLEGAL_TRANSITION");
    let err = eng.fire("i1", "nope", Fire::Start, "x", None).unwrap_err();
    assert_eq!(err.code(), "NOT_FOUND");
    let err = eng.fire("ghost", "A", Fire::Start, "x", None).unwrap_err();
    assert_eq!(err.code(), "NOT_FOUND");
}
