#![allow(dead_code)]

pub mod refexpr;

use ddsflow_core::metamodel::{ActivityDef, Gate, Transition, WorkflowGraph};
use rand::Rng;

/// Block-structured process shape. Every block has one entry and one exit
/// node, so any composition is well formed.
#[derive(Debug, Clone)]
pub enum Block {
    Task,
    Seq(Box<Block>, Box<Block>),
    And(Box<Block>, Box<Block>),
    Xor(Box<Block>, Box<Block>),
    Loop(Box<Block>),
    Nested(Box<Block>),
}

impl Block {
    /// Activity nodes the block expands to (nested start/end excluded).
    pub fn size(&self) -> usize {
        match self {
            Block::Task => 1,
            Block::Seq(a, b) => a.size() + b.size(),
            Block::And(a, b) | Block::Xor(a, b) => a.size() + b.size() + 2,
            Block::Loop(a) => a.size() + 2,
            Block::Nested(a) => a.size() + 1,
        }
    }
}

pub fn random_block<R: Rng>(rng: &mut R, budget: usize) -> Block {
    if budget <= 1 {
        return Block::Task;
    }
    let pair = |rng: &mut R, total: usize| {
        let a = random_block(rng, (total / 2).max(1));
        let b = random_block(rng, total.saturating_sub(a.size()).max(1));
        (Box::new(a), Box::new(b))
    };
    match rng.random_range(0..10) {
        3 | 4 => {
            let (a, b) = pair(rng, budget);
            Block::Seq(a, b)
        }
        5 if budget >= 4 => {
            let (a, b) = pair(rng, budget - 2);
            Block::And(a, b)
        }
        6 | 7 if budget >= 4 => {
            let (a, b) = pair(rng, budget - 2);
            Block::Xor(a, b)
        }
        8 if budget >= 3 => Block::Loop(Box::new(random_block(rng, budget - 2))),
        9 if budget >= 2 => Block::Nested(Box::new(random_block(rng, budget - 1))),
        _ => Block::Task,
    }
}

/// Guards used on generated XOR edges read `$outcome.<id>`; an outcome
/// carrying that attribute set to "1" selects the guarded branch.
pub fn guard_for(id: &str) -> String {
    format!("$outcome.{id} == 1")
}

struct Builder {
    next: usize,
    stack: Vec<WorkflowGraph>,
}

impl Builder {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next += 1;
        format!("{prefix}{}", self.next)
    }

    fn g(&mut self) -> &mut WorkflowGraph {
        self.stack.last_mut().unwrap()
    }

    fn task(&mut self, prefix: &str) -> String {
        let id = self.fresh(prefix);
        self.g().nodes.push(ActivityDef::elementary(&id));
        id
    }

    fn edge(&mut self, t: Transition) {
        self.g().edges.push(t);
    }

    fn gates(&mut self, id: &str, split: Option<Gate>, join: Option<Gate>) {
        let n = self.g().node_mut(id).unwrap();
        if let Some(s) = split {
            n.split = s;
        }
        if let Some(j) = join {
            n.join = j;
        }
    }

    /// Returns (entry, exit).
    fn build(&mut self, b: &Block) -> (String, String) {
        match b {
            Block::Task => {
                let id = self.task("T");
                (id.clone(), id)
            }
            Block::Seq(x, y) => {
                let (x_in, x_out) = self.build(x);
                let (y_in, y_out) = self.build(y);
                self.edge(Transition::new(&x_out, &y_in));
                (x_in, y_out)
            }
            Block::And(x, y) | Block::Xor(x, y) => {
                let and = matches!(b, Block::And(..));
                let gate = if and { Gate::And } else { Gate::Xor };
                let s = self.task(if and { "P" } else { "X" });
                let (x_in, x_out) = self.build(x);
                let (y_in, y_out) = self.build(y);
                let j = self.task("J");
                self.gates(&s, Some(gate), None);
                self.gates(&j, None, Some(gate));
                if and {
                    self.edge(Transition::new(&s, &x_in));
                    self.edge(Transition::new(&s, &y_in));
                } else {
                    self.edge(Transition::guarded(&s, &x_in, &guard_for(&s)));
                    self.edge(Transition::default_edge(&s, &y_in));
                }
                self.edge(Transition::new(&x_out, &j));
                self.edge(Transition::new(&y_out, &j));
                (s, j)
            }
            Block::Loop(x) => {
                let head = self.task("H");
                let (x_in, x_out) = self.build(x);
                let tail = self.task("L");
                self.gates(&head, None, Some(Gate::Xor));
                self.gates(&tail, Some(Gate::Xor), None);
                self.edge(Transition::new(&head, &x_in));
                self.edge(Transition::new(&x_out, &tail));
                self.edge(Transition::guarded(&tail, &head, &guard_for(&tail)));
                (head, tail)
            }
            Block::Nested(x) => {
                let k = self.fresh("K");
                let (s, e) = (format!("{k}s"), format!("{k}e"));
                let mut sub = WorkflowGraph::bare();
                sub.nodes[0].id = s.clone();
                sub.nodes[1].id = e.clone();
                sub.start = s.clone();
                sub.end = e.clone();
                self.stack.push(sub);
                let (x_in, x_out) = self.build(x);
                self.edge(Transition::new(&s, &x_in));
                self.edge(Transition::new(&x_out, &e));
                let sub = self.stack.pop().unwrap();
                self.g().nodes.push(ActivityDef::composite(&k, sub));
                (k.clone(), k)
            }
        }
    }
}

/// Expand `b` between `start` and `end`. The loop tail's default edge is
/// added by the caller context: a loop exit is whatever follows it.
pub fn graph_of(b: &Block) -> WorkflowGraph {
    let mut builder = Builder {
        next: 0,
        stack: vec![WorkflowGraph::bare()],
    };
    let (first, last) = builder.build(b);
    builder.edge(Transition::new("start", &first));
    builder.edge(Transition::new(&last, "end"));
    let mut g = builder.stack.pop().unwrap();
    fix_loop_exits(&mut g);
    g
}

/// A loop tail has a guarded back edge plus one forward edge; mark the
/// forward edge as the default.
fn fix_loop_exits(g: &mut WorkflowGraph) {
    let tails: Vec<String> = g
        .nodes
        .iter()
        .filter(|n| n.id.starts_with('L') && n.split == Gate::Xor)
        .map(|n| n.id.clone())
        .collect();
    for t in tails {
        for e in g.edges.iter_mut().filter(|e| e.from == t && e.guard.is_none()) {
            e.is_default = true;
        }
    }
    for n in g.nodes.iter_mut() {
        if let Some(sub) = n.subgraph.as_deref_mut() {
            fix_loop_exits(sub);
        }
    }
}

pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> WorkflowGraph {
    loop {
        let b = random_block(rng, max_nodes);
        if b.size() <= max_nodes {
            return graph_of(&b);
        }
    }
}

fn has_loop(b: &Block) -> bool {
    match b {
        Block::Task => false,
        Block::Loop(_) => true,
        Block::Seq(a, b) | Block::And(a, b) | Block::Xor(a, b) => has_loop(a) || has_loop(b),
        Block::Nested(a) => has_loop(a),
    }
}

/// Like [`random_graph`], but a graph contains a loop with probability
/// `loop_p` and is loop-free otherwise.
pub fn random_graph_with<R: Rng>(rng: &mut R, max_nodes: usize, loop_p: f64) -> WorkflowGraph {
    let want = rng.random_bool(loop_p);
    loop {
        let b = random_block(rng, max_nodes);
        if b.size() <= max_nodes && has_loop(&b) == want {
            return graph_of(&b);
        }
    }
}
