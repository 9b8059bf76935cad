//! Reference evaluator for the expression language, written against the
//! language rules rather than the production evaluator, plus hand-checked
//! golden vectors.
#![allow(dead_code)]

use ddsflow_core::docmodel::{CmpOp, Doc, Expr, Func, Node, Path, Resolved};

#[derive(Debug, Clone, PartialEq)]
pub enum RefValue {
    Text(String),
    /// A string read out of a document; numeric/boolean contexts may
    /// reinterpret it.
    Raw(String),
    Number(f64),
    Truth(bool),
    Err,
}

fn decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix('-').unwrap_or(s);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return None;
    }
    s.parse().ok()
}

fn truth_word(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn lookup<'d>(doc: &'d Doc, p: &Path) -> Option<Resolved<'d>> {
    let segs = &p.segments;
    if segs.first().map(String::as_str) != Some(doc.root.name.as_str()) {
        return None;
    }
    let mut node: &Node = &doc.root;
    if segs.len() == 1 {
        return Some(Resolved::Node(node));
    }
    for s in &segs[1..segs.len() - 1] {
        node = node.children.iter().find(|c| &c.name == s)?;
    }
    let last = segs.last().unwrap();
    if let Some(v) = node.attrs.get(last) {
        return Some(Resolved::Attr(v));
    }
    node.children.iter().find(|c| &c.name == last).map(Resolved::Node)
}

fn text_of(v: &RefValue) -> Option<String> {
    Some(match v {
        RefValue::Text(s) | RefValue::Raw(s) => s.clone(),
        RefValue::Number(n) => format!("{n}"),
        RefValue::Truth(b) => b.to_string(),
        RefValue::Err => return None,
    })
}

fn as_truth(v: RefValue) -> Option<bool> {
    match v {
        RefValue::Truth(b) => Some(b),
        RefValue::Raw(s) => truth_word(&s),
        _ => None,
    }
}

fn order(op: CmpOp, o: std::cmp::Ordering) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Eq => o == Equal,
        CmpOp::Ne => o != Equal,
        CmpOp::Lt => o == Less,
        CmpOp::Le => o != Greater,
        CmpOp::Gt => o == Greater,
        CmpOp::Ge => o != Less,
    }
}

fn cmp(l: RefValue, op: CmpOp, r: RefValue) -> RefValue {
    use RefValue::*;
    let numeric = |a: f64, b: f64| a.partial_cmp(&b).map_or(Err, |o| Truth(order(op, o)));
    let equality = |a: bool, b: bool| match op {
        CmpOp::Eq => Truth(a == b),
        CmpOp::Ne => Truth(a != b),
        _ => Err,
    };
    match (l, r) {
        (Err, _) | (_, Err) => Err,
        (Number(a), Number(b)) => numeric(a, b),
        (Raw(a), Raw(b)) => match (decimal(&a), decimal(&b)) {
            (Some(x), Some(y)) => numeric(x, y),
            _ => Truth(order(op, a.cmp(&b))),
        },
        (Text(a) | Raw(a), Text(b) | Raw(b)) => Truth(order(op, a.cmp(&b))),
        (Raw(a), Number(b)) => decimal(&a).map_or(Err, |x| numeric(x, b)),
        (Number(a), Raw(b)) => decimal(&b).map_or(Err, |y| numeric(a, y)),
        (Truth(a), Truth(b)) => equality(a, b),
        (Raw(a), Truth(b)) => truth_word(&a).map_or(Err, |x| equality(x, b)),
        (Truth(a), Raw(b)) => truth_word(&b).map_or(Err, |y| equality(a, y)),
        _ => Err,
    }
}

pub fn reference_eval(e: &Expr, doc: &Doc) -> RefValue {
    use RefValue::*;
    match e {
        Expr::Path(p) => match lookup(doc, p) {
            Some(Resolved::Attr(s)) => Raw(s.to_string()),
            Some(Resolved::Node(n)) => n.text.clone().map_or(Err, Raw),
            None => Err,
        },
        Expr::Str(s) => Text(s.clone()),
        Expr::Num(n) => Number(*n),
        Expr::Bool(b) => Truth(*b),
        Expr::Cmp(l, op, r) => cmp(reference_eval(l, doc), *op, reference_eval(r, doc)),
        Expr::And(l, r) | Expr::Or(l, r) => {
            let a = as_truth(reference_eval(l, doc));
            let b = as_truth(reference_eval(r, doc));
            match (a, b, e) {
                (Some(a), Some(b), Expr::And(..)) => Truth(a && b),
                (Some(a), Some(b), _) => Truth(a || b),
                _ => Err,
            }
        }
        Expr::Not(x) => as_truth(reference_eval(x, doc)).map_or(Err, |b| Truth(!b)),
        Expr::Call(Func::Exists, args) => match args.as_slice() {
            [Expr::Path(p)] => Truth(lookup(doc, p).is_some()),
            _ => Err,
        },
        Expr::Call(Func::Concat, args) => {
            let mut s = String::new();
            for a in args {
                match text_of(&reference_eval(a, doc)) {
                    Some(t) => s.push_str(&t),
                    None => return Err,
                }
            }
            Text(s)
        }
        Expr::Call(Func::Num, args) => match args.as_slice() {
            [a] => match reference_eval(a, doc) {
                Number(n) => Number(n),
                Text(s) | Raw(s) => decimal(&s).map_or(Err, Number),
                _ => Err,
            },
            _ => Err,
        },
        Expr::Call(Func::Str, args) => match args.as_slice() {
            [a] => text_of(&reference_eval(a, doc)).map_or(Err, Text),
            _ => Err,
        },
    }
}

/// Document the golden vectors are evaluated against.
pub fn golden_doc() -> Doc {
    Doc::from_root(
        Node::new("record")
            .with_attr("qty", "3")
            .with_attr("price", "12.50")
            .with_attr("name", "bolt")
            .with_attr("flag", "true")
            .with_attr("neg", "-4")
            .with_attr("code", "007")
            .with_attr("empty", "")
            .with_attr("big", "100")
            .with_child(Node::new("note").with_text("hi"))
            .with_child(Node::new("sub").with_attr("x", "1")),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum Want {
    B(bool),
    N(f64),
    S(&'static str),
    E,
}

/// Hand-evaluated cases: (expression, expected value on `golden_doc`).
pub const GOLDEN: &[(&str, Want)] = &[
    ("$record.qty > 2", Want::B(true)),
    ("$record.qty == 3", Want::B(true)),
    ("$record.qty == \"3\"", Want::B(true)),
    ("$record.qty != 3", Want::B(false)),
    ("$record.qty >= 3 and $record.qty <= 3", Want::B(true)),
    ("$record.price > 12", Want::B(true)),
    ("$record.price == 12.5", Want::B(true)),
    ("$record.price == \"12.5\"", Want::B(false)),
    ("$record.name == \"bolt\"", Want::B(true)),
    ("$record.name > 1", Want::E),
    ("$record.name < \"c\"", Want::B(true)),
    ("1 < \"a\"", Want::E),
    ("\"a\" < \"b\"", Want::B(true)),
    ("\"2\" > \"10\"", Want::B(true)),
    ("2 > 10", Want::B(false)),
    ("true == true", Want::B(true)),
    ("true < false", Want::E),
    ("1 == true", Want::E),
    ("$record.flag == true", Want::B(true)),
    ("$record.flag == \"true\"", Want::B(true)),
    ("$record.flag and true", Want::B(true)),
    ("$record.name and true", Want::E),
    ("not $record.flag", Want::B(false)),
    ("$record.missing == 1", Want::E),
    ("exists($record.missing)", Want::B(false)),
    ("exists($record.qty)", Want::B(true)),
    ("exists($record.note)", Want::B(true)),
    ("exists($other.qty)", Want::B(false)),
    ("$record.note == \"hi\"", Want::B(true)),
    ("$record.sub == 1", Want::E),
    ("$record.sub.x == 1", Want::B(true)),
    ("$record.code == 7", Want::B(true)),
    ("$record.code > $record.qty", Want::B(true)),
    ("$record.big > $record.qty", Want::B(true)),
    ("$record.name > $record.qty", Want::B(true)),
    ("$record.neg < 0", Want::B(true)),
    ("-1.5 < 0", Want::B(true)),
    ("$record.empty == \"\"", Want::B(true)),
    ("$record.empty == 0", Want::E),
    ("concat(\"a\", \"b\", \"c\")", Want::S("abc")),
    ("concat($record.name, \"-\", $record.qty)", Want::S("bolt-3")),
    ("concat(\"x\", 1.5)", Want::S("x1.5")),
    ("concat(\"x\", $record.missing)", Want::E),
    ("concat()", Want::S("")),
    ("num($record.price)", Want::N(12.5)),
    ("num(\"abc\")", Want::E),
    ("num(true)", Want::E),
    ("num($record.qty) == 3", Want::B(true)),
    ("str(42)", Want::S("42")),
    ("str(true)", Want::S("true")),
    ("str(num(\"3.0\"))", Want::S("3")),
    ("str($record.qty) == 3", Want::E),
    ("false and $record.missing == 1", Want::E),
    ("true or 1 < \"a\"", Want::E),
    ("not 1 < 2", Want::B(false)),
    ("not (1 < 2) or true", Want::B(true)),
];

pub fn matches_want(v: &RefValue, w: &Want) -> bool {
    match (v, w) {
        (RefValue::Truth(a), Want::B(b)) => a == b,
        (RefValue::Number(a), Want::N(b)) => a == b,
        (RefValue::Text(a) | RefValue::Raw(a), Want::S(b)) => a == b,
        (RefValue::Err, Want::E) => true,
        _ => false,
    }
}

/// Production value in reference terms (document strings and literal
/// strings are both plain strings once evaluation finishes).
pub fn from_value(v: &ddsflow_core::docmodel::Value) -> RefValue {
    use ddsflow_core::docmodel::Value;
    match v {
        Value::Str(s) => RefValue::Text(s.clone()),
        Value::Num(n) => RefValue::Number(*n),
        Value::Bool(b) => RefValue::Truth(*b),
        Value::Error(_) => RefValue::Err,
    }
}

/// Compare ignoring the raw/text distinction.
pub fn same(a: &RefValue, b: &RefValue) -> bool {
    match (a, b) {
        (RefValue::Text(x) | RefValue::Raw(x), RefValue::Text(y) | RefValue::Raw(y)) => x == y,
        _ => a == b,
    }
}
