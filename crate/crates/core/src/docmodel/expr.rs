//! Guard, routing and mapping expressions.
//!
//! ```text
//! expr := or ; or := and ("or" and)* ; and := not ("and" not)* ;
//! not  := "not" not | cmp ; cmp := term (cmpop term)? ;
//! term := path | literal | func | "(" expr ")" ;
//! func := ident "(" [expr ("," expr)*] ")" ;
//! path := "$" ident ("." ident)* ;
//! literal := number | dquoted-string | "true" | "false"
//! ```
//!
//! Evaluation is total: ill-typed operations produce [`Value::Error`].

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use super::doc::{coerce_bool, coerce_number, is_ident_char, is_ident_start, Doc, Path};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exists,
    Concat,
    Num,
    Str,
}

impl Func {
    pub const ALL: [Func; 4] = [Func::Exists, Func::Concat, Func::Num, Func::Str];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exists => "exists",
            Func::Concat => "concat",
            Func::Num => "num",
            Func::Str => "str",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == s)
    }

    fn arity_ok(self, n: usize) -> bool {
        match self {
            Func::Concat => true,
            _ => n == 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Path(Path),
    Str(String),
    Num(f64),
    Bool(bool),
    Cmp(Box<Expr>, CmpOp, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Result of evaluation. `Error` carries a reason and poisons every
/// operation that consumes it.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Num(f64),
    Bool(bool),
    Error(String),
}

impl Value {
    pub fn is_error(&self) -> bool {
        matches!(self, Value::Error(_))
    }

    /// Text written into documents by transformations.
    pub fn render(&self) -> Option<String> {
        match self {
            Value::Str(s) => Some(s.clone()),
            Value::Num(n) => Some(format_number(*n)),
            Value::Bool(b) => Some(b.to_string()),
            Value::Error(_) => None,
        }
    }
}

pub fn format_number(n: f64) -> String {
    alloc::format!("{n}")
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Path(Path),
    Num(f64),
    Str(String),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Op(CmpOp),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col, msg)
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(is_ident_char) {
            self.bump();
        }
        self.src[start..self.pos].to_string()
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>> {
        let mut out = Vec::new();
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else { break };
            let tok = match c {
                '(' | ')' | ',' => {
                    self.bump();
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Comma,
                    }
                }
                '=' | '!' | '<' | '>' => {
                    self.bump();
                    let eq = self.peek() == Some('=');
                    if eq {
                        self.bump();
                    }
                    Tok::Op(match (c, eq) {
                        ('=', true) => CmpOp::Eq,
                        ('!', true) => CmpOp::Ne,
                        ('<', false) => CmpOp::Lt,
                        ('<', true) => CmpOp::Le,
                        ('>', false) => CmpOp::Gt,
                        ('>', true) => CmpOp::Ge,
                        _ => return Err(Error::parse(line, col, alloc::format!("unexpected '{c}'"))),
                    })
                }
                '$' => {
                    self.bump();
                    let mut segs = Vec::new();
                    loop {
                        if !self.peek().is_some_and(is_ident_start) {
                            return Err(self.err("expected identifier in path"));
                        }
                        segs.push(self.ident());
                        if self.peek() == Some('.') {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Path(Path { segments: segs })
                }
                '"' => {
                    self.bump();
                    let mut s = String::new();
                    loop {
                        match self.bump() {
                            None => return Err(Error::parse(line, col, "unterminated string")),
                            Some('"') => break,
                            Some('\\') => match self.bump() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                _ => return Err(self.err("bad escape")),
                            },
                            Some(ch) => s.push(ch),
                        }
                    }
                    Tok::Str(s)
                }
                c if c == '-' || c.is_ascii_digit() => {
                    let start = self.pos;
                    if c == '-' {
                        self.bump();
                    }
                    let digits = |lx: &mut Self| {
                        let s = lx.pos;
                        while lx.peek().is_some_and(|d| d.is_ascii_digit()) {
                            lx.bump();
                        }
                        lx.pos > s
                    };
                    if !digits(&mut self) {
                        return Err(Error::parse(line, col, "expected digits"));
                    }
                    if self.peek() == Some('.') {
                        self.bump();
                        if !digits(&mut self) {
                            return Err(self.err("expected digits after '.'"));
                        }
                    }
                    let text = &self.src[start..self.pos];
                    match text.parse::<f64>() {
                        Ok(n) if n.is_finite() => Tok::Num(n),
                        _ => return Err(Error::parse(line, col, "number out of range")),
                    }
                }
                c if is_ident_start(c) => Tok::Ident(self.ident()),
                other => return Err(Error::parse(line, col, alloc::format!("unexpected '{other}'"))),
            };
            out.push((tok, line, col));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------- parser

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    at: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.0)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.at).map(|t| (t.1, t.2)).unwrap_or(self.end)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (l, c) = self.here();
        Error::parse(l, c, msg)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|t| t.0.clone());
        self.at += 1;
        t
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn or(&mut self) -> Result<Expr> {
        let mut lhs = self.and()?;
        while self.keyword("or") {
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr> {
        let mut lhs = self.not()?;
        while self.keyword("and") {
            lhs = Expr::And(Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr> {
        if self.keyword("not") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr> {
        let lhs = self.term()?;
        if let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            self.at += 1;
            let rhs = self.term()?;
            return Ok(Expr::Cmp(Box::new(lhs), op, Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let (line, col) = self.here();
        match self.next() {
            Some(Tok::Path(p)) => Ok(Expr::Path(p)),
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::LParen) => {
                let e = self.or()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::parse(line, col, "unbalanced '('")),
                }
            }
            Some(Tok::Ident(id)) => match id.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "and" | "or" | "not" => Err(Error::parse(line, col, alloc::format!("unexpected keyword {id}"))),
                _ => {
                    let func = Func::from_name(&id)
                        .ok_or_else(|| Error::parse(line, col, alloc::format!("unknown function {id}")))?;
                    if self.next() != Some(Tok::LParen) {
                        return Err(self.err("expected '(' after function name"));
                    }
                    let mut args = Vec::new();
                    if self.peek() == Some(&Tok::RParen) {
                        self.at += 1;
                    } else {
                        loop {
                            args.push(self.or()?);
                            match self.next() {
                                Some(Tok::Comma) => continue,
                                Some(Tok::RParen) => break,
                                _ => return Err(Error::parse(line, col, "unbalanced call")),
                            }
                        }
                    }
                    if !func.arity_ok(args.len()) {
                        return Err(Error::parse(
                            line,
                            col,
                            alloc::format!("{} takes 1 argument, got {}", func.name(), args.len()),
                        ));
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            Some(other) => Err(Error::parse(line, col, alloc::format!("unexpected token {other:?}"))),
            None => Err(Error::parse(line, col, "unexpected end of expression")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr> {
    let lexer = Lexer {
        src: text,
        pos: 0,
        line: 1,
        col: 1,
    };
    let end = {
        let line = text.matches('\n').count() + 1;
        let col = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    };
    let mut p = Parser {
        toks: lexer.tokens()?,
        at: 0,
        end,
    };
    let e = p.or()?;
    if p.at < p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------- printer

const LVL_OR: u8 = 1;
const LVL_AND: u8 = 2;
const LVL_NOT: u8 = 3;
const LVL_TERM: u8 = 5;

impl Expr {
    fn level(&self) -> u8 {
        match self {
            Expr::Or(..) => LVL_OR,
            Expr::And(..) => LVL_AND,
            Expr::Not(_) => LVL_NOT,
            Expr::Cmp(..) => 4,
            _ => LVL_TERM,
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.level() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expr::Path(p) => write!(f, "{p}")?,
            Expr::Num(n) => f.write_str(&format_number(*n))?,
            Expr::Bool(b) => write!(f, "{b}")?,
            Expr::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")?;
            }
            Expr::Cmp(l, op, r) => {
                l.write(f, LVL_TERM)?;
                write!(f, " {} ", op.symbol())?;
                r.write(f, LVL_TERM)?;
            }
            Expr::And(l, r) => {
                l.write(f, LVL_AND)?;
                f.write_str(" and ")?;
                r.write(f, LVL_NOT)?;
            }
            Expr::Or(l, r) => {
                l.write(f, LVL_OR)?;
                f.write_str(" or ")?;
                r.write(f, LVL_AND)?;
            }
            Expr::Not(x) => {
                f.write_str("not ")?;
                x.write(f, LVL_NOT)?;
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    a.write(f, LVL_OR)?;
                }
                f.write_str(")")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, LVL_OR)
    }
}

pub fn print_expr(e: &Expr) -> String {
    e.to_string()
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_expr(&s).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------- evaluator

/// Operand during evaluation. Strings read out of a document are untyped
/// until a numeric or boolean context coerces them.
enum Operand {
    Str(String),
    Untyped(String),
    Num(f64),
    Bool(bool),
    Error(String),
}

impl Operand {
    fn into_value(self) -> Value {
        match self {
            Operand::Str(s) | Operand::Untyped(s) => Value::Str(s),
            Operand::Num(n) => Value::Num(n),
            Operand::Bool(b) => Value::Bool(b),
            Operand::Error(e) => Value::Error(e),
        }
    }

    fn text(&self) -> Option<String> {
        match self {
            Operand::Str(s) | Operand::Untyped(s) => Some(s.clone()),
            Operand::Num(n) => Some(format_number(*n)),
            Operand::Bool(b) => Some(b.to_string()),
            Operand::Error(_) => None,
        }
    }

    fn truth(self) -> core::result::Result<bool, String> {
        match self {
            Operand::Bool(b) => Ok(b),
            Operand::Untyped(s) => coerce_bool(&s).ok_or_else(|| alloc::format!("{s:?} is not a boolean")),
            Operand::Error(e) => Err(e),
            Operand::Str(s) => Err(alloc::format!("string {s:?} in boolean context")),
            Operand::Num(n) => Err(alloc::format!("number {} in boolean context", format_number(n))),
        }
    }
}

fn compare(l: Operand, op: CmpOp, r: Operand) -> Operand {
    use Operand::*;
    let num_ord = |a: f64, b: f64| a.partial_cmp(&b);
    let ord = match (l, r) {
        (Error(e), _) | (_, Error(e)) => return Error(e),
        (Num(a), Num(b)) => num_ord(a, b),
        (Untyped(a), Untyped(b)) => match (coerce_number(&a), coerce_number(&b)) {
            (Some(x), Some(y)) => num_ord(x, y),
            _ => Some(a.cmp(&b)),
        },
        (Str(a) | Untyped(a), Str(b) | Untyped(b)) => Some(a.cmp(&b)),
        (Untyped(s), Num(n)) => match coerce_number(&s) {
            Some(x) => num_ord(x, n),
            None => return Error(alloc::format!("{s:?} is not numeric")),
        },
        (Num(n), Untyped(s)) => match coerce_number(&s) {
            Some(y) => num_ord(n, y),
            None => return Error(alloc::format!("{s:?} is not numeric")),
        },
        (Bool(a), Bool(b)) => return bool_eq(a, op, b),
        (Untyped(s), Bool(b)) => match coerce_bool(&s) {
            Some(a) => return bool_eq(a, op, b),
            None => return Error(alloc::format!("{s:?} is not a boolean")),
        },
        (Bool(a), Untyped(s)) => match coerce_bool(&s) {
            Some(b) => return bool_eq(a, op, b),
            None => return Error(alloc::format!("{s:?} is not a boolean")),
        },
        _ => return Error(alloc::format!("cannot compare unlike types with {}", op.symbol())),
    };
    match ord {
        Some(o) => Bool(op.holds(o)),
        None => Error("incomparable numbers".into()),
    }
}

fn bool_eq(a: bool, op: CmpOp, b: bool) -> Operand {
    match op {
        CmpOp::Eq => Operand::Bool(a == b),
        CmpOp::Ne => Operand::Bool(a != b),
        _ => Operand::Error(alloc::format!("booleans are unordered ({})", op.symbol())),
    }
}

fn eval(e: &Expr, doc: &Doc) -> Operand {
    match e {
        Expr::Path(p) => match doc.resolve(p) {
            Some(r) => match r.scalar() {
                Some(s) => Operand::Untyped(s.to_string()),
                None => Operand::Error(alloc::format!("{p} is an element without text")),
            },
            None => Operand::Error(alloc::format!("missing path {p}")),
        },
        Expr::Str(s) => Operand::Str(s.clone()),
        Expr::Num(n) => Operand::Num(*n),
        Expr::Bool(b) => Operand::Bool(*b),
        Expr::Cmp(l, op, r) => {
            let l = eval(l, doc);
            let r = eval(r, doc);
            compare(l, *op, r)
        }
        Expr::And(l, r) | Expr::Or(l, r) => {
            let l = eval(l, doc).truth();
            let r = eval(r, doc).truth();
            match (l, r) {
                (Err(e), _) | (_, Err(e)) => Operand::Error(e),
                (Ok(a), Ok(b)) => Operand::Bool(if matches!(e, Expr::And(..)) { a && b } else { a || b }),
            }
        }
        Expr::Not(x) => match eval(x, doc).truth() {
            Ok(b) => Operand::Bool(!b),
            Err(e) => Operand::Error(e),
        },
        Expr::Call(func, args) => call(*func, args, doc),
    }
}

fn call(func: Func, args: &[Expr], doc: &Doc) -> Operand {
    match func {
        Func::Exists => match args {
            [Expr::Path(p)] => Operand::Bool(doc.resolve(p).is_some()),
            _ => Operand::Error("exists() takes a path".into()),
        },
        Func::Concat => {
            let mut out = String::new();
            for a in args {
                match eval(a, doc) {
                    Operand::Error(e) => return Operand::Error(e),
                    v => out.push_str(&v.text().unwrap_or_default()),
                }
            }
            Operand::Str(out)
        }
        Func::Num => match args.first().map(|a| eval(a, doc)) {
            Some(Operand::Num(n)) => Operand::Num(n),
            Some(Operand::Str(s) | Operand::Untyped(s)) => match coerce_number(&s) {
                Some(n) => Operand::Num(n),
                None => Operand::Error(alloc::format!("num({s:?}): not a decimal")),
            },
            Some(Operand::Bool(_)) => Operand::Error("num() of boolean".into()),
            Some(Operand::Error(e)) => Operand::Error(e),
            None => Operand::Error("num() takes one argument".into()),
        },
        Func::Str => match args.first().map(|a| eval(a, doc)) {
            Some(Operand::Error(e)) => Operand::Error(e),
            Some(v) => Operand::Str(v.text().unwrap_or_default()),
            None => Operand::Error("str() takes one argument".into()),
        },
    }
}

pub fn eval_expr(expr: &Expr, doc: &Doc) -> Value {
    eval(expr, doc).into_value()
}
