use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::canon;
use crate::error::{Error, Result};

/// One element of a [`Doc`]. Attribute values are stored as strings; typed
/// contexts coerce them on read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    #[serde(default, deserialize_with = "scalar_map")]
    pub attrs: BTreeMap<String, String>,
    #[serde(default)]
    pub children: Vec<Node>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl Node {
    pub fn new(name: impl Into<String>) -> Self {
        Node {
            name: name.into(),
            attrs: BTreeMap::new(),
            children: Vec::new(),
            text: None,
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attrs.insert(key.into(), value.into());
        self
    }

    pub fn with_child(mut self, child: Node) -> Self {
        self.children.push(child);
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn child(&self, name: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.name == name)
    }

    fn child_mut_or_insert(&mut self, name: &str) -> &mut Node {
        let idx = match self.children.iter().position(|c| c.name == name) {
            Some(i) => i,
            None => {
                self.children.push(Node::new(name));
                self.children.len() - 1
            }
        };
        &mut self.children[idx]
    }
}

/// Canonical hierarchical document used for outcomes, message payloads and
/// transformation output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Doc {
    pub root: Node,
}

/// Payload encodings understood by the format adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Format {
    Canonical,
    FlatRecord,
}

impl Format {
    pub fn tag(self) -> &'static str {
        match self {
            Format::Canonical => "canonical",
            Format::FlatRecord => "flat-record",
        }
    }

    pub fn from_tag(s: &str) -> Option<Format> {
        match s {
            "canonical" | "CANONICAL" => Some(Format::Canonical),
            "flat-record" | "flat" | "FLAT_RECORD" => Some(Format::FlatRecord),
            _ => None,
        }
    }
}

/// Where a path landed inside a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolved<'a> {
    Attr(&'a str),
    Node(&'a Node),
}

impl<'a> Resolved<'a> {
    /// Scalar reading: an attribute value or an element's text.
    pub fn scalar(self) -> Option<&'a str> {
        match self {
            Resolved::Attr(s) => Some(s),
            Resolved::Node(n) => n.text.as_deref(),
        }
    }
}

impl Doc {
    pub fn new(root_name: impl Into<String>) -> Self {
        Doc {
            root: Node::new(root_name),
        }
    }

    pub fn from_root(root: Node) -> Self {
        Doc { root }
    }

    /// `$root.a.b`: the first segment names the root; intermediate segments
    /// walk child elements; the last segment prefers an attribute and falls
    /// back to the first child element of that name.
    pub fn resolve(&self, path: &Path) -> Option<Resolved<'_>> {
        let (first, rest) = path.segments.split_first()?;
        if *first != self.root.name {
            return None;
        }
        let mut node = &self.root;
        for (i, seg) in rest.iter().enumerate() {
            if i + 1 == rest.len() {
                if let Some(v) = node.attrs.get(seg) {
                    return Some(Resolved::Attr(v));
                }
            }
            node = node.child(seg)?;
        }
        Some(Resolved::Node(node))
    }

    /// Write `value` as the attribute named by the last path segment,
    /// creating intermediate elements as needed.
    pub fn set(&mut self, path: &Path, value: String) -> Result<()> {
        let segs = &path.segments;
        if segs.len() < 2 {
            return Err(Error::Invalid(alloc::format!("path {path} has no attribute segment")));
        }
        if segs[0] != self.root.name {
            return Err(Error::Invalid(alloc::format!(
                "path {path} does not start at root ${}",
                self.root.name
            )));
        }
        let mut node = &mut self.root;
        for seg in &segs[1..segs.len() - 1] {
            node = node.child_mut_or_insert(seg);
        }
        node.attrs.insert(segs[segs.len() - 1].clone(), value);
        Ok(())
    }
}

impl fmt::Display for Doc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_doc(self))
    }
}

/// Dotted reference into a document, written `$root.seg.seg`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path {
    pub segments: Vec<String>,
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c)) && chars.all(is_ident_char)
}

impl Path {
    pub fn new<I, S>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() || !segments.iter().all(|s| is_ident(s)) {
            return Err(Error::Invalid(alloc::format!("bad path segments {segments:?}")));
        }
        Ok(Path { segments })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let body = text
            .strip_prefix('$')
            .ok_or_else(|| Error::parse(1, 1, alloc::format!("path must start with '$': {text}")))?;
        Path::new(body.split('.')).map_err(|_| Error::parse(1, 1, alloc::format!("bad path {text}")))
    }

    pub fn root(&self) -> &str {
        &self.segments[0]
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("$")?;
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            f.write_str(s)?;
        }
        Ok(())
    }
}

impl Serialize for Path {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Path::parse(&s).map_err(serde::de::Error::custom)
    }
}

fn scalar_map<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<BTreeMap<String, String>, D::Error> {
    let raw = BTreeMap::<String, serde_json::Value>::deserialize(d)?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(serde::de::Error::custom(alloc::format!(
                        "attribute {k} is not a scalar: {other}"
                    )))
                }
            };
            Ok((k, s))
        })
        .collect()
}

/// `-?[0-9]+(\.[0-9]+)?`, the only strings accepted in numeric contexts.
pub fn is_decimal(s: &str) -> bool {
    let body = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    digits(int) && frac.is_none_or(digits)
}

/// Numeric reading of a string under the decimal grammar.
pub fn coerce_number(s: &str) -> Option<f64> {
    if !is_decimal(s) {
        return None;
    }
    s.parse::<f64>().ok().filter(|f| f.is_finite())
}

pub fn coerce_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

pub fn parse_doc(text: &str, format: Format) -> Result<Doc> {
    match format {
        Format::Canonical => {
            let root: Node = canon::from_canonical(text)?;
            check_names(&root)?;
            Ok(Doc { root })
        }
        Format::FlatRecord => parse_flat(text),
    }
}

fn check_names(node: &Node) -> Result<()> {
    if node.name.is_empty() {
        return Err(Error::parse(1, 1, "element with empty name"));
    }
    node.children.iter().try_for_each(check_names)
}

fn parse_flat(text: &str) -> Result<Doc> {
    let mut root = Node::new("record");
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::parse(i + 1, line.len() + 1, "expected key=value"));
        };
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(Error::parse(i + 1, 1, alloc::format!("bad key {key:?}")));
        }
        if root.attrs.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::parse(i + 1, 1, alloc::format!("duplicate key {key}")));
        }
    }
    Ok(Doc { root })
}

pub fn serialize_doc(doc: &Doc) -> String {
    // Only strings, arrays and maps: canonical encoding cannot fail.
    canon::to_canonical(&doc.root).expect("document encodes")
}
