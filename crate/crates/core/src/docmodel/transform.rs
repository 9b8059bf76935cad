use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::doc::{Doc, Path};
use super::expr::{eval_expr, Expr, Value};
use crate::error::{Error, Result};

/// Root element name of every transformation output.
pub const OUTPUT_ROOT: &str = "out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRule {
    pub target: Path,
    pub expr: Expr,
}

impl TransformRule {
    pub fn new(target: &str, expr: &str) -> Result<Self> {
        let rule = TransformRule {
            target: Path::parse(target)?,
            expr: super::expr::parse_expr(expr)?,
        };
        rule.check().map_err(Error::Invalid)?;
        Ok(rule)
    }

    pub(crate) fn check(&self) -> core::result::Result<(), String> {
        if self.target.root() != OUTPUT_ROOT || self.target.segments.len() < 2 {
            return Err(alloc::format!("transform target {} must be ${OUTPUT_ROOT}.<attr>", self.target));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformError {
    pub rule: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformOutput {
    pub doc: Doc,
    pub errors: Vec<TransformError>,
}

/// Map `source` through `rules`. Every rule reads the source only; results
/// that evaluate to an error are reported and left unwritten.
pub fn apply_transform(rules: &[TransformRule], source: &Doc) -> TransformOutput {
    let mut doc = Doc::new(OUTPUT_ROOT);
    let mut errors = Vec::new();
    for (i, rule) in rules.iter().enumerate() {
        let outcome = match eval_expr(&rule.expr, source) {
            Value::Error(e) => Err(e),
            v => {
                let text = v.render().unwrap_or_default();
                rule.check().and_then(|()| doc.set(&rule.target, text).map_err(|e| alloc::format!("{e}")))
            }
        };
        if let Err(detail) = outcome {
            errors.push(TransformError { rule: i, detail });
        }
    }
    TransformOutput { doc, errors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docmodel::doc::{serialize_doc, Node};

    fn rec() -> Doc {
        Doc::from_root(Node::new("record").with_attr("qty", "3").with_attr("id", "42"))
    }

    #[test]
    fn empty_rules_give_bare_root() {
        let out = apply_transform(&[], &rec());
        assert_eq!(out.doc, Doc::new("out"));
        assert!(out.errors.is_empty());
    }

    #[test]
    fn numeric_mapping() {
        let out = apply_transform(&[TransformRule::new("$out.total", "num($record.qty)").unwrap()], &rec());
        assert_eq!(out.doc.root.attrs["total"], "3");
    }

    #[test]
    fn identity_projection() {
        let rules = [
            TransformRule::new("$out.id", "$record.id").unwrap(),
            TransformRule::new("$out.qty", "$record.qty").unwrap(),
        ];
        let out = apply_transform(&rules, &rec());
        assert_eq!(out.doc.root.attrs, rec().root.attrs);
    }

    #[test]
    fn errors_reported_not_written() {
        let rules = [
            TransformRule::new("$out.a", "num($record.id)").unwrap(),
            TransformRule::new("$out.b", "num($record.nope)").unwrap(),
            TransformRule::new("$out.c", "concat($record.id, \"-x\")").unwrap(),
        ];
        let out = apply_transform(&rules, &rec());
        assert_eq!(serialize_doc(&out.doc), r#"{"attrs":{"a":"42","c":"42-x"},"children":[],"name":"out"}"#);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].rule, 1);
    }

    #[test]
    fn target_must_be_under_out() {
        assert!(TransformRule::new("$record.x", "1").is_err());
        assert!(TransformRule::new("$out", "1").is_err());
    }
}
