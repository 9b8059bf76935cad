use alloc::collections::BTreeSet;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::doc::{coerce_bool, coerce_number, Doc, Path, Resolved};
use crate::metamodel::{Rule, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FieldType {
    String,
    Number,
    Boolean,
    Node,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredField {
    pub path: Path,
    #[serde(rename = "type")]
    pub ty: FieldType,
}

/// Data dictionary entry for an activity outcome: the paths a completing
/// document must carry and their types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSchema {
    #[serde(default)]
    pub required: Vec<RequiredField>,
}

impl OutcomeSchema {
    pub fn require(mut self, path: &str, ty: FieldType) -> Self {
        self.required.push(RequiredField {
            path: Path::parse(path).expect("schema path"),
            ty,
        });
        self
    }

    /// Meta-schema check for OUTCOME_SCHEMA bodies.
    pub fn check(&self) -> Vec<Violation> {
        let mut seen = BTreeSet::new();
        self.required
            .iter()
            .filter(|f| !seen.insert(&f.path))
            .map(|f| Violation::new(Rule::DuplicatePath, f.path.to_string()))
            .collect()
    }
}

fn satisfies(found: Resolved<'_>, ty: FieldType) -> bool {
    match ty {
        FieldType::Node => matches!(found, Resolved::Node(_)),
        FieldType::String => found.scalar().is_some(),
        FieldType::Number => found.scalar().and_then(coerce_number).is_some(),
        FieldType::Boolean => found.scalar().and_then(coerce_bool).is_some(),
    }
}

pub fn validate_outcome(doc: &Doc, schema: &OutcomeSchema) -> Vec<Violation> {
    schema
        .required
        .iter()
        .filter_map(|f| match doc.resolve(&f.path) {
            None => Some(Violation::new(Rule::Missing, f.path.to_string())),
            Some(found) if !satisfies(found, f.ty) => Some(Violation::new(Rule::TypeMismatch, f.path.to_string())),
            Some(_) => None,
        })
        .collect()
}
