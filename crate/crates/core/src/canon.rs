//! Deterministic text encoding shared by description files, documents,
//! messages and store records.
//!
//! The encoding is a restricted JSON subset: compact output, object keys in
//! sorted order, UTF-8, and no non-finite numbers. Routing every value
//! through [`serde_json::Value`] (whose map is a `BTreeMap` here) is what
//! sorts the keys, so struct field order never leaks into the bytes.

use alloc::string::String;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Encode `value` canonically.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let tree = serde_json::to_value(value).map_err(|e| Error::Invalid(alloc::format!("{e}")))?;
    check_finite(&tree)?;
    serde_json::to_string(&tree).map_err(|e| Error::Invalid(alloc::format!("{e}")))
}

/// Decode canonical (or any JSON-subset) text, reporting position on failure.
pub fn from_canonical<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.column(), alloc::format!("{e}")))
}

fn check_finite(v: &Value) -> Result<()> {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(f) if !f.is_finite() => Err(Error::Invalid("non-finite number".into())),
            _ => Ok(()),
        },
        Value::Array(items) => items.iter().try_for_each(check_finite),
        Value::Object(map) => map.values().try_for_each(check_finite),
        _ => Ok(()),
    }
}
