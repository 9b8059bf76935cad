//! Canonical documents, outcome schemas, and the expression language used
//! for guards, routing predicates and transformations.

mod doc;
mod expr;
mod schema;
mod transform;

pub use doc::{coerce_bool, coerce_number, is_decimal, parse_doc, serialize_doc, Doc, Format, Node, Path, Resolved};
pub use expr::{eval_expr, format_number, parse_expr, print_expr, CmpOp, Expr, Func, Value};
pub use schema::{validate_outcome, FieldType, OutcomeSchema, RequiredField};
pub use transform::{apply_transform, TransformError, TransformOutput, TransformRule, OUTPUT_ROOT};
