//! Moving live items between description versions, per-item changes, and
//! the exhaustive execution enumerator used to check both.

mod delta;
mod migrate;
mod oracle;

pub use delta::{apply_delta, DeltaOp};
pub use migrate::{MigrationReport, Reason, Verdict};
pub use oracle::{enumerate_executions, enumerate_executions_with, MAX_EVENTS_LIMIT};
