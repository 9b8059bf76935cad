use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::evolution::MigrationReport;
use crate::metamodel::{Kind, Violation};

/// Domain errors raised by the engine. Every variant maps onto a stable
/// upper-case code (see [`Error::code`]) that the CLI and transcripts print.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {}", join_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("kind mismatch for {name}: expected {expected}, found {found}")]
    KindMismatch {
        name: String,
        expected: Kind,
        found: Kind,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("duplicate item: {0}")]
    DuplicateItem(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("outcome violates schema: {}", join_violations(.0))]
    SchemaViolation(Vec<Violation>),
    #[error("role mismatch: activity {activity} requires {required}, agent is {agent}")]
    RoleMismatch {
        activity: String,
        required: String,
        agent: String,
    },
    #[error("guard error on {from}->{to}: {detail}")]
    GuardError {
        from: String,
        to: String,
        detail: String,
    },
    #[error("corrupt log at seq {seq}: {detail}")]
    CorruptLog { seq: u64, detail: String },
    #[error("delta conflict: {0}")]
    DeltaConflict(String),
    #[error("migration invalid: {}", .0.reasons_text())]
    MigrationInvalid(Box<MigrationReport>),
    #[error("name mismatch: item described by {item}, target is {target}")]
    NameMismatch { item: String, target: String },
    #[error("bound exceeded: max_events {requested} > {limit}")]
    BoundExceeded { requested: usize, limit: usize },
    #[error("endpoint {endpoint} already bound to {connector}")]
    EndpointInUse { endpoint: String, connector: String },
    #[error("parse error at {line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::ValidationFailed(_) => "VALIDATION_FAILED",
            Error::KindMismatch { .. } => "KIND_MISMATCH",
            Error::NotFound(_) => "NOT_FOUND",
            Error::DuplicateItem(_) => "DUPLICATE_ITEM",
            Error::IllegalTransition(_) => "ILLEGAL_TRANSITION",
            Error::SchemaViolation(_) => "SCHEMA_VIOLATION",
            Error::RoleMismatch { .. } => "ROLE_MISMATCH",
            Error::GuardError { .. } => "GUARD_ERROR",
            Error::CorruptLog { .. } => "CORRUPT_LOG",
            Error::DeltaConflict(_) => "DELTA_CONFLICT",
            Error::MigrationInvalid(_) => "MIGRATION_INVALID",
            Error::NameMismatch { .. } => "NAME_MISMATCH",
            Error::BoundExceeded { .. } => "BOUND_EXCEEDED",
            Error::EndpointInUse { .. } => "ENDPOINT_IN_USE",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Invalid(_) => "INVALID",
        }
    }

    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    let mut out = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&alloc::format!("{x}"));
    }
    out
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
