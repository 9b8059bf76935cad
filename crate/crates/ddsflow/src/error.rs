use std::io;
use std::path::{Path, PathBuf};

/// Errors of the hosted runtime: engine errors plus storage and transport
/// failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] ddsflow_core::Error),
    #[error("io error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("endpoint {0} is already open")]
    DuplicateEndpoint(String),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    /// Raised by an armed [`crate::Fuse`] in place of a durable write.
    #[error("simulated crash")]
    Crashed,
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Core(e) => e.code(),
            Error::Io { .. } => "IO_ERROR",
            Error::DuplicateEndpoint(_) => "DUPLICATE_ENDPOINT",
            Error::CorruptArchive(_) => "CORRUPT_ARCHIVE",
            Error::CorruptStore(_) => "CORRUPT_STORE",
            Error::Crashed => "CRASHED",
        }
    }

    pub(crate) fn not_found(what: impl Into<String>) -> Self {
        Error::Core(ddsflow_core::Error::NotFound(what.into()))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
