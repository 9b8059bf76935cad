use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Fault injector shared by the store and the bus. Every durable write asks
/// the fuse first; once armed, the write numbered `n` fails with
/// [`Error::Crashed`] and so does every write after it.
#[derive(Debug, Clone, Default)]
pub struct Fuse {
    inner: Arc<FuseState>,
}

#[derive(Debug, Default)]
struct FuseState {
    writes: AtomicU64,
    trip_at: AtomicU64,
    torn: AtomicBool,
}

/// What the caller should do with the write it asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Proceed,
    /// Write a prefix of the bytes, then fail.
    Tear,
}

impl Fuse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Trip on write number `n` (1-based, counted from now). A torn trip
    /// leaves a partial write behind where the writer supports it.
    pub fn arm(&self, n: u64, torn: bool) {
        self.inner.writes.store(0, Ordering::SeqCst);
        self.inner.torn.store(torn, Ordering::SeqCst);
        self.inner.trip_at.store(n, Ordering::SeqCst);
    }

    pub fn disarm(&self) {
        self.inner.trip_at.store(0, Ordering::SeqCst);
    }

    /// Durable writes seen since the last `arm` (or since creation).
    pub fn writes(&self) -> u64 {
        self.inner.writes.load(Ordering::SeqCst)
    }

    pub(crate) fn check(&self) -> Result<Verdict> {
        let n = self.inner.writes.fetch_add(1, Ordering::SeqCst) + 1;
        let trip = self.inner.trip_at.load(Ordering::SeqCst);
        if trip == 0 || n < trip {
            return Ok(Verdict::Proceed);
        }
        if n == trip && self.inner.torn.load(Ordering::SeqCst) {
            return Ok(Verdict::Tear);
        }
        Err(Error::Crashed)
    }
}
