//! Hosted runtime for the `ddsflow-core` engine: an append-only store,
//! a simulated message bus with in-process and spool-file endpoints, a fault
//! injector for crash testing, and the pieces behind the `ddsflow` binary.

pub mod cli;
pub mod error;
pub mod fuse;
pub mod store;
pub mod system;
pub mod transport;

pub use error::{Error, Result};
pub use fuse::Fuse;
pub use store::Store;
pub use system::{DeliveryRecord, System};
pub use transport::Bus;
