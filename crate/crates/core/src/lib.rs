//! Description-driven workflow engine core.
//!
//! Versioned descriptions (item, activity, schema and connector kinds) live
//! in a [`metamodel::Registry`]; items are instances that always name the
//! exact description version they follow. Enactment is event sourced: an
//! item's log, together with the published descriptions, reproduces it.
//!
//! The crate is `no_std` and needs only `alloc`. Storage, transport and the
//! command line live in the `ddsflow` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod canon;
pub mod docmodel;
pub mod enactment;
pub mod error;
pub mod evolution;
pub mod integration;
pub mod metamodel;

pub use error::{Error, Result};
