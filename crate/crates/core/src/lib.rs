//! Cycle-approximate model of a processing-in-memory hash-join accelerator.
//!
//! The accelerator keeps a unique-key hash table in the rows of one
//! comparator-equipped DRAM chip per rank (one bucket per subarray row) and
//! streams dictionary-encoded fact keys from the remaining chips of the rank
//! through a rank-level unit. This crate models the memory geometry and DRAM
//! timing, the packed bucket rows and comparator search, the four-stage rank
//! pipeline, the host-side structures (dictionary, hash table, duplication
//! list), the query engine built on top, seeded workload generators and the
//! software reference joins used as oracles.
//!
//! The crate is `no_std` (with `alloc`) unless the default `std` feature is
//! enabled. File formats, the CLI and wall-clock measurements live in the
//! `pimjoin` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod baseline;
pub mod config;
mod error;
pub mod fingerprint;
pub mod mem;
pub mod query;
pub mod rlu;
pub mod search;
pub mod structures;
pub mod trace;
pub mod workload;

pub use config::{LayoutParams, SimConfig};
pub use error::{Error, ErrorKind, Result};
pub use mem::{BankState, ChipSelect, Location, MemoryGeometry, TimingParams};
