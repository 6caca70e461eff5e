//! Disk-resident graph nearest-neighbor search with independently
//! toggleable I/O optimizations.

pub mod cache;
pub mod candidates;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod graph;
pub mod io;
pub mod layout;
pub mod memgraph;
pub mod pq;
pub mod search;

pub use error::{Error, Result};
