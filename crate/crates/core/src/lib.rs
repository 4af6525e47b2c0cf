//! Repository dependency graphs with confidence-weighted edges, commit-aware
//! alignment, per-file sidecar records and graph-augmented lexical search.

pub mod align;
pub mod community;
pub mod config;
pub mod error;
pub mod expand;
pub mod extract;
pub mod graph;
pub mod index;
pub mod json;
pub mod search;
pub mod sidecar;

pub use error::{Error, Result};
pub use graph::{Edge, Neighbor, NodeId, NodeKind, Provenance, RelationKind, RepoGraph};
