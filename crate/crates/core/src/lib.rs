//! Node classification with non-local aggregation.
//!
//! Local embeddings from an MLP, GCN or GAT encoder are scored against a
//! learned calibration vector, the nodes are sorted by score, and a small 1D
//! convolution stack aggregates over the sorted sequence so that distant
//! nodes with similar embeddings exchange information. The sort makes this
//! `O(n log n)` instead of the `O(n²)` of dense attention.

pub mod bench;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod model;
pub mod nonlocal;
pub mod report;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
