//! Approximate k-nearest-neighbor graph construction.
//!
//! Single-node construction uses lock-free NN-Descent ([`nndescent`]).
//! Distributed construction ([`refine`]) partitions the data over simulated
//! ranks ([`distsim`]), builds local graphs, and refines them by searching
//! optimized graphs ([`graphopt`], [`annsearch`]) of other partitions.
//! [`evalio`] covers file formats, ground truth and recall.
//!
//! Algorithms are generic over the stored element type; distances are
//! always `f32`.

#![forbid(unsafe_code)]

pub mod annsearch;
pub mod dataset;
pub mod distsim;
pub mod error;
pub mod evalio;
pub mod graph;
pub mod graphopt;
pub mod metric;
pub mod neighbor;
pub mod nndescent;
pub mod refine;
pub mod scalar;
mod util;
pub mod wire;

pub use annsearch::{ann_search, SearchParams, SearchResult};
pub use dataset::{Dataset, DatasetView};
pub use error::{Error, Result};
pub use graph::{IdSpace, KnnGraph, SearchGraph};
pub use graphopt::optimize_graph;
pub use metric::{distance, Metric};
pub use neighbor::Neighbor;
pub use nndescent::{nn_descent, NnDescentParams};
pub use refine::{build_distributed, RefineConfig};
pub use scalar::{ElemKind, Element};
pub use util::with_workers;

pub type F32Dataset = Dataset<f32>;
pub type F64Dataset = Dataset<f64>;
pub type U8Dataset = Dataset<u8>;
pub type I32Dataset = Dataset<i32>;
