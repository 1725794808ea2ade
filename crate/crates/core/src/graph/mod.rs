//! Sparse graph structure, normalization, multi-hop propagation and homophily.

mod adjacency;
mod csr;
mod homophily;
mod hops;

pub use adjacency::{binary_adjacency, build_normalized_adjacency, propagate, propagate_with};
pub use csr::{spmm, spmm_transposed, spmm_with, CsrMatrix, Exec};
pub use homophily::{
    hop_homophily_profile, node_homophily, Histogram, HomophilyReport, LabelVector,
    DEFAULT_BUCKET_WIDTH,
};
pub(crate) use adjacency::canonical_edges;
pub(crate) use homophily::{bucket_bounds, bucket_count, bucket_index};
pub use hops::{hop_k_neighbors, hop_layers};
