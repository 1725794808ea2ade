//! Hop-aware ladder aggregation for semi-supervised node classification.
//!
//! Each hop's propagated features `Âᵏ·X` get their own projection `W_k` with a
//! hop-specific output width. The per-hop embeddings are concatenated and fed
//! to a linear softmax classifier. Widths either follow a geometric decay
//! profile ([`model::HopDimProfile`]) or are found by the reward-filtered,
//! hop-by-hop architecture search in [`nas`].

pub mod data;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod nas;

pub use error::{Error, Result};
pub use graph::{CsrMatrix, Exec, LabelVector};
pub use matrix::FeatureMatrix;
pub use model::{HopDimProfile, LadderModel, Metrics, TrainConfig};
