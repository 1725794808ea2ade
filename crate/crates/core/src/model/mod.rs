//! Ladder model, its training loop and evaluation.

mod checkpoint;
mod evaluate;
mod ladder;
mod optim;
mod profile;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_sidecar, save_checkpoint,
    save_sidecar, CheckpointSidecar,
};
pub use evaluate::{accuracy, bucketed_accuracy, evaluate_by_homophily, predict, BucketAccuracy};
pub use ladder::{
    forward, forward_addition_variant, loss_and_gradients, Aggregation, Forward, Gradients,
    HopRows, LadderModel,
};
pub use optim::{Adam, AdamConfig};
pub use profile::{make_profile, DimRule, HopDimProfile};
pub use train::{train, train_model, train_prepared, EpochRecord, Metrics, PreparedData, TrainConfig};
