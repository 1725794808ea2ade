//! Dataset loading, splits and synthetic graphs.

mod bundle;
mod linqs;
mod split;
mod synthetic;

pub use bundle::{load_bundle, save_bundle, GraphBundle};
pub use linqs::{load_linqs, load_linqs_dir, LinqsWarnings};
pub use split::{make_split, SplitConfig, SplitMask};
pub use synthetic::{generate_synthetic, SyntheticSpec};
