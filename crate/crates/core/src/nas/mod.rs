//! Hop-dimension search: search space, LSTM policy, REINFORCE and the
//! phase-wise progressive driver.

mod controller;
mod oracle;
mod reinforce;
mod search;
mod space;
mod trace;

pub use controller::{Controller, ControllerConfig, Sample};
pub use oracle::{arch_seed, LadderOracle, RewardOracle, DEFAULT_CANDIDATE_EPOCHS};
pub use reinforce::{reinforce_update, Baseline, UpdateStats};
pub use search::{
    basic_search, progressive_search, EvalRecord, PhaseSummary, ProgressiveConfig, SearchConfig,
    SearchOutcome, SearchState, Searcher,
};
pub use space::{enumerate_space, ArchIter, CandidateArch, SearchSpace};
pub use trace::{read_trace, TraceRecord, TraceWriter};
