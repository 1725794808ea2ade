use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{train_prepared, HopDimProfile, PreparedData, TrainConfig};
use crate::nas::space::CandidateArch;

/// Maps an architecture to a reward in `[0, 1]`, deterministically for a given seed.
pub trait RewardOracle: Sync {
    fn reward(&self, arch: &CandidateArch, seed: u64) -> Result<f64>;
}

impl<F> RewardOracle for F
where
    F: Fn(&CandidateArch, u64) -> Result<f64> + Sync,
{
    fn reward(&self, arch: &CandidateArch, seed: u64) -> Result<f64> {
        self(arch, seed)
    }
}

/// Per-candidate training seed: the run seed mixed with a hash of the widths.
pub fn arch_seed(run_seed: u64, arch: &CandidateArch) -> u64 {
    let mut hasher = Sha256::new();
    for &d in &arch.dims {
        hasher.update((d as u64).to_le_bytes());
    }
    let digest = hasher.finalize();
    run_seed ^ u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

/// Trains a ladder model with the candidate's widths and returns its validation accuracy.
pub struct LadderOracle {
    data: PreparedData,
    config: TrainConfig,
}

pub const DEFAULT_CANDIDATE_EPOCHS: usize = 150;

impl LadderOracle {
    /// `data` must hold at least as many propagated hops as the longest candidate.
    pub fn new(data: PreparedData, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(LadderOracle { data, config })
    }

    pub fn data(&self) -> &PreparedData {
        &self.data
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }
}

impl RewardOracle for LadderOracle {
    fn reward(&self, arch: &CandidateArch, seed: u64) -> Result<f64> {
        if arch.k() > self.data.max_k() {
            return Err(Error::input(format!(
                "candidate has {} hops, only {} propagated",
                arch.k(),
                self.data.max_k()
            )));
        }
        let profile = HopDimProfile::explicit(self.data.c_in(), arch.dims.clone())?;
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        let (_, metrics) = train_prepared(&self.data, &profile, &config)?;
        Ok(metrics.val_acc)
    }
}
