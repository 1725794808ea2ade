use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nas::controller::{Controller, Sample};

/// Exponential moving average of batch-mean rewards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub decay: f64,
    /// `None` until the first batch, which seeds it with its own mean.
    pub value: Option<f64>,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Baseline { decay, value: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub mean_reward: f64,
    /// Baseline the advantages were measured against.
    pub baseline: f64,
    pub mean_abs_advantage: f64,
}

/// One policy-gradient step: ascends `mean_b (r_b − baseline) · log p(actions_b)`,
/// then folds the batch mean into the baseline.
pub fn reinforce_update(
    controller: &mut Controller,
    batch: &[(Sample, f64)],
    baseline: &mut Baseline,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::input("REINFORCE batch is empty"));
    }
    if let Some((_, r)) = batch.iter().find(|(_, r)| !r.is_finite()) {
        return Err(Error::input(format!("non-finite reward {r}")));
    }
    let mean = batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64;
    let b = *baseline.value.get_or_insert(mean);

    let mut grad = vec![0.0; controller.params().len()];
    let mut abs_adv = 0.0;
    for (sample, reward) in batch {
        let advantage = reward - b;
        abs_adv += advantage.abs();
        if advantage == 0.0 {
            continue;
        }
        let (_, g) = controller.log_prob_gradient(
            &sample.actions,
            sample.from_step,
            advantage / batch.len() as f64,
        )?;
        grad.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
    }
    if abs_adv > 0.0 {
        controller.ascend(&grad)?;
    }
    baseline.value = Some(baseline.decay * b + (1.0 - baseline.decay) * mean);
    Ok(UpdateStats {
        mean_reward: mean,
        baseline: b,
        mean_abs_advantage: abs_adv / batch.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nas::controller::ControllerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_rewards_leave_parameters_alone() {
        let mut c = Controller::new(3, 1, ControllerConfig::default(), 0).unwrap();
        let before = c.params().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut baseline = Baseline::new(0.9);
        for _ in 0..3 {
            let batch: Vec<_> = (0..16).map(|_| (c.sample(1, &[], &mut rng).unwrap(), 0.5)).collect();
            let stats = reinforce_update(&mut c, &batch, &mut baseline).unwrap();
            assert_eq!(stats.mean_abs_advantage, 0.0);
        }
        assert_eq!(c.params(), before.as_slice());
        assert_eq!(baseline.value, Some(0.5));
    }

    #[test]
    fn rejects_bad_batches() {
        let mut c = Controller::new(2, 1, ControllerConfig::default(), 0).unwrap();
        let mut b = Baseline::new(0.9);
        assert!(reinforce_update(&mut c, &[], &mut b).is_err());
        let s = Sample { actions: vec![0], log_prob: 0.0, from_step: 0 };
        assert!(reinforce_update(&mut c, &[(s, f64::NAN)], &mut b).is_err());
    }

    #[test]
    fn rewarded_action_gains_probability() {
        let mut c = Controller::new(3, 1, ControllerConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = Baseline::new(0.9);
        for _ in 0..20 {
            let batch: Vec<_> = (0..32)
                .map(|_| {
                    let s = c.sample(1, &[], &mut rng).unwrap();
                    let r = f64::from(u8::from(s.actions[0] == 2));
                    (s, r)
                })
                .collect();
            reinforce_update(&mut c, &batch, &mut b).unwrap();
        }
        let p = c.next_probabilities(&[]).unwrap();
        assert!(p[2] > p[0] && p[2] > p[1], "{p:?}");
    }
}
