use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LabelVector;

/// Train/validation/test node indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMask {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMask {
    /// Checks pairwise disjointness and index bounds.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner = vec![None; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set {
                if i >= n {
                    return Err(Error::input(format!("{name} index {i} outside [0, {n})")));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(Error::input(format!("node {i} is in both {prev} and {name}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            per_class: 20,
            n_val: 500,
            n_test: 1000,
            seed: 0,
        }
    }
}

/// Planetoid-style split: `per_class` training nodes from each class, then
/// `n_val` and `n_test` nodes from what remains, all under one seeded shuffle.
pub fn make_split(labels: &LabelVector, config: SplitConfig) -> Result<SplitMask> {
    let mut order: Vec<usize> = (0..labels.len()).filter(|&i| labels.get(i).is_some()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));

    let mut taken = vec![0usize; labels.num_classes()];
    let mut train = Vec::with_capacity(config.per_class * labels.num_classes());
    let mut rest = Vec::with_capacity(order.len());
    for i in order {
        let c = labels.get(i).expect("filtered to labeled nodes");
        if taken[c] < config.per_class {
            taken[c] += 1;
            train.push(i);
        } else {
            rest.push(i);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < config.per_class) {
        return Err(Error::input(format!(
            "class {c} has only {} labeled nodes, {} requested for training",
            taken[c], config.per_class
        )));
    }
    if rest.len() < config.n_val + config.n_test {
        return Err(Error::input(format!(
            "{} nodes left after training selection, {} needed for validation and test",
            rest.len(),
            config.n_val + config.n_test
        )));
    }
    let val = rest[..config.n_val].to_vec();
    let test = rest[config.n_val..config.n_val + config.n_test].to_vec();
    Ok(SplitMask { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: &[usize]) -> LabelVector {
        let l = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        LabelVector::dense(l, counts.len()).unwrap()
    }

    #[test]
    fn sizes_and_disjointness() {
        let lv = labels(&[300, 400, 350, 500, 200, 250, 708]);
        let s = make_split(&lv, SplitConfig::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (140, 500, 1000));
        s.validate(lv.len()).unwrap();
        let mut per_class = [0; 7];
        s.train.iter().for_each(|&i| per_class[lv.get(i).unwrap()] += 1);
        assert_eq!(per_class, [20; 7]);
    }

    #[test]
    fn small_class_is_named() {
        let lv = labels(&[100, 5, 100]);
        let err = make_split(&lv, SplitConfig { n_val: 10, n_test: 10, ..Default::default() });
        assert!(err.unwrap_err().to_string().contains("class 1"));
    }

    #[test]
    fn seeds_change_training_set() {
        let lv = labels(&[500, 500, 500]);
        let cfg = SplitConfig { n_val: 100, n_test: 100, ..Default::default() };
        let a = make_split(&lv, cfg).unwrap();
        let b = make_split(&lv, SplitConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.train, b.train);
        assert_eq!(a, make_split(&lv, cfg).unwrap());
    }

    #[test]
    fn validate_catches_overlap() {
        let s = SplitMask { train: vec![0, 1], val: vec![1], test: vec![] };
        assert!(s.validate(3).is_err());
        let s = SplitMask { train: vec![5], val: vec![], test: vec![] };
        assert!(s.validate(3).is_err());
    }
}
