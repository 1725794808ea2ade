use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::GraphBundle;
use crate::error::{Error, Result};
use crate::graph::LabelVector;
use crate::matrix::FeatureMatrix;

/// Stochastic block model with one block per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub num_classes: usize,
    pub mean_degree: f64,
    /// Relative weight of an edge between two nodes of the same class.
    pub p_in: f64,
    /// Relative weight of an edge between nodes of different classes.
    pub p_out: f64,
    /// Height of the one-hot class signal in the features.
    pub scale: f64,
    /// Standard deviation of the Gaussian feature noise.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n: 1000,
            num_classes: 3,
            mean_degree: 4.0,
            p_in: 0.8,
            p_out: 0.2,
            scale: 1.0,
            sigma: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.n < self.num_classes {
            return Err(Error::input(format!(
                "need n >= num_classes >= 1, got n = {}, num_classes = {}",
                self.n, self.num_classes
            )));
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::input(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if !(self.mean_degree >= 0.0 && self.mean_degree.is_finite()) {
            return Err(Error::input("mean degree must be a non-negative number"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite() && self.scale.is_finite()) {
            return Err(Error::input("sigma must be non-negative and scale finite"));
        }
        Ok(())
    }

    /// Class sizes under the `i mod num_classes` assignment.
    fn class_sizes(&self) -> Vec<usize> {
        (0..self.num_classes)
            .map(|c| self.n / self.num_classes + usize::from(c < self.n % self.num_classes))
            .collect()
    }

    fn pair_counts(&self) -> (f64, f64) {
        let same: f64 = self
            .class_sizes()
            .iter()
            .map(|&s| (s * s.saturating_sub(1)) as f64 / 2.0)
            .sum();
        let all = (self.n * (self.n - 1)) as f64 / 2.0;
        (same, all - same)
    }

    /// Probability that a sampled edge joins two nodes of the same class.
    pub fn expected_edge_homophily(&self) -> Option<f64> {
        let (same, cross) = self.pair_counts();
        let (w_in, w_out) = (self.p_in * same, self.p_out * cross);
        (w_in + w_out > 0.0).then(|| w_in / (w_in + w_out))
    }
}

/// Draws `round(n · mean_degree / 2)` distinct undirected edges. Each edge is
/// intra-class with probability proportional to `p_in` times the number of
/// intra-class pairs, otherwise inter-class, then uniform within that type.
/// Features are `scale · one_hot(class) + N(0, sigma²)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<GraphBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let c = spec.num_classes;
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    let mut edges = Vec::new();
    if let Some(p_same) = spec.expected_edge_homophily() {
        let (same_pairs, cross_pairs) = spec.pair_counts();
        let target = ((n as f64 * spec.mean_degree / 2.0).round() as usize)
            .min((same_pairs + cross_pairs) as usize);
        let sizes = spec.class_sizes();
        let class_weights: Vec<f64> =
            sizes.iter().map(|&s| (s * s.saturating_sub(1)) as f64).collect();
        let weight_total: f64 = class_weights.iter().sum();
        let mut seen = HashSet::with_capacity(target);
        let mut attempts = 0usize;
        let max_attempts = 100 * target + 1000;
        while edges.len() < target && attempts < max_attempts {
            attempts += 1;
            let same = rng.random::<f64>() < p_same;
            let (u, v) = if same {
                // Class chosen in proportion to its number of ordered pairs.
                let mut pick = rng.random::<f64>() * weight_total;
                let mut class = 0;
                while class + 1 < c && pick >= class_weights[class] {
                    pick -= class_weights[class];
                    class += 1;
                }
                let a = rng.random_range(0..sizes[class]);
                let b = rng.random_range(0..sizes[class]);
                (class + a * c, class + b * c)
            } else {
                // Redraw the pair only; redrawing the coin as well would favor intra-class edges.
                loop {
                    let u = rng.random_range(0..n);
                    let v = rng.random_range(0..n);
                    if labels[u] != labels[v] {
                        break (u, v);
                    }
                }
            };
            if u != v && seen.insert((u.min(v), u.max(v))) {
                edges.push((u.min(v), u.max(v)));
            }
        }
        if edges.len() < target {
            log::warn!("synthetic graph saturated at {} of {target} edges", edges.len());
        }
    }

    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::input(e.to_string()))?;
    let mut x = FeatureMatrix::zeros(n, c);
    for (i, &l) in labels.iter().enumerate() {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            let signal = if j == l { spec.scale } else { 0.0 };
            *v = signal + noise.sample(&mut rng);
        }
    }
    let names = (0..c).map(|k| format!("class{k}")).collect();
    GraphBundle::new(&edges, x, LabelVector::dense(labels, c)?, names, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_an_empty_graph() {
        let spec = SyntheticSpec { p_in: 0.0, p_out: 0.0, ..Default::default() };
        assert!(generate_synthetic(&spec).unwrap().edges.is_empty());
    }

    #[test]
    fn edge_count_and_determinism() {
        let spec = SyntheticSpec { n: 500, mean_degree: 6.0, ..Default::default() };
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.edges.len(), 1500);
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        let b = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.edges, b.edges);
    }

    #[test]
    fn pure_blocks() {
        let spec = SyntheticSpec { n: 300, p_in: 1.0, p_out: 0.0, ..Default::default() };
        let b = generate_synthetic(&spec).unwrap();
        assert!(b.edges.iter().all(|&(u, v)| u % 3 == v % 3));
        let spec = SyntheticSpec { p_in: 0.0, p_out: 1.0, ..spec };
        let b = generate_synthetic(&spec).unwrap();
        assert!(b.edges.iter().all(|&(u, v)| u % 3 != v % 3));
    }

    #[test]
    fn saturation_is_bounded() {
        let spec = SyntheticSpec { n: 6, mean_degree: 100.0, p_in: 1.0, p_out: 0.0, ..Default::default() };
        // Three classes of two nodes: three possible intra-class edges.
        assert_eq!(generate_synthetic(&spec).unwrap().edges.len(), 3);
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticSpec { p_in: 1.5, ..Default::default() }.validate().is_err());
        assert!(SyntheticSpec { n: 2, num_classes: 3, ..Default::default() }.validate().is_err());
    }
}
