use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::csr::{CsrMatrix, Exec};
use crate::graph::hops::LayeredBfs;

pub const DEFAULT_BUCKET_WIDTH: f64 = 0.05;

/// Per-node class labels; `None` marks an unlabeled node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if let Some((i, c)) = labels
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&c| c >= num_classes).map(|c| (i, c)))
        {
            return Err(Error::input(format!(
                "node {i} has label {c}, but there are only {num_classes} classes"
            )));
        }
        Ok(LabelVector { labels, num_classes })
    }

    /// Every node labeled.
    pub fn dense(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(labels.into_iter().map(Some).collect(), num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.labels
    }

    /// Node indices per class, in ascending node order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                members[*c].push(i);
            }
        }
        members
    }
}

/// Equal-width buckets over `[0, 1]`; the value 1.0 falls in the last bucket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bucket_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bucket_width: f64) -> Result<Self> {
        Ok(Histogram {
            bucket_width,
            counts: vec![0; bucket_count(bucket_width)?],
        })
    }

    pub fn bucket_of(&self, ratio: f64) -> usize {
        bucket_index(ratio, self.bucket_width, self.counts.len())
    }

    pub fn add(&mut self, ratio: f64) {
        let b = self.bucket_of(ratio);
        self.counts[b] += 1;
    }

    /// `[lo, hi)` bounds of bucket `b` (the last bucket is closed at 1).
    pub fn bounds(&self, b: usize) -> (f64, f64) {
        bucket_bounds(b, self.bucket_width, self.counts.len())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub(crate) fn bucket_count(width: f64) -> Result<usize> {
    if !(width > 0.0 && width <= 1.0) {
        return Err(Error::input(format!("bucket width {width} not in (0, 1]")));
    }
    // 1/0.05 evaluates slightly above 20; the tolerance keeps it at 20 buckets.
    Ok(((1.0 / width) - 1e-9).ceil().max(1.0) as usize)
}

pub(crate) fn bucket_index(ratio: f64, width: f64, n_buckets: usize) -> usize {
    (((ratio / width) + 1e-12).floor() as usize).min(n_buckets - 1)
}

pub(crate) fn bucket_bounds(b: usize, width: f64, n_buckets: usize) -> (f64, f64) {
    // Divide when the width tiles [0, 1] so that bounds like 0.95 come out exact.
    let per_unit = 1.0 / width;
    let edge = |i: usize| {
        if (per_unit - per_unit.round()).abs() < 1e-9 {
            i as f64 / per_unit.round()
        } else {
            i as f64 * width
        }
    };
    let lo = edge(b);
    let hi = if b + 1 == n_buckets { 1.0 } else { edge(b + 1) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub hop: usize,
    /// Same-label fraction among labeled neighbors; `None` when there are none.
    pub per_node_ratio: Vec<Option<f64>>,
    pub histogram: Histogram,
}

impl HomophilyReport {
    fn from_ratios(hop: usize, per_node_ratio: Vec<Option<f64>>, bucket_width: f64) -> Result<Self> {
        let mut histogram = Histogram::new(bucket_width)?;
        per_node_ratio.iter().flatten().for_each(|&r| histogram.add(r));
        Ok(HomophilyReport {
            hop,
            per_node_ratio,
            histogram,
        })
    }

    pub fn defined_count(&self) -> usize {
        self.per_node_ratio.iter().flatten().count()
    }

    pub fn mean_ratio(&self) -> Option<f64> {
        let n = self.defined_count();
        (n > 0).then(|| self.per_node_ratio.iter().flatten().sum::<f64>() / n as f64)
    }
}

fn ratio_over(node_label: Option<usize>, neighbors: &[usize], labels: &LabelVector) -> Option<f64> {
    let own = node_label?;
    let (same, total) = neighbors
        .iter()
        .filter_map(|&j| labels.get(j))
        .fold((0usize, 0usize), |(s, t), l| (s + usize::from(l == own), t + 1));
    (total > 0).then(|| same as f64 / total as f64)
}

/// Homophily ratio of every node with respect to a supplied neighbor structure.
///
/// `neighbors` row `i` lists the nodes considered neighbors of `i` (for hop-k
/// analysis, pass the output of [`crate::graph::hop_k_neighbors`]).
pub fn node_homophily(
    neighbors: &CsrMatrix,
    labels: &LabelVector,
    hop: usize,
    bucket_width: f64,
) -> Result<HomophilyReport> {
    if neighbors.n_rows() != labels.len() || neighbors.n_cols() != labels.len() {
        return Err(Error::shape(format!(
            "{}x{} neighbor matrix for {} labels",
            neighbors.n_rows(),
            neighbors.n_cols(),
            labels.len()
        )));
    }
    let ratios = (0..labels.len())
        .map(|i| ratio_over(labels.get(i), neighbors.row(i).0, labels))
        .collect();
    HomophilyReport::from_ratios(hop, ratios, bucket_width)
}

/// Hop-wise homophily for hops `1..=k_max` without materializing the hop sets.
pub fn hop_homophily_profile(
    adj_binary: &CsrMatrix,
    labels: &LabelVector,
    k_max: usize,
    bucket_width: f64,
    exec: Exec,
) -> Result<Vec<HomophilyReport>> {
    if k_max == 0 {
        return Err(Error::input("hop distance must be at least 1"));
    }
    let n = labels.len();
    if adj_binary.n_rows() != n || adj_binary.n_cols() != n {
        return Err(Error::shape("adjacency and labels disagree on node count"));
    }
    let per_node = |bfs: &mut LayeredBfs, src: usize| {
        let mut ratios = vec![None; k_max];
        if labels.get(src).is_some() {
            bfs.run(adj_binary, src, k_max, |hop, frontier| {
                ratios[hop - 1] = ratio_over(labels.get(src), frontier, labels);
            });
        }
        ratios
    };
    let node_ratios: Vec<Vec<Option<f64>>> = match exec {
        Exec::Sequential => {
            let mut bfs = LayeredBfs::new(n);
            (0..n).map(|src| per_node(&mut bfs, src)).collect()
        }
        Exec::Parallel => (0..n)
            .into_par_iter()
            .map_init(|| LayeredBfs::new(n), per_node)
            .collect(),
    };
    (0..k_max)
        .map(|h| {
            let ratios = node_ratios.iter().map(|r| r[h]).collect();
            HomophilyReport::from_ratios(h + 1, ratios, bucket_width)
        })
        .collect()
}
