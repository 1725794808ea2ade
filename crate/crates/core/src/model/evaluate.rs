use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{bucket_bounds, bucket_count, bucket_index, LabelVector};
use crate::matrix::FeatureMatrix;
use crate::model::ladder::{labeled_mask, HopRows, LadderModel};

/// Accuracy of the nodes whose homophily ratio falls in `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Fraction of `targets` matched by `predictions`; 0 for an empty set.
pub fn accuracy(predictions: &[usize], targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
    hits as f64 / targets.len() as f64
}

/// Argmax class of every masked node.
pub fn predict(model: &LadderModel, p: &[FeatureMatrix], nodes: &[usize]) -> Result<Vec<usize>> {
    model.predict_rows(&HopRows::gather(p, nodes)?)
}

/// Bucketed accuracy from precomputed predictions (`predictions[i]` for node `mask[i]`).
///
/// Nodes with an undefined ratio are skipped; empty buckets are omitted.
pub fn bucketed_accuracy(
    predictions: &[usize],
    labels: &LabelVector,
    mask: &[usize],
    ratios: &[Option<f64>],
    bucket_width: f64,
) -> Result<Vec<BucketAccuracy>> {
    if predictions.len() != mask.len() {
        return Err(Error::shape("one prediction per masked node expected"));
    }
    let n_buckets = bucket_count(bucket_width)?;
    let mut count = vec![0usize; n_buckets];
    let mut correct = vec![0usize; n_buckets];
    for (&node, &pred) in mask.iter().zip(predictions) {
        let (Some(ratio), Some(label)) = (ratios.get(node).copied().flatten(), labels.get(node))
        else {
            continue;
        };
        let b = bucket_index(ratio, bucket_width, n_buckets);
        count[b] += 1;
        correct[b] += usize::from(pred == label);
    }
    Ok((0..n_buckets)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let (lo, hi) = bucket_bounds(b, bucket_width, n_buckets);
            BucketAccuracy {
                lo,
                hi,
                count: count[b],
                correct: correct[b],
                accuracy: correct[b] as f64 / count[b] as f64,
            }
        })
        .collect())
}

/// Test-style accuracy split by each node's homophily ratio.
pub fn evaluate_by_homophily(
    model: &LadderModel,
    p: &[FeatureMatrix],
    labels: &LabelVector,
    mask: &[usize],
    ratios: &[Option<f64>],
    bucket_width: f64,
) -> Result<Vec<BucketAccuracy>> {
    let (nodes, _) = labeled_mask(mask, labels)?;
    let predictions = predict(model, p, &nodes)?;
    bucketed_accuracy(&predictions, labels, &nodes, ratios, bucket_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let labels = LabelVector::dense(vec![0, 1, 2, 0, 1], 3).unwrap();
        let mask = [0, 1, 2, 3, 4];
        let ratios = [Some(0.1), Some(0.5), Some(0.9), Some(1.0), None];
        let preds = [0, 1, 2, 0, 1];
        let buckets = bucketed_accuracy(&preds, &labels, &mask, &ratios, 0.25).unwrap();
        assert_eq!(buckets.len(), 3);
        assert!(buckets.iter().all(|b| b.accuracy == 1.0));
        assert_eq!(buckets.iter().map(|b| b.count).sum::<usize>(), 4);
    }

    #[test]
    fn single_bucket_when_all_ratios_are_one() {
        let labels = LabelVector::dense(vec![0; 10], 2).unwrap();
        let mask: Vec<usize> = (0..10).collect();
        let ratios = vec![Some(1.0); 10];
        let buckets = bucketed_accuracy(&[0; 10], &labels, &mask, &ratios, 0.05).unwrap();
        assert_eq!(buckets.len(), 1);
        assert_eq!((buckets[0].lo, buckets[0].hi, buckets[0].count), (0.95, 1.0, 10));
    }

    #[test]
    fn random_guessing_hovers_at_one_third() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 30_000;
        let labels =
            LabelVector::dense((0..n).map(|_| rng.random_range(0..3)).collect(), 3).unwrap();
        let ratios: Vec<_> = (0..n).map(|_| Some(rng.random::<f64>())).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let mask: Vec<usize> = (0..n).collect();
        let buckets = bucketed_accuracy(&preds, &labels, &mask, &ratios, 0.1).unwrap();
        assert_eq!(buckets.len(), 10);
        for b in buckets {
            assert!((b.accuracy - 1.0 / 3.0).abs() < 0.1, "{b:?}");
        }
    }

    #[test]
    fn accuracy_of_empty_set_is_zero() {
        assert_eq!(accuracy(&[], &[]), 0.0);
        assert_eq!(accuracy(&[1, 0], &[1, 1]), 0.5);
    }
}
