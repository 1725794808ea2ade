use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SplitMask;
use crate::error::{Error, Result};
use crate::graph::{propagate, CsrMatrix, LabelVector};
use crate::matrix::FeatureMatrix;
use crate::model::evaluate::{accuracy, BucketAccuracy};
use crate::model::ladder::{labeled_mask, Aggregation, HopRows, LadderModel};
use crate::model::optim::{Adam, AdamConfig};
use crate::model::profile::HopDimProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// ReLU between aggregation and the classifier.
    pub relu: bool,
    pub aggregation: Aggregation,
    /// Keep the hop projections at their initial values and train only the classifier.
    pub freeze_hop_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.2,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            relu: false,
            aggregation: Aggregation::Concat,
            freeze_hop_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::input(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::input("epochs must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::input("weight decay must be a non-negative number"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training loss at the weights the epoch's gradient step started from.
    pub loss: f64,
    /// Accuracies after the epoch's update.
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept: best validation accuracy, earliest on ties.
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homophily_buckets: Option<Vec<BucketAccuracy>>,
}

struct Subset {
    rows: HopRows,
    targets: Vec<usize>,
}

impl Subset {
    fn new(p: &[FeatureMatrix], mask: &[usize], labels: &LabelVector) -> Result<Self> {
        let (nodes, targets) = labeled_mask(mask, labels)?;
        Ok(Subset {
            rows: HopRows::gather(p, &nodes)?,
            targets,
        })
    }

    fn truncated(&self, k: usize) -> Subset {
        Subset {
            rows: self.rows.truncated(k),
            targets: self.targets.clone(),
        }
    }

    fn accuracy(&self, model: &LadderModel) -> Result<f64> {
        if self.targets.is_empty() {
            return Ok(0.0);
        }
        Ok(accuracy(&model.predict_rows(&self.rows)?, &self.targets))
    }
}

/// Propagated features restricted to the split's rows, reusable across many
/// trainings with different profiles or seeds.
pub struct PreparedData {
    c_in: usize,
    num_classes: usize,
    max_k: usize,
    train: Subset,
    val: Subset,
    test: Subset,
}

impl PreparedData {
    pub fn new(p: &[FeatureMatrix], labels: &LabelVector, split: &SplitMask) -> Result<Self> {
        let first = p.first().ok_or_else(|| Error::input("no propagated features"))?;
        if first.n_rows() != labels.len() {
            return Err(Error::shape("labels and features disagree on node count"));
        }
        split.validate(labels.len())?;
        if split.train.is_empty() {
            return Err(Error::input("training mask is empty"));
        }
        Ok(PreparedData {
            c_in: first.n_cols(),
            num_classes: labels.num_classes(),
            max_k: p.len(),
            train: Subset::new(p, &split.train, labels)?,
            val: Subset::new(p, &split.val, labels)?,
            test: Subset::new(p, &split.test, labels)?,
        })
    }

    pub fn max_k(&self) -> usize {
        self.max_k
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn truncated(&self, k: usize) -> Result<PreparedData> {
        if k == 0 || k > self.max_k {
            return Err(Error::input(format!(
                "profile needs {k} hops, only {} propagated",
                self.max_k
            )));
        }
        Ok(PreparedData {
            c_in: self.c_in,
            num_classes: self.num_classes,
            max_k: k,
            train: self.train.truncated(k),
            val: self.val.truncated(k),
            test: self.test.truncated(k),
        })
    }
}

/// Propagates once, then trains a freshly initialized model.
pub fn train(
    adj: &CsrMatrix,
    x: &FeatureMatrix,
    labels: &LabelVector,
    split: &SplitMask,
    profile: &HopDimProfile,
    config: &TrainConfig,
) -> Result<(LadderModel, Metrics)> {
    let p = propagate(adj, x, profile.k())?;
    let data = PreparedData::new(&p, labels, split)?;
    train_prepared(&data, profile, config)
}

/// Trains a freshly initialized model on prepared data (uses the first `profile.k()` hops).
pub fn train_prepared(
    data: &PreparedData,
    profile: &HopDimProfile,
    config: &TrainConfig,
) -> Result<(LadderModel, Metrics)> {
    config.validate()?;
    if profile.c_in() != data.c_in {
        return Err(Error::shape(format!(
            "profile expects {} input features, data has {}",
            profile.c_in(),
            data.c_in
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = LadderModel::init(
        profile.clone(),
        data.num_classes,
        config.aggregation,
        config.relu,
        &mut rng,
    )?;
    train_model(model, data, config)
}

/// Runs Adam from the given initial weights and returns the best-validation model.
pub fn train_model(
    mut model: LadderModel,
    data: &PreparedData,
    config: &TrainConfig,
) -> Result<(LadderModel, Metrics)> {
    config.validate()?;
    let data = data.truncated(model.profile().k())?;
    let mut sizes: Vec<usize> = model.hop_weights().iter().map(|w| w.data().len()).collect();
    sizes.push(model.classifier().data().len());
    let mut adam = Adam::new(config.adam(), &sizes);

    let mut metrics = Metrics::default();
    let mut best: Option<(f64, LadderModel)> = None;
    for epoch in 0..config.epochs {
        let (loss, grads) =
            model.loss_and_gradients_rows(&data.train.rows, &data.train.targets, config.weight_decay)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss became {loss} at epoch {epoch}")));
        }
        {
            let frozen = config.freeze_hop_weights;
            let grad_slices: Vec<&[f64]> = grads
                .hop_weights
                .iter()
                .chain(std::iter::once(&grads.classifier))
                .map(FeatureMatrix::data)
                .collect();
            let (hops, classifier) = model.weights_mut();
            let mut params: Vec<Option<&mut [f64]>> = hops
                .iter_mut()
                .map(|w| (!frozen).then(|| w.data_mut()))
                .collect();
            params.push(Some(classifier.data_mut()));
            adam.step(&mut params, &grad_slices);
        }
        if !model.is_finite() {
            return Err(Error::Numeric(format!("weights became non-finite at epoch {epoch}")));
        }

        let record = EpochRecord {
            epoch,
            loss,
            train_acc: data.train.accuracy(&model)?,
            val_acc: data.val.accuracy(&model)?,
            test_acc: data.test.accuracy(&model)?,
        };
        // Without a validation set the last epoch wins.
        let improved = match &best {
            None => true,
            Some((v, _)) => data.val.targets.is_empty() || record.val_acc > *v,
        };
        if improved {
            best = Some((record.val_acc, model.clone()));
            metrics.best_epoch = epoch;
            metrics.train_acc = record.train_acc;
            metrics.val_acc = record.val_acc;
            metrics.test_acc = record.test_acc;
        }
        metrics.final_loss = loss;
        metrics.epochs.push(record);
    }
    let (_, best_model) = best.expect("at least one epoch");
    Ok((best_model, metrics))
}
