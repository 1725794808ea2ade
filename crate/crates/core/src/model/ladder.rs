//! Ladder model: per-hop projections, aggregation, linear softmax classifier,
//! and its analytic cross-entropy gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{spmm, spmm_transposed, CsrMatrix, LabelVector};
use crate::matrix::FeatureMatrix;
use crate::model::profile::HopDimProfile;

/// How per-hop embeddings are combined before the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Column-wise concatenation in hop order; classifier input width `Σ C_{o,k}`.
    #[default]
    Concat,
    /// Right zero-padding to `max C_{o,k}` followed by a sum over hops.
    Addition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderModel {
    profile: HopDimProfile,
    /// `W_k`, shape `C_i × C_{o,k}`.
    hop_weights: Vec<FeatureMatrix>,
    /// `W_U`, shape `width × num_classes`.
    classifier: FeatureMatrix,
    num_classes: usize,
    aggregation: Aggregation,
    relu: bool,
}

/// Intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub hidden: FeatureMatrix,
    pub logits: FeatureMatrix,
    pub probs: FeatureMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub hop_weights: Vec<FeatureMatrix>,
    pub classifier: FeatureMatrix,
}

impl LadderModel {
    /// Glorot-uniform initialization of every weight matrix.
    pub fn init<R: Rng + ?Sized>(
        profile: HopDimProfile,
        num_classes: usize,
        aggregation: Aggregation,
        relu: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::input("need at least one class"));
        }
        let hop_weights = profile
            .dims()
            .iter()
            .map(|&d| FeatureMatrix::glorot_uniform(profile.c_in(), d, rng))
            .collect();
        let width = embed_width(&profile, aggregation);
        let classifier = FeatureMatrix::glorot_uniform(width, num_classes, rng);
        Ok(LadderModel {
            profile,
            hop_weights,
            classifier,
            num_classes,
            aggregation,
            relu,
        })
    }

    pub fn from_weights(
        profile: HopDimProfile,
        hop_weights: Vec<FeatureMatrix>,
        classifier: FeatureMatrix,
        aggregation: Aggregation,
        relu: bool,
    ) -> Result<Self> {
        if hop_weights.len() != profile.k() {
            return Err(Error::shape(format!(
                "{} hop weights for a {}-hop profile",
                hop_weights.len(),
                profile.k()
            )));
        }
        for (k, (w, &d)) in hop_weights.iter().zip(profile.dims()).enumerate() {
            if w.shape() != (profile.c_in(), d) {
                return Err(Error::shape(format!(
                    "W_{} is {:?}, expected {:?}",
                    k + 1,
                    w.shape(),
                    (profile.c_in(), d)
                )));
            }
        }
        let width = embed_width(&profile, aggregation);
        if classifier.n_rows() != width || classifier.n_cols() == 0 {
            return Err(Error::shape(format!(
                "classifier is {:?}, expected {} rows",
                classifier.shape(),
                width
            )));
        }
        if !hop_weights.iter().all(FeatureMatrix::is_finite) || !classifier.is_finite() {
            return Err(Error::input("non-finite weight"));
        }
        Ok(LadderModel {
            num_classes: classifier.n_cols(),
            profile,
            hop_weights,
            classifier,
            aggregation,
            relu,
        })
    }

    pub fn profile(&self) -> &HopDimProfile {
        &self.profile
    }

    pub fn hop_weights(&self) -> &[FeatureMatrix] {
        &self.hop_weights
    }

    pub fn hop_weights_mut(&mut self) -> &mut [FeatureMatrix] {
        &mut self.hop_weights
    }

    pub fn classifier(&self) -> &FeatureMatrix {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut FeatureMatrix {
        &mut self.classifier
    }

    /// Hop projections and classifier, borrowed together.
    pub fn weights_mut(&mut self) -> (&mut [FeatureMatrix], &mut FeatureMatrix) {
        (&mut self.hop_weights, &mut self.classifier)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggregation
    }

    pub fn relu(&self) -> bool {
        self.relu
    }

    pub fn embed_width(&self) -> usize {
        embed_width(&self.profile, self.aggregation)
    }

    pub fn is_finite(&self) -> bool {
        self.hop_weights.iter().all(FeatureMatrix::is_finite) && self.classifier.is_finite()
    }

    /// First column of hop `k`'s block in the aggregated representation.
    fn block_offsets(&self) -> Vec<usize> {
        match self.aggregation {
            Aggregation::Concat => self.profile.offsets(),
            Aggregation::Addition => vec![0; self.profile.k()],
        }
    }

    fn check_inputs(&self, p: &[impl HopInput]) -> Result<usize> {
        if p.len() != self.profile.k() {
            return Err(Error::shape(format!(
                "{} propagated matrices for a {}-hop model",
                p.len(),
                self.profile.k()
            )));
        }
        let n = p[0].rows();
        for (k, pk) in p.iter().enumerate() {
            if pk.rows() != n || pk.cols() != self.profile.c_in() {
                return Err(Error::shape(format!(
                    "P_{} is {}x{}, expected {}x{}",
                    k + 1,
                    pk.rows(),
                    pk.cols(),
                    n,
                    self.profile.c_in()
                )));
            }
        }
        Ok(n)
    }

    /// Pre-activation aggregated representation.
    fn aggregate(&self, p: &[impl HopInput]) -> Result<FeatureMatrix> {
        let n = self.check_inputs(p)?;
        let mut hidden = FeatureMatrix::zeros(n, self.embed_width());
        let offsets = self.block_offsets();
        for ((pk, wk), &off) in p.iter().zip(&self.hop_weights).zip(&offsets) {
            let hk = pk.times(wk)?;
            for i in 0..n {
                for (h, &v) in hidden.row_mut(i)[off..off + wk.n_cols()]
                    .iter_mut()
                    .zip(hk.row(i))
                {
                    *h += v;
                }
            }
        }
        Ok(hidden)
    }

    fn forward_generic(&self, p: &[impl HopInput]) -> Result<Forward> {
        let mut hidden = self.aggregate(p)?;
        if self.relu {
            hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let logits = hidden.matmul(&self.classifier)?;
        let probs = logits.softmax_rows();
        Ok(Forward {
            hidden,
            logits,
            probs,
        })
    }

    /// Logits for the given rows. Without the ReLU the model is linear, so each
    /// hop collapses to `P_k · (W_k · W_U[block_k])` and the wide hidden layer is skipped.
    pub(crate) fn logits_rows(&self, rows: &HopRows) -> Result<FeatureMatrix> {
        if self.relu {
            return Ok(self.forward_generic(&rows.hops)?.logits);
        }
        let n = self.check_inputs(&rows.hops)?;
        let mut logits = FeatureMatrix::zeros(n, self.num_classes);
        for ((sk, wk), off) in rows.hops.iter().zip(&self.hop_weights).zip(self.block_offsets()) {
            let block = self.classifier.row_block(off, wk.n_cols());
            let collapsed = wk.matmul(&block)?;
            logits.add_assign(&spmm(sk, &collapsed)?)?;
        }
        Ok(logits)
    }

    pub(crate) fn predict_rows(&self, rows: &HopRows) -> Result<Vec<usize>> {
        Ok(self.logits_rows(rows)?.argmax_rows())
    }

    /// Mean cross-entropy plus `(λ/2)·Σ‖W‖²` on the rows of `rows`, with analytic gradients.
    pub(crate) fn loss_and_gradients_rows(
        &self,
        rows: &HopRows,
        targets: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Gradients)> {
        let m = targets.len();
        if m == 0 {
            return Err(Error::input("training mask is empty"));
        }
        if rows.n_rows() != m {
            return Err(Error::shape("targets and rows disagree"));
        }
        let pre = self.aggregate(&rows.hops)?;
        let hidden = if self.relu {
            let mut h = pre.clone();
            h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            h
        } else {
            pre.clone()
        };
        let logits = hidden.matmul(&self.classifier)?;

        let mut loss = 0.0;
        let mut g = FeatureMatrix::zeros(m, self.num_classes);
        let inv_m = 1.0 / m as f64;
        for (i, &y) in targets.iter().enumerate() {
            let z = logits.row(i);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            loss += log_sum - z[y];
            for (gj, &zj) in g.row_mut(i).iter_mut().zip(z) {
                *gj = (zj - log_sum).exp() * inv_m;
            }
            g.row_mut(i)[y] -= inv_m;
        }
        loss *= inv_m;

        let mut grad_classifier = hidden.t_matmul(&g)?;
        let mut grad_hidden = g.matmul_t(&self.classifier)?;
        if self.relu {
            for (dh, &z) in grad_hidden.data_mut().iter_mut().zip(pre.data()) {
                if z <= 0.0 {
                    *dh = 0.0;
                }
            }
        }
        let mut grad_hops = Vec::with_capacity(self.profile.k());
        for ((sk, wk), off) in rows.hops.iter().zip(&self.hop_weights).zip(self.block_offsets()) {
            let block = grad_hidden.column_block(off, wk.n_cols());
            grad_hops.push(spmm_transposed(sk, &block)?);
        }

        if weight_decay != 0.0 {
            let sq: f64 = self.hop_weights.iter().map(FeatureMatrix::squared_norm).sum::<f64>()
                + self.classifier.squared_norm();
            loss += 0.5 * weight_decay * sq;
            grad_classifier.scaled_add(weight_decay, &self.classifier);
            for (gk, wk) in grad_hops.iter_mut().zip(&self.hop_weights) {
                gk.scaled_add(weight_decay, wk);
            }
        }
        Ok((
            loss,
            Gradients {
                hop_weights: grad_hops,
                classifier: grad_classifier,
            },
        ))
    }
}

fn embed_width(profile: &HopDimProfile, aggregation: Aggregation) -> usize {
    match aggregation {
        Aggregation::Concat => profile.total_dim(),
        Aggregation::Addition => profile.max_dim(),
    }
}

/// Operand types that can stand in for a propagated feature matrix `P_k`.
pub(crate) trait HopInput {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn times(&self, w: &FeatureMatrix) -> Result<FeatureMatrix>;
}

impl HopInput for FeatureMatrix {
    fn rows(&self) -> usize {
        self.n_rows()
    }
    fn cols(&self) -> usize {
        self.n_cols()
    }
    fn times(&self, w: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.matmul(w)
    }
}

impl HopInput for CsrMatrix {
    fn rows(&self) -> usize {
        self.n_rows()
    }
    fn cols(&self) -> usize {
        self.n_cols()
    }
    fn times(&self, w: &FeatureMatrix) -> Result<FeatureMatrix> {
        spmm(self, w)
    }
}

/// A subset of nodes' rows from every `P_k`, stored sparsely.
///
/// Bag-of-words features stay mostly zero after a few hops, and the loss only
/// touches the masked rows, so the training step works on these instead of the
/// full dense matrices.
#[derive(Clone, Debug)]
pub struct HopRows {
    pub(crate) nodes: Vec<usize>,
    pub(crate) hops: Vec<CsrMatrix>,
}

impl HopRows {
    pub fn gather(p: &[FeatureMatrix], nodes: &[usize]) -> Result<Self> {
        let n = p.first().map_or(0, FeatureMatrix::n_rows);
        if let Some(&bad) = nodes.iter().find(|&&i| i >= n) {
            return Err(Error::input(format!("node {bad} outside [0, {n})")));
        }
        Ok(HopRows {
            nodes: nodes.to_vec(),
            hops: p.iter().map(|pk| CsrMatrix::from_dense_rows(pk, nodes)).collect(),
        })
    }

    /// Keeps only the first `k` hops.
    pub fn truncated(&self, k: usize) -> HopRows {
        HopRows {
            nodes: self.nodes.clone(),
            hops: self.hops[..k].to_vec(),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn n_rows(&self) -> usize {
        self.nodes.len()
    }
}

/// Sorted, deduplicated mask whose nodes all carry a label.
pub(crate) fn labeled_mask(mask: &[usize], labels: &LabelVector) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut nodes = mask.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    let mut targets = Vec::with_capacity(nodes.len());
    for &i in &nodes {
        if i >= labels.len() {
            return Err(Error::input(format!("mask node {i} outside [0, {})", labels.len())));
        }
        match labels.get(i) {
            Some(c) => targets.push(c),
            None => return Err(Error::input(format!("mask node {i} is unlabeled"))),
        }
    }
    Ok((nodes, targets))
}

/// `H`, logits and row-wise softmax for the full propagated inputs.
pub fn forward(model: &LadderModel, p: &[FeatureMatrix]) -> Result<Forward> {
    model.forward_generic(p)
}

/// Class probabilities of the addition-aggregated model.
pub fn forward_addition_variant(model: &LadderModel, p: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    if model.aggregation != Aggregation::Addition {
        return Err(Error::input("model was built for concatenation"));
    }
    Ok(model.forward_generic(p)?.probs)
}

/// Loss and gradients over `train_mask` (treated as a set).
pub fn loss_and_gradients(
    model: &LadderModel,
    p: &[FeatureMatrix],
    labels: &LabelVector,
    train_mask: &[usize],
    weight_decay: f64,
) -> Result<(f64, Gradients)> {
    model.check_inputs(p)?;
    if p[0].n_rows() != labels.len() {
        return Err(Error::shape("labels and features disagree on node count"));
    }
    let (nodes, targets) = labeled_mask(train_mask, labels)?;
    let rows = HopRows::gather(p, &nodes)?;
    model.loss_and_gradients_rows(&rows, &targets, weight_decay)
}
