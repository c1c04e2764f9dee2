//! GCN and SGC models.
//!
//! The 2-layer GCN is softmax(A' relu(A' X W1) W2) with A' the symmetric
//! normalized adjacency; SGC drops the nonlinearity: Z = A'^2 X W. Training
//! lives in [`train`], checkpoint IO in [`checkpoint`].

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{
    fine_tune, gcn_loss_and_grads, gradient_check, train, EpochRecord, GcnGradients, Optimizer,
    TrainConfig,
};
pub(crate) use train::attack_grads;

use ndarray::{Array2, ArrayView1};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Weights of the 2-layer GCN.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// D x H.
    pub w1: Array2<f64>,
    /// H x C.
    pub w2: Array2<f64>,
}

impl GcnParams {
    /// (num_features, hidden_dim, num_classes).
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    /// Glorot-uniform init, entries drawn row major (W1 first) so a seed
    /// pins the exact weights.
    pub fn glorot(num_features: usize, hidden: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let lim = (6.0 / (rows + cols) as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| rng.random::<f64>() * 2.0 * lim - lim)
                .collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape fits")
        };
        GcnParams {
            w1: draw(num_features, hidden),
            w2: draw(hidden, num_classes),
        }
    }

    fn check_input(&self, adj: &NormalizedAdjacency, x: &Array2<f64>) -> Result<()> {
        if x.nrows() != adj.num_nodes() {
            return Err(Error::Input(format!(
                "feature matrix has {} rows for {} nodes",
                x.nrows(),
                adj.num_nodes()
            )));
        }
        if x.ncols() != self.w1.nrows() {
            return Err(Error::Input(format!(
                "feature dim {} does not match W1 input dim {}",
                x.ncols(),
                self.w1.nrows()
            )));
        }
        if self.w1.ncols() != self.w2.nrows() {
            return Err(Error::Input(format!(
                "W1 output dim {} does not match W2 input dim {}",
                self.w1.ncols(),
                self.w2.nrows()
            )));
        }
        Ok(())
    }
}

/// Weights of the simplified (linear) graph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SgcParams {
    /// D x C.
    pub w: Array2<f64>,
}

/// Row-stochastic class probabilities per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelMatrix {
    probs: Array2<f64>,
}

impl SoftLabelMatrix {
    pub(crate) fn from_logits(z: &Array2<f64>) -> Self {
        SoftLabelMatrix {
            probs: softmax_rows(z),
        }
    }

    /// Wrap an existing row-stochastic matrix.
    pub(crate) fn from_probs(probs: Array2<f64>) -> Self {
        SoftLabelMatrix { probs }
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, v: usize) -> ArrayView1<'_, f64> {
        self.probs.row(v)
    }

    /// Argmax class per node; ties break to the lowest class index.
    pub fn pseudo_labels(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0usize;
                let mut best_p = row[0];
                for (c, &p) in row.iter().enumerate().skip(1) {
                    if p > best_p {
                        best = c;
                        best_p = p;
                    }
                }
                best
            })
            .collect()
    }

    /// Check rows are distributions (non-negative, sum 1 within 1e-9).
    pub fn validate(&self) -> Result<()> {
        for (v, row) in self.probs.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::Input(format!(
                    "row {v} is not a probability distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }
}

/// Row-wise softmax with max subtraction for stability.
pub(crate) fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for p in row.iter_mut() {
            *p = (*p - max).exp();
            sum += *p;
        }
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    out
}

/// Two-layer GCN forward pass.
pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    params: &GcnParams,
) -> Result<SoftLabelMatrix> {
    params.check_input(adj, x)?;
    let s1 = adj.spmm(x)?;
    let mut u = s1.dot(&params.w1);
    u.mapv_inplace(|v| v.max(0.0));
    let s2 = adj.spmm(&u)?;
    let z = s2.dot(&params.w2);
    Ok(SoftLabelMatrix::from_logits(&z))
}

/// SGC forward pass; returns raw logits (for margin measurements) and
/// softmax probabilities.
pub fn sgc_forward(
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    params: &SgcParams,
) -> Result<(Array2<f64>, SoftLabelMatrix)> {
    if x.nrows() != adj.num_nodes() {
        return Err(Error::Input(format!(
            "feature matrix has {} rows for {} nodes",
            x.nrows(),
            adj.num_nodes()
        )));
    }
    if x.ncols() != params.w.nrows() {
        return Err(Error::Input(format!(
            "feature dim {} does not match W input dim {}",
            x.ncols(),
            params.w.nrows()
        )));
    }
    let t1 = adj.spmm(x)?;
    let t2 = adj.spmm(&t1)?;
    let z = t2.dot(&params.w);
    let soft = SoftLabelMatrix::from_logits(&z);
    Ok((z, soft))
}

/// Classification margin of one logit row: z[y] - max_{j != y} z[j].
/// Positive means correctly classified with that margin.
pub fn cm_loss(z_row: ArrayView1<'_, f64>, true_class: usize) -> Result<f64> {
    let c = z_row.len();
    if c < 2 {
        return Err(Error::Input("margin needs at least 2 classes".into()));
    }
    if true_class >= c {
        return Err(Error::Input(format!(
            "true class {true_class} out of range for {c} classes"
        )));
    }
    let mut best_other = f64::NEG_INFINITY;
    for (j, &z) in z_row.iter().enumerate() {
        if j != true_class && z > best_other {
            best_other = z;
        }
    }
    Ok(z_row[true_class] - best_other)
}

/// Fraction of masked nodes whose prediction matches the label. Masked
/// nodes must have known labels.
pub fn accuracy(pred: &[usize], labels: &[i64], mask: &[bool]) -> Result<f64> {
    if pred.len() != labels.len() || pred.len() != mask.len() {
        return Err(Error::Input(format!(
            "length mismatch: {} predictions, {} labels, {} mask entries",
            pred.len(),
            labels.len(),
            mask.len()
        )));
    }
    let mut total = 0u64;
    let mut hit = 0u64;
    for v in 0..pred.len() {
        if !mask[v] {
            continue;
        }
        if labels[v] < 0 {
            return Err(Error::Input(format!(
                "masked node {v} has unknown label"
            )));
        }
        total += 1;
        if pred[v] as i64 == labels[v] {
            hit += 1;
        }
    }
    if total == 0 {
        return Err(Error::Input("accuracy over an empty mask".into()));
    }
    Ok(hit as f64 / total as f64)
}
