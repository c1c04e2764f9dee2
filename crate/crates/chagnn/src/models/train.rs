//! GCN training: cross-entropy + L2 objective, hand-derived backprop,
//! Adam/SGD steps, early stopping on validation loss.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{softmax_rows, GcnParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Floor for log arguments in the cross-entropy.
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Early-stopping patience: stop after this many epochs without a new
    /// best validation loss.
    pub patience: usize,
    /// Epoch budget for each [`fine_tune`] call.
    pub fine_tune_epochs: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 16,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 200,
            patience: 30,
            fine_tune_epochs: 50,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-epoch training metrics; losses/accuracy are evaluated after the
/// epoch's parameter update.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct GcnGradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

/// Forward-pass intermediates kept for backprop.
struct ForwardCache {
    s1: Array2<f64>,
    u: Array2<f64>,
    s2: Array2<f64>,
    p: Array2<f64>,
}

fn forward_cache(
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    params: &GcnParams,
) -> Result<ForwardCache> {
    let s1 = adj.spmm(x)?;
    let u = s1.dot(&params.w1);
    let h = u.mapv(|v| v.max(0.0));
    let s2 = adj.spmm(&h)?;
    let z = s2.dot(&params.w2);
    let p = softmax_rows(&z);
    Ok(ForwardCache { s1, u, s2, p })
}

/// Mean cross-entropy of `p` rows against labels over `mask`.
fn masked_ce(p: &Array2<f64>, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let mut total = 0usize;
    let mut loss = 0.0;
    for v in 0..labels.len() {
        if !mask[v] {
            continue;
        }
        let y = labels[v];
        if y < 0 || y as usize >= p.ncols() {
            return Err(Error::Input(format!("masked node {v} has invalid label {y}")));
        }
        loss -= p[[v, y as usize]].max(PROB_FLOOR).ln();
        total += 1;
    }
    if total == 0 {
        return Err(Error::Input("loss over an empty mask".into()));
    }
    Ok(loss / total as f64)
}

/// Training objective (masked mean cross-entropy plus (wd/2)*||W||^2) and
/// its exact gradients. `adj` must be a symmetric normalization; backprop
/// transposes the propagation by reusing it.
pub fn gcn_loss_and_grads(
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
    params: &GcnParams,
    weight_decay: f64,
) -> Result<(f64, GcnGradients)> {
    params.check_input(adj, x)?;
    if labels.len() != x.nrows() || mask.len() != x.nrows() {
        return Err(Error::Input("labels/mask length mismatch".into()));
    }
    let cache = forward_cache(adj, x, params)?;
    let m = mask.iter().filter(|&&b| b).count();
    let ce = masked_ce(&cache.p, labels, mask)?;
    let decay = 0.5
        * weight_decay
        * (params.w1.iter().map(|w| w * w).sum::<f64>()
            + params.w2.iter().map(|w| w * w).sum::<f64>());

    // dZ = (P - Y) / m on masked rows, zero elsewhere.
    let mut dz = Array2::zeros(cache.p.raw_dim());
    for v in 0..labels.len() {
        if !mask[v] {
            continue;
        }
        let y = labels[v] as usize;
        for c in 0..cache.p.ncols() {
            let ind = if c == y { 1.0 } else { 0.0 };
            dz[[v, c]] = (cache.p[[v, c]] - ind) / m as f64;
        }
    }
    let mut dw2 = cache.s2.t().dot(&dz);
    dw2.scaled_add(weight_decay, &params.w2);
    let ds2 = dz.dot(&params.w2.t());
    let dh = adj.spmm(&ds2)?;
    let mut du = dh;
    du.zip_mut_with(&cache.u, |g, &u| {
        if u <= 0.0 {
            *g = 0.0;
        }
    });
    let mut dw1 = cache.s1.t().dot(&du);
    dw1.scaled_add(weight_decay, &params.w1);

    Ok((ce + decay, GcnGradients { w1: dw1, w2: dw2 }))
}

/// Gradients of the attack objective (mean cross-entropy over `targets`,
/// no weight decay) with respect to the quantities an injection attack can
/// steer. Returned pieces let the caller assemble d(loss)/d(adjacency
/// entry) for any (u, v) as ds2[u].h[v] + ds1[u].x[v], and d(loss)/dX is
/// `dx`.
pub(crate) struct AttackGrads {
    pub ds1: Array2<f64>,
    pub ds2: Array2<f64>,
    pub h: Array2<f64>,
    pub dx: Array2<f64>,
}

pub(crate) fn attack_grads(
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    params: &GcnParams,
    labels: &[i64],
    target_mask: &[bool],
) -> Result<AttackGrads> {
    params.check_input(adj, x)?;
    let cache = forward_cache(adj, x, params)?;
    let m = target_mask.iter().filter(|&&b| b).count();
    let mut dz = Array2::zeros(cache.p.raw_dim());
    for v in 0..labels.len() {
        if !target_mask[v] {
            continue;
        }
        let y = labels[v] as usize;
        for c in 0..cache.p.ncols() {
            let ind = if c == y { 1.0 } else { 0.0 };
            dz[[v, c]] = (cache.p[[v, c]] - ind) / m as f64;
        }
    }
    let ds2 = dz.dot(&params.w2.t());
    let dh = adj.spmm(&ds2)?;
    let mut du = dh;
    du.zip_mut_with(&cache.u, |g, &u| {
        if u <= 0.0 {
            *g = 0.0;
        }
    });
    let ds1 = du.dot(&params.w1.t());
    let dx = adj.spmm(&ds1)?;
    let h = cache.u.mapv(|v| v.max(0.0));
    Ok(AttackGrads { ds1, ds2, h, dx })
}

struct Moments {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Moments {
    fn zeros(shape: (usize, usize)) -> Self {
        Moments {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }
}

struct OptimizerState {
    kind: Optimizer,
    t: i32,
    w1: Moments,
    w2: Moments,
}

impl OptimizerState {
    fn new(kind: Optimizer, params: &GcnParams) -> Self {
        OptimizerState {
            kind,
            t: 0,
            w1: Moments::zeros(params.w1.dim()),
            w2: Moments::zeros(params.w2.dim()),
        }
    }

    fn step(&mut self, params: &mut GcnParams, grads: &GcnGradients, lr: f64) {
        match self.kind {
            Optimizer::Sgd => {
                params.w1.scaled_add(-lr, &grads.w1);
                params.w2.scaled_add(-lr, &grads.w2);
            }
            Optimizer::Adam => {
                self.t += 1;
                adam_update(&mut self.w1, &mut params.w1, &grads.w1, lr, self.t);
                adam_update(&mut self.w2, &mut params.w2, &grads.w2, lr, self.t);
            }
        }
    }
}

fn adam_update(mom: &mut Moments, w: &mut Array2<f64>, g: &Array2<f64>, lr: f64, t: i32) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let c1 = 1.0 - B1.powi(t);
    let c2 = 1.0 - B2.powi(t);
    for ((m, v), (w, &g)) in mom
        .m
        .iter_mut()
        .zip(mom.v.iter_mut())
        .zip(w.iter_mut().zip(g.iter()))
    {
        *m = B1 * *m + (1.0 - B1) * g;
        *v = B2 * *v + (1.0 - B2) * g * g;
        let mhat = *m / c1;
        let vhat = *v / c2;
        *w -= lr * mhat / (vhat.sqrt() + EPS);
    }
}

/// Metrics snapshot used for the epoch history and early stopping.
fn epoch_metrics(
    adj: &NormalizedAdjacency,
    ds: &Dataset,
    params: &GcnParams,
    weight_decay: f64,
    monitor: &[bool],
) -> Result<(f64, f64, f64)> {
    let cache = forward_cache(adj, &ds.features, params)?;
    let decay = 0.5
        * weight_decay
        * (params.w1.iter().map(|w| w * w).sum::<f64>()
            + params.w2.iter().map(|w| w * w).sum::<f64>());
    let train_loss = masked_ce(&cache.p, &ds.labels, &ds.train_mask)? + decay;
    let val_loss = masked_ce(&cache.p, &ds.labels, monitor)?;
    let pred = super::SoftLabelMatrix::from_probs(cache.p).pseudo_labels();
    let val_acc = super::accuracy(&pred, &ds.labels, monitor)?;
    Ok((train_loss, val_loss, val_acc))
}

/// Train a fresh GCN. Returns the parameters of the best validation-loss
/// epoch together with the full epoch history. Runs are bit-reproducible
/// per seed. With an empty validation mask the train split is monitored
/// instead.
pub fn train(ds: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<(GcnParams, Vec<EpochRecord>)> {
    cfg.validate()?;
    ds.validate()?;
    if !ds.train_mask.iter().any(|&b| b) {
        return Err(Error::Input("training requires a non-empty train mask".into()));
    }
    let adj = NormalizedAdjacency::symmetric(&ds.graph);
    let mut params = GcnParams::glorot(ds.num_features(), cfg.hidden_dim, ds.num_classes, seed);
    let monitor: &[bool] = if ds.val_mask.iter().any(|&b| b) {
        &ds.val_mask
    } else {
        &ds.train_mask
    };
    let mut opt = OptimizerState::new(cfg.optimizer, &params);
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.max_epochs {
        let (_, grads) = gcn_loss_and_grads(
            &adj,
            &ds.features,
            &ds.labels,
            &ds.train_mask,
            &params,
            cfg.weight_decay,
        )?;
        opt.step(&mut params, &grads, cfg.learning_rate);
        let (train_loss, val_loss, val_acc) =
            epoch_metrics(&adj, ds, &params, cfg.weight_decay, monitor)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best_params, history))
}

/// Continue training existing parameters for `cfg.fine_tune_epochs` epochs
/// on `ds`, keeping the best validation-loss parameters seen; the input
/// parameters are the initial candidate, so the returned validation loss
/// never degrades. Deterministic (no randomness involved).
pub fn fine_tune(params: &GcnParams, ds: &Dataset, cfg: &TrainConfig) -> Result<GcnParams> {
    cfg.validate()?;
    ds.validate()?;
    let (d, _, c) = params.dims();
    if d != ds.num_features() || c != ds.num_classes {
        return Err(Error::Input(format!(
            "checkpoint dims {d}x..x{c} do not match dataset {}x..x{}",
            ds.num_features(),
            ds.num_classes
        )));
    }
    if !ds.train_mask.iter().any(|&b| b) {
        return Err(Error::Input("fine-tuning requires a non-empty train mask".into()));
    }
    let adj = NormalizedAdjacency::symmetric(&ds.graph);
    let monitor: &[bool] = if ds.val_mask.iter().any(|&b| b) {
        &ds.val_mask
    } else {
        &ds.train_mask
    };
    let mut current = params.clone();
    let mut best = params.clone();
    let (_, mut best_val, _) = epoch_metrics(&adj, ds, &current, cfg.weight_decay, monitor)?;
    let mut opt = OptimizerState::new(cfg.optimizer, &current);
    for _ in 0..cfg.fine_tune_epochs {
        let (_, grads) = gcn_loss_and_grads(
            &adj,
            &ds.features,
            &ds.labels,
            &ds.train_mask,
            &current,
            cfg.weight_decay,
        )?;
        opt.step(&mut current, &grads, cfg.learning_rate);
        let (_, val_loss, _) = epoch_metrics(&adj, ds, &current, cfg.weight_decay, monitor)?;
        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
        }
    }
    Ok(best)
}

/// Compare backprop gradients against central finite differences of the
/// training objective. Returns the maximum relative error over every
/// coordinate of W1 and W2.
pub fn gradient_check(
    ds: &Dataset,
    params: &GcnParams,
    cfg: &TrainConfig,
    epsilon: f64,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Input("epsilon must be positive".into()));
    }
    let adj = NormalizedAdjacency::symmetric(&ds.graph);
    let loss_at = |p: &GcnParams| -> Result<f64> {
        Ok(gcn_loss_and_grads(
            &adj,
            &ds.features,
            &ds.labels,
            &ds.train_mask,
            p,
            cfg.weight_decay,
        )?
        .0)
    };
    let (_, grads) = gcn_loss_and_grads(
        &adj,
        &ds.features,
        &ds.labels,
        &ds.train_mask,
        params,
        cfg.weight_decay,
    )?;
    fn slot(p: &mut GcnParams, which: usize, i: usize, j: usize) -> &mut f64 {
        if which == 0 {
            &mut p.w1[[i, j]]
        } else {
            &mut p.w2[[i, j]]
        }
    }
    let mut max_rel = 0.0f64;
    let mut probe = params.clone();
    for which in 0..2 {
        let (rows, cols) = if which == 0 {
            probe.w1.dim()
        } else {
            probe.w2.dim()
        };
        for i in 0..rows {
            for j in 0..cols {
                let orig = *slot(&mut probe, which, i, j);
                *slot(&mut probe, which, i, j) = orig + epsilon;
                let up = loss_at(&probe)?;
                *slot(&mut probe, which, i, j) = orig - epsilon;
                let down = loss_at(&probe)?;
                *slot(&mut probe, which, i, j) = orig;
                let fd = (up - down) / (2.0 * epsilon);
                let bp = if which == 0 {
                    grads.w1[[i, j]]
                } else {
                    grads.w2[[i, j]]
                };
                let rel = (fd - bp).abs() / (fd.abs() + bp.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok(max_rel)
}
