//! Node injection attack simulators.
//!
//! All attacks obey the injection contract: the original graph block is
//! never touched, every new edge has an injected endpoint, injected degrees
//! stay within budget, and injected features stay inside the clean feature
//! range. `heuristic_inject` wires new nodes at random; `fga_inject` and
//! `mga_inject` start from that wiring and then greedily optimize edges and
//! features against a surrogate model's gradients.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, SparseGraph, UNKNOWN_LABEL};
use crate::models::{attack_grads, GcnParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackBudget {
    /// Number of injected nodes.
    pub num_inject: usize,
    /// Maximum (and initial) degree per injected node.
    pub inject_degree: usize,
    /// Gradient-attack optimization rounds; heuristic wiring ignores this.
    pub opt_iters: usize,
    /// Per-coordinate step of the signed-gradient feature ascent.
    pub step_size: f64,
    /// Momentum factor for mga_inject.
    pub momentum: f64,
    /// Feature bounds; None derives per-coordinate bounds from the clean
    /// feature matrix.
    pub feature_min: Option<f64>,
    pub feature_max: Option<f64>,
}

impl Default for AttackBudget {
    fn default() -> Self {
        AttackBudget {
            num_inject: 0,
            inject_degree: 10,
            opt_iters: 40,
            step_size: 0.5,
            momentum: 0.9,
            feature_min: None,
            feature_max: None,
        }
    }
}

impl AttackBudget {
    pub fn validate(&self) -> Result<()> {
        if self.num_inject > 0 && self.inject_degree == 0 {
            return Err(Error::Config(
                "inject_degree must be at least 1 when injecting nodes".into(),
            ));
        }
        if let (Some(lo), Some(hi)) = (self.feature_min, self.feature_max) {
            if lo > hi {
                return Err(Error::Config(format!(
                    "feature_min {lo} exceeds feature_max {hi}"
                )));
            }
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// A dataset poisoned by node injection. `base` is the clean input;
/// `merged` appends the injected nodes (ids `base.num_nodes()..`).
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedDataset {
    pub base: Dataset,
    pub merged: Dataset,
    /// Injected node ids in the merged graph, ascending.
    pub injected_ids: Vec<usize>,
    /// Test nodes adjacent to an injected node (the attack's victims).
    pub target_set: Vec<usize>,
    /// Per-coordinate feature bounds the injected features must satisfy.
    pub feature_lo: Vec<f64>,
    pub feature_hi: Vec<f64>,
    pub budget: AttackBudget,
}

/// First violated injection constraint, with its location.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectionViolation {
    OriginalEdgeChanged { u: usize, v: usize, added: bool },
    DegreeExceeded { node: usize, degree: usize, cap: usize },
    FeatureOutOfBounds { node: usize, coord: usize, value: f64 },
    LabelKnown { node: usize },
    SplitMembership { node: usize },
    TargetNotTest { node: usize },
}

impl fmt::Display for InjectionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InjectionViolation::OriginalEdgeChanged { u, v, added } => write!(
                f,
                "original edge ({u}, {v}) was {}",
                if *added { "added" } else { "removed" }
            ),
            InjectionViolation::DegreeExceeded { node, degree, cap } => {
                write!(f, "injected node {node} has degree {degree} > budget {cap}")
            }
            InjectionViolation::FeatureOutOfBounds { node, coord, value } => {
                write!(f, "injected node {node} feature {coord} = {value} out of bounds")
            }
            InjectionViolation::LabelKnown { node } => {
                write!(f, "injected node {node} has a known label")
            }
            InjectionViolation::SplitMembership { node } => {
                write!(f, "injected node {node} appears in a split mask")
            }
            InjectionViolation::TargetNotTest { node } => {
                write!(f, "target {node} is not an original test node")
            }
        }
    }
}

/// Check every PoisonedDataset invariant; `Ok(())` or the first violation.
pub fn verify_injection_constraints(
    p: &PoisonedDataset,
) -> std::result::Result<(), InjectionViolation> {
    let n = p.base.num_nodes();
    // Original block unchanged, and new edges touch an injected node.
    for u in 0..p.merged.num_nodes() {
        for &v in p.merged.graph.neighbors(u) {
            if u < n && v < n && !p.base.graph.has_edge(u, v) {
                return Err(InjectionViolation::OriginalEdgeChanged { u, v, added: true });
            }
        }
    }
    for u in 0..n {
        for &v in p.base.graph.neighbors(u) {
            if !p.merged.graph.has_edge(u, v) {
                return Err(InjectionViolation::OriginalEdgeChanged { u, v, added: false });
            }
        }
    }
    for &i in &p.injected_ids {
        let deg = p.merged.graph.degree(i);
        if deg > p.budget.inject_degree {
            return Err(InjectionViolation::DegreeExceeded {
                node: i,
                degree: deg,
                cap: p.budget.inject_degree,
            });
        }
        if p.merged.labels[i] != UNKNOWN_LABEL {
            return Err(InjectionViolation::LabelKnown { node: i });
        }
        if p.merged.train_mask[i] || p.merged.val_mask[i] || p.merged.test_mask[i] {
            return Err(InjectionViolation::SplitMembership { node: i });
        }
        for c in 0..p.merged.num_features() {
            let x = p.merged.features[[i, c]];
            // Exact clipping plus a rounding allowance.
            if x < p.feature_lo[c] - 1e-9 || x > p.feature_hi[c] + 1e-9 {
                return Err(InjectionViolation::FeatureOutOfBounds {
                    node: i,
                    coord: c,
                    value: x,
                });
            }
        }
    }
    for &t in &p.target_set {
        if t >= n || !p.base.test_mask[t] {
            return Err(InjectionViolation::TargetNotTest { node: t });
        }
    }
    Ok(())
}

/// Per-coordinate effective feature bounds for injected rows.
fn feature_bounds(ds: &Dataset, budget: &AttackBudget) -> (Vec<f64>, Vec<f64>) {
    let d = ds.num_features();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in ds.features.rows() {
        for (c, &x) in row.iter().enumerate() {
            lo[c] = lo[c].min(x);
            hi[c] = hi[c].max(x);
        }
    }
    if let Some(min) = budget.feature_min {
        lo.iter_mut().for_each(|v| *v = min);
    }
    if let Some(max) = budget.feature_max {
        hi.iter_mut().for_each(|v| *v = max);
    }
    (lo, hi)
}

/// Random baseline injection: each new node is wired to `inject_degree`
/// distinct test nodes drawn uniformly without replacement, with features
/// set to the clean mean feature vector (clipped to bounds).
pub fn heuristic_inject(ds: &Dataset, budget: &AttackBudget, seed: u64) -> Result<PoisonedDataset> {
    budget.validate()?;
    ds.validate()?;
    let test_nodes = Dataset::mask_nodes(&ds.test_mask);
    if budget.num_inject > 0 && budget.inject_degree > test_nodes.len() {
        return Err(Error::Config(format!(
            "inject_degree {} exceeds {} available test nodes",
            budget.inject_degree,
            test_nodes.len()
        )));
    }
    let n = ds.num_nodes();
    let n_inj = budget.num_inject;
    let (lo, hi) = feature_bounds(ds, budget);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = ds.graph.edges().collect();
    for k in 0..n_inj {
        let mut pool = test_nodes.clone();
        pool.shuffle(&mut rng);
        for &t in pool.iter().take(budget.inject_degree) {
            edges.push((n + k, t));
        }
    }
    let graph = SparseGraph::from_edges(&edges, n + n_inj)?;

    let d = ds.num_features();
    let mean: Vec<f64> = (0..d)
        .map(|c| ds.features.column(c).sum() / n as f64)
        .collect();
    let mut features = Array2::zeros((n + n_inj, d));
    for v in 0..n {
        features.row_mut(v).assign(&ds.features.row(v));
    }
    for k in 0..n_inj {
        for c in 0..d {
            features[[n + k, c]] = mean[c].clamp(lo[c], hi[c]);
        }
    }

    let mut labels = ds.labels.clone();
    labels.extend(std::iter::repeat_n(UNKNOWN_LABEL, n_inj));
    let extend_mask = |mask: &[bool]| {
        let mut m = mask.to_vec();
        m.extend(std::iter::repeat_n(false, n_inj));
        m
    };
    let merged = Dataset {
        graph,
        features,
        labels,
        num_classes: ds.num_classes,
        train_mask: extend_mask(&ds.train_mask),
        val_mask: extend_mask(&ds.val_mask),
        test_mask: extend_mask(&ds.test_mask),
    };
    let injected_ids: Vec<usize> = (n..n + n_inj).collect();
    let target_set = touched_test_nodes(&merged, &ds.test_mask, &injected_ids);
    let p = PoisonedDataset {
        base: ds.clone(),
        merged,
        injected_ids,
        target_set,
        feature_lo: lo,
        feature_hi: hi,
        budget: *budget,
    };
    if let Err(v) = verify_injection_constraints(&p) {
        return Err(Error::Input(format!("injection produced invalid output: {v}")));
    }
    Ok(p)
}

fn touched_test_nodes(merged: &Dataset, base_test: &[bool], injected: &[usize]) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for &i in injected {
        for &v in merged.graph.neighbors(i) {
            if v < base_test.len() && base_test[v] {
                set.insert(v);
            }
        }
    }
    set.into_iter().collect()
}

/// Gradient-guided injection (FGA adapted to the injection setting).
pub fn fga_inject(
    ds: &Dataset,
    budget: &AttackBudget,
    surrogate: &GcnParams,
    seed: u64,
) -> Result<PoisonedDataset> {
    gradient_inject(ds, budget, surrogate, seed, 0.0)
}

/// Momentum variant: edge/feature gradients are accumulated as
/// g_t = mu*g_{t-1} + grad_t before selection. mu = 0 reduces to FGA.
pub fn mga_inject(
    ds: &Dataset,
    budget: &AttackBudget,
    surrogate: &GcnParams,
    seed: u64,
) -> Result<PoisonedDataset> {
    gradient_inject(ds, budget, surrogate, seed, budget.momentum)
}

/// Working state of the gradient attack: adjacency as sorted neighbor sets
/// so single-edge flips are cheap, frozen to CSR for each loss evaluation.
struct AttackState {
    adj: Vec<BTreeSet<usize>>,
    x: Array2<f64>,
}

impl AttackState {
    fn graph(&self) -> SparseGraph {
        SparseGraph::from_adj_lists(self.adj.iter().map(|s| s.iter().copied().collect()).collect())
    }

    fn flip(&mut self, u: usize, v: usize, present: bool) {
        if present {
            self.adj[u].remove(&v);
            self.adj[v].remove(&u);
        } else {
            self.adj[u].insert(v);
            self.adj[v].insert(u);
        }
    }
}

/// Mean surrogate cross-entropy over the fixed target set.
fn target_loss(
    state: &AttackState,
    params: &GcnParams,
    labels: &[i64],
    target_mask: &[bool],
) -> Result<f64> {
    let adj = NormalizedAdjacency::symmetric(&state.graph());
    let soft = crate::models::gcn_forward(&adj, &state.x, params)?;
    let mut loss = 0.0;
    let mut m = 0usize;
    for v in 0..labels.len() {
        if !target_mask[v] {
            continue;
        }
        loss -= soft.probs()[[v, labels[v] as usize]].max(1e-12).ln();
        m += 1;
    }
    Ok(loss / m as f64)
}

fn gradient_inject(
    ds: &Dataset,
    budget: &AttackBudget,
    surrogate: &GcnParams,
    seed: u64,
    momentum: f64,
) -> Result<PoisonedDataset> {
    let mut p = heuristic_inject(ds, budget, seed)?;
    if budget.num_inject == 0 || budget.opt_iters == 0 {
        return Ok(p);
    }
    let (sd, _, sc) = surrogate.dims();
    if sd != ds.num_features() || sc != ds.num_classes {
        return Err(Error::Input(format!(
            "surrogate dims {sd}x..x{sc} do not match dataset {}x..x{}",
            ds.num_features(),
            ds.num_classes
        )));
    }

    let n = ds.num_nodes();
    let n_tot = p.merged.num_nodes();
    let n_inj = p.injected_ids.len();
    let first_inj = n;

    // The optimization objective: mean cross-entropy over the victims wired
    // by the heuristic stage, with their true labels.
    let mut target_mask = vec![false; n_tot];
    for &t in &p.target_set {
        target_mask[t] = true;
    }
    if p.target_set.is_empty() {
        return Ok(p);
    }

    let mut state = AttackState {
        adj: (0..n_tot)
            .map(|u| p.merged.graph.neighbors(u).iter().copied().collect())
            .collect(),
        x: p.merged.features.clone(),
    };
    let mut cur_loss = target_loss(&state, surrogate, &p.merged.labels, &target_mask)?;

    // Momentum buffers: candidate-edge gradient (n_tot x n_inj) and
    // injected-feature gradient (n_inj x D).
    let mut edge_buf: Array2<f64> = Array2::zeros((n_tot, n_inj));
    let mut feat_buf: Array2<f64> = Array2::zeros((n_inj, ds.num_features()));

    for _round in 0..budget.opt_iters {
        let adj = NormalizedAdjacency::symmetric(&state.graph());
        let grads = attack_grads(&adj, &state.x, surrogate, &p.merged.labels, &target_mask)?;

        // d(loss)/d(A_hat[u, i]) + d(loss)/d(A_hat[i, u]) for all u and
        // injected i, assembled from the two propagation sites.
        let x_inj = state.x.slice(ndarray::s![first_inj.., ..]).to_owned();
        let h_inj = grads.h.slice(ndarray::s![first_inj.., ..]).to_owned();
        let ds1_inj = grads.ds1.slice(ndarray::s![first_inj.., ..]).to_owned();
        let ds2_inj = grads.ds2.slice(ndarray::s![first_inj.., ..]).to_owned();
        let mut cand = grads.ds2.dot(&h_inj.t());
        cand += &grads.ds1.dot(&x_inj.t());
        cand += &grads.h.dot(&ds2_inj.t());
        cand += &state.x.dot(&ds1_inj.t());

        edge_buf *= momentum;
        edge_buf += &cand;
        let dx_inj = grads.dx.slice(ndarray::s![first_inj.., ..]);
        feat_buf *= momentum;
        feat_buf += &dx_inj;

        let mut accepted_any = false;

        // One rewire per injected node per round, in node-id order. Each
        // tentative flip is re-evaluated against the true loss and reverted
        // unless the loss is non-decreasing.
        for (slot, &i) in p.injected_ids.iter().enumerate() {
            let deg = state.adj[i].len();
            // Score of toggling edge (u, i): gradient of the loss in the
            // normalized entries, times the weight the new entry would get.
            let score = |u: usize, state: &AttackState| -> f64 {
                let du = state.adj[u].len();
                let di = state.adj[i].len();
                let w = 1.0 / (((du + 1) as f64) * ((di + 1) as f64)).sqrt();
                edge_buf[[u, slot]] * w
            };
            // Best absent candidate (add) and worst present edge (remove).
            let mut best_add: Option<(f64, usize)> = None;
            for u in 0..n_tot {
                if u == i || state.adj[i].contains(&u) {
                    continue;
                }
                // A new edge raises the far endpoint's degree too, so
                // another injected node at its cap is not addable.
                if u >= first_inj && state.adj[u].len() >= budget.inject_degree {
                    continue;
                }
                let s = score(u, &state);
                if s > 0.0 && best_add.is_none_or(|(bs, _)| s > bs) {
                    best_add = Some((s, u));
                }
            }
            let mut worst_present: Option<(f64, usize)> = None;
            for &u in &state.adj[i] {
                let s = score(u, &state);
                if worst_present.is_none_or(|(ws, _)| s < ws) {
                    worst_present = Some((s, u));
                }
            }

            // Candidate actions with predicted gains.
            enum Action {
                Add(usize),
                Remove(usize),
                Swap(usize, usize),
            }
            let mut action: Option<(f64, Action)> = None;
            let consider = |gain: f64, act: Action, action: &mut Option<(f64, Action)>| {
                if gain > 0.0 && action.as_ref().is_none_or(|(g, _)| gain > *g) {
                    *action = Some((gain, act));
                }
            };
            if deg < budget.inject_degree {
                if let Some((s, u)) = best_add {
                    consider(s, Action::Add(u), &mut action);
                }
            }
            if let Some((s, u)) = worst_present {
                if s < 0.0 {
                    consider(-s, Action::Remove(u), &mut action);
                }
                if deg >= budget.inject_degree {
                    if let Some((sa, ua)) = best_add {
                        consider(sa - s, Action::Swap(u, ua), &mut action);
                    }
                }
            }

            let Some((_, act)) = action else { continue };
            let flips: Vec<(usize, bool)> = match act {
                Action::Add(u) => vec![(u, false)],
                Action::Remove(u) => vec![(u, true)],
                Action::Swap(rem, add) => vec![(rem, true), (add, false)],
            };
            for &(u, present) in &flips {
                state.flip(i, u, present);
            }
            let new_loss = target_loss(&state, surrogate, &p.merged.labels, &target_mask)?;
            if new_loss >= cur_loss - 1e-12 {
                cur_loss = cur_loss.max(new_loss);
                accepted_any = true;
            } else {
                for &(u, present) in flips.iter().rev() {
                    state.flip(i, u, !present);
                }
            }
        }

        // One clipped fast-gradient step on each injected node's features:
        // step_size along the sign of the (momentum-accumulated) gradient,
        // the usual scale-free ascent. Each node's step is re-evaluated
        // against the true loss and reverted unless non-decreasing.
        for (slot, &i) in p.injected_ids.iter().enumerate() {
            let before: Vec<f64> = state.x.row(i).to_vec();
            let mut moved = false;
            for c in 0..ds.num_features() {
                let stepped = state.x[[i, c]] + budget.step_size * feat_buf[[slot, c]].signum();
                let clipped = stepped.clamp(p.feature_lo[c], p.feature_hi[c]);
                moved |= clipped != before[c];
                state.x[[i, c]] = clipped;
            }
            if !moved {
                continue;
            }
            let new_loss = target_loss(&state, surrogate, &p.merged.labels, &target_mask)?;
            if new_loss >= cur_loss - 1e-12 {
                cur_loss = cur_loss.max(new_loss);
                accepted_any = true;
            } else {
                for (c, &b) in before.iter().enumerate() {
                    state.x[[i, c]] = b;
                }
            }
        }

        // Rebuild the poisoned dataset and machine-check the invariants.
        p.merged.graph = state.graph();
        p.merged.features = state.x.clone();
        p.target_set = touched_test_nodes(&p.merged, &ds.test_mask, &p.injected_ids);
        if let Err(v) = verify_injection_constraints(&p) {
            return Err(Error::Input(format!(
                "attack round violated injection constraints: {v}"
            )));
        }
        if !accepted_any {
            break;
        }
    }
    Ok(p)
}
