//! Seeded synthetic dataset generators with controlled homophily.
//!
//! Two graph models share the same label/feature/split layout:
//! - `DRegular`: stub matching that gives every node degree d with an h
//!   fraction of same-class edges (exact when the counts divide evenly,
//!   otherwise relaxed by at most one edge per node, see below).
//! - `Csbm`: contextual stochastic block model, edges drawn independently
//!   with within/between class probabilities tuned so the expected degree
//!   is d and the expected homophily is h.
//!
//! Nodes are laid out class-major (class c occupies ids c*m..(c+1)*m).
//! Features are the convex blend p*onehot(y) + (1-p)/C per row, and splits
//! are a class-stratified 10/10/80 draw from a seeded shuffle.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphModel {
    DRegular,
    Csbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    /// Target degree per node.
    pub degree: usize,
    /// Target fraction of same-class edges, in [0, 1].
    pub homophily: f64,
    /// Feature informativeness p in [0, 1]: rows are p*onehot + (1-p)/C.
    pub feature_strength: f64,
    pub model: GraphModel,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.nodes_per_class < 3 {
            return Err(Error::Config(
                "nodes_per_class must be at least 3 to allow a 10/10/80 split".into(),
            ));
        }
        if self.degree == 0 {
            return Err(Error::Config("degree must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::Config(format!(
                "homophily {} outside [0, 1]",
                self.homophily
            )));
        }
        if !(0.0..=1.0).contains(&self.feature_strength) {
            return Err(Error::Config(format!(
                "feature_strength {} outside [0, 1]",
                self.feature_strength
            )));
        }
        Ok(())
    }
}

/// Generate a dataset from `spec`. Same spec and seed always produce the
/// same dataset.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = spec.num_classes;
    let m = spec.nodes_per_class;
    let n = c * m;

    let labels: Vec<i64> = (0..n).map(|v| (v / m) as i64).collect();

    let edges = match spec.model {
        GraphModel::DRegular => d_regular_edges(spec, &mut rng)?,
        GraphModel::Csbm => csbm_edges(spec, &mut rng)?,
    };
    let graph = SparseGraph::from_edges(&edges, n)?;

    let p = spec.feature_strength;
    let base = (1.0 - p) / c as f64;
    let mut features = Array2::from_elem((n, c), base);
    for v in 0..n {
        features[[v, labels[v] as usize]] = p + base;
    }

    // Class-stratified 10/10/80 split from a seeded shuffle.
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    let per_split = ((m as f64) * 0.10).floor().max(1.0) as usize;
    for class in 0..c {
        let mut ids: Vec<usize> = (class * m..(class + 1) * m).collect();
        ids.shuffle(&mut rng);
        for (i, &v) in ids.iter().enumerate() {
            if i < per_split {
                train_mask[v] = true;
            } else if i < 2 * per_split {
                val_mask[v] = true;
            } else {
                test_mask[v] = true;
            }
        }
    }

    let ds = Dataset {
        graph,
        features,
        labels,
        num_classes: c,
        train_mask,
        val_mask,
        test_mask,
    };
    ds.validate()?;
    Ok(ds)
}

/// Stub-matching construction. Per node: s = round(d*h) same-class stubs,
/// d - s cross-class stubs spread evenly over the other classes. Colliding
/// pairs (self-pairs, duplicates) are repaired by endpoint swaps that keep
/// every node's stub count intact, so degrees stay within d +/- 1; an odd
/// stub count drops a single stub, the at-most-one-edge-per-node slack.
fn d_regular_edges(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let c = spec.num_classes;
    let m = spec.nodes_per_class;
    let d = spec.degree;
    let s = ((d as f64) * spec.homophily).round() as usize;
    let cross = d - s;
    if s > m - 1 {
        return Err(Error::Config(format!(
            "infeasible degree spec: {s} same-class edges per node but only {} same-class peers",
            m - 1
        )));
    }
    // Cross edges per unordered class pair; both sides see the same count.
    let pair_edges = ((m * cross) as f64 / (c - 1) as f64).round() as usize;
    if pair_edges > m * m {
        return Err(Error::Config(
            "infeasible degree spec: more cross edges than node pairs".into(),
        ));
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();

    // Within-class matching.
    for class in 0..c {
        let ids: Vec<usize> = (class * m..(class + 1) * m).collect();
        let mut stubs: Vec<usize> = ids.iter().flat_map(|&v| std::iter::repeat_n(v, s)).collect();
        if stubs.len() % 2 == 1 {
            stubs.pop();
        }
        match_stubs(&mut stubs, &mut edges, &mut seen, rng);
    }

    // Cross-class matching. The +1 remainder windows are offset per pair so
    // they tile each class evenly when the counts allow it.
    let base = pair_edges / m;
    let rem = pair_edges % m;
    for a in 0..c {
        for b in (a + 1)..c {
            let left = endpoint_list(a, pair_slot(a, b), m, base, rem);
            let mut right = endpoint_list(b, pair_slot(b, a), m, base, rem);
            right.shuffle(rng);
            pair_lists(&left, &right, &mut edges, &mut seen, rng);
        }
    }
    Ok(edges)
}

/// Index of class `other` within class `this`'s ascending list of peers.
fn pair_slot(this: usize, other: usize) -> usize {
    if other < this {
        other
    } else {
        other - 1
    }
}

/// Endpoint multiset for one side of a class pair: every node `base` times,
/// plus a cyclic window of `rem` nodes (offset by slot) once more.
fn endpoint_list(class: usize, slot: usize, m: usize, base: usize, rem: usize) -> Vec<usize> {
    let lo = class * m;
    let mut out = Vec::with_capacity(base * m + rem);
    for v in 0..m {
        out.extend(std::iter::repeat_n(lo + v, base));
    }
    let start = (slot * rem) % m;
    for k in 0..rem {
        out.push(lo + (start + k) % m);
    }
    out
}

fn match_stubs(
    stubs: &mut [usize],
    edges: &mut Vec<(usize, usize)>,
    seen: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) {
    stubs.shuffle(rng);
    let pending: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    insert_with_repair(&pending, edges, seen, rng);
}

fn pair_lists(
    left: &[usize],
    right: &[usize],
    edges: &mut Vec<(usize, usize)>,
    seen: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) {
    debug_assert_eq!(left.len(), right.len());
    let pending: Vec<(usize, usize)> =
        left.iter().zip(right.iter()).map(|(&u, &v)| (u, v)).collect();
    insert_with_repair(&pending, edges, seen, rng);
}

/// Place candidate pairs into the edge set. A colliding pair (self-pair or
/// duplicate) is repaired by swapping one endpoint with a pair already
/// accepted from the same batch: (u,v) + (x,y) -> (u,y) + (x,v). Swaps
/// permute stub endpoints, so every node keeps its stub count and edges
/// stay within the batch's class (or class pair). A pair is dropped only
/// when repeated repair attempts fail, which needs a near-complete
/// neighborhood and costs each endpoint one edge.
fn insert_with_repair(
    pending: &[(usize, usize)],
    edges: &mut Vec<(usize, usize)>,
    seen: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) {
    let mut accepted: Vec<(usize, usize)> = Vec::with_capacity(pending.len());
    'place: for &(u, v) in pending {
        if u != v && !seen.contains(&key(u, v)) {
            seen.insert(key(u, v));
            accepted.push((u, v));
            continue;
        }
        for _ in 0..100 {
            if accepted.is_empty() {
                break;
            }
            let j = rng.random_range(0..accepted.len());
            let (x, y) = accepted[j];
            let (e1, e2) = (key(u, y), key(x, v));
            seen.remove(&key(x, y));
            if u != y && x != v && e1 != e2 && !seen.contains(&e1) && !seen.contains(&e2) {
                seen.insert(e1);
                seen.insert(e2);
                accepted[j] = (x, v);
                accepted.push((u, y));
                continue 'place;
            }
            seen.insert(key(x, y));
        }
        // No repair found: the pair is dropped.
    }
    edges.extend(accepted.iter().map(|&(u, v)| key(u, v)));
}

fn key(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Independent edge draws: same-class pairs with probability h*d/(m-1),
/// cross-class pairs with (1-h)*d/((C-1)*m), giving expected degree d and
/// expected homophily h.
fn csbm_edges(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<(usize, usize)>> {
    let c = spec.num_classes;
    let m = spec.nodes_per_class;
    let d = spec.degree as f64;
    let p_in = spec.homophily * d / (m - 1) as f64;
    let p_out = (1.0 - spec.homophily) * d / ((c - 1) * m) as f64;
    if p_in > 1.0 || p_out > 1.0 {
        return Err(Error::Config(format!(
            "infeasible block model: edge probabilities p_in={p_in:.3} p_out={p_out:.3} exceed 1"
        )));
    }
    let n = c * m;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if i / m == j / m { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}
