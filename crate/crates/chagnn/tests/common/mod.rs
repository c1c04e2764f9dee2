//! Shared fixtures for the integration suites.

#![allow(dead_code)] // each test binary uses a subset of these helpers

use chagnn::dataset::Dataset;
use chagnn::graph::{NormalizedAdjacency, SparseGraph};
use chagnn::synth::{generate_synthetic, GraphModel, SyntheticSpec};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi style graph: each unordered pair is an edge with probability
/// `p`. Used as an arbitrary-topology source for oracle comparisons.
pub fn random_graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    SparseGraph::from_edges(&edges, n).expect("ids in range")
}

/// Dense copy of a normalized adjacency, for matrix-product oracles.
pub fn dense_adjacency(adj: &NormalizedAdjacency) -> Array2<f64> {
    let n = adj.num_nodes();
    let mut out = Array2::zeros((n, n));
    for u in 0..n {
        let (cols, weights) = adj.row(u);
        for (&v, &w) in cols.iter().zip(weights.iter()) {
            out[[u, v]] = w;
        }
    }
    out
}

/// Matrix with entries uniform in [-1, 1).
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Small random labeled dataset: random graph, random positive features,
/// random labels, alternating train/val/test assignment.
pub fn random_dataset(n: usize, num_features: usize, num_classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let graph = random_graph(n, 0.3, seed);
    let features =
        Array2::from_shape_fn((n, num_features), |_| rng.random::<f64>());
    let labels: Vec<i64> = (0..n).map(|_| rng.random_range(0..num_classes) as i64).collect();
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    for v in 0..n {
        match v % 3 {
            0 => train_mask[v] = true,
            1 => val_mask[v] = true,
            _ => test_mask[v] = true,
        }
    }
    let ds = Dataset {
        graph,
        features,
        labels,
        num_classes,
        train_mask,
        val_mask,
        test_mask,
    };
    ds.validate().expect("constructed dataset is valid");
    ds
}

/// The end-to-end regression dataset spec: three classes, 400 nodes per
/// class, average degree about 10, homophily 0.8, strong features.
pub fn regression_spec() -> SyntheticSpec {
    SyntheticSpec {
        num_classes: 3,
        nodes_per_class: 400,
        degree: 10,
        homophily: 0.8,
        feature_strength: 0.9,
        model: GraphModel::Csbm,
    }
}

/// The full-size dataset the end-to-end regression runs on.
pub fn regression_dataset(seed: u64) -> Dataset {
    generate_synthetic(&regression_spec(), seed).expect("feasible spec")
}

/// A small, fast synthetic dataset for pipeline tests.
pub fn small_synthetic(seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        num_classes: 3,
        nodes_per_class: 100,
        degree: 8,
        homophily: 0.8,
        feature_strength: 0.9,
        model: GraphModel::Csbm,
    };
    generate_synthetic(&spec, seed).expect("feasible spec")
}
