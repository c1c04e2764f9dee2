//! Heterophily-driven edge pruning defense.
//!
//! The pipeline: pretrain a GCN, then repeatedly (1) read soft and pseudo
//! labels off the current graph, (2) flag candidate heterophilous edges
//! around the unlabeled/injected node set, (3) score each flagged edge by
//! the Jensen-Shannon divergence of its endpoints' soft labels, (4) sample
//! `floor(q * |H_e|)` edges from a softmax over those scores and remove
//! them, (5) fine-tune on the cleaned graph. Removals are permanent across
//! iterations. Two simpler pruning baselines are included for comparison.

use ndarray::ArrayView1;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::models::{
    accuracy, fine_tune, gcn_forward, train, GcnParams, SoftLabelMatrix, TrainConfig,
};
use crate::parallel::{map_range, map_range_seq};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    /// Fraction of the flagged edge set removed per iteration.
    pub elimination_rate: f64,
    pub max_iter: usize,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig {
            elimination_rate: 0.10,
            max_iter: 5,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.elimination_rate) {
            return Err(Error::Config(format!(
                "elimination_rate {} outside [0, 1]",
                self.elimination_rate
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Flagged edges with their per-edge divergence scores, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterophilousEdgeSet {
    /// Unordered pairs stored as (min, max), no duplicates.
    pub edges: Vec<(usize, usize)>,
    /// JS divergence of the endpoint soft-label rows, in [0, 1].
    pub scores: Vec<f64>,
}

/// Softmax sampling distribution aligned with a [`HeterophilousEdgeSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    pub probs: Vec<f64>,
}

/// One pruning iteration of [`chagnn_run`], serialized as a history line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub removed: usize,
    /// Size of the flagged edge set before removal.
    pub he_size: usize,
    pub val_acc: f64,
    pub test_acc: f64,
    /// Homophily over known-label edges after removal; NaN if no edge counts.
    pub homophily: f64,
}

/// Nodes whose labels the defender cannot trust: test nodes plus injected
/// nodes, ascending and deduplicated.
pub fn modified_node_set(ds: &Dataset, injected: &[usize]) -> Vec<usize> {
    let mut set: BTreeSet<usize> = Dataset::mask_nodes(&ds.test_mask).into_iter().collect();
    set.extend(injected.iter().copied());
    set.into_iter().collect()
}

/// Candidate heterophilous edges around `v_m`.
///
/// For each u in V_M and each neighbor v, the unordered pair {u, v} is
/// flagged when the labels the defender can see disagree: v's true label
/// against u's pseudo-label if v is in the labeled set V_L, otherwise the
/// two pseudo-labels.
pub fn identify_heterophilous(
    graph: &SparseGraph,
    v_m: &[bool],
    v_l: &[bool],
    true_labels: &[i64],
    pseudo: &[usize],
) -> Vec<(usize, usize)> {
    let mut out = BTreeSet::new();
    for u in 0..graph.num_nodes() {
        if !v_m[u] {
            continue;
        }
        for &v in graph.neighbors(u) {
            let flagged = if v_l[v] {
                true_labels[v] != pseudo[u] as i64
            } else {
                pseudo[v] != pseudo[u]
            };
            if flagged {
                out.insert((u.min(v), u.max(v)));
            }
        }
    }
    out.into_iter().collect()
}

/// Jensen-Shannon divergence, base-2 logarithm, with the 0*log0 = 0
/// convention. Bounded in [0, 1]; 0 exactly when the rows are equal.
pub fn js_divergence(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Input(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for row in [&p, &q] {
        if row.iter().any(|&x| x < 0.0) {
            return Err(Error::Input("negative probability entry".into()));
        }
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("probabilities sum to {s}, not 1")));
        }
    }
    Ok(js_core(p, q))
}

/// Core JS evaluation on rows already known to be valid distributions.
fn js_core(p: ArrayView1<'_, f64>, q: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q.iter()) {
        let m = 0.5 * (a + b);
        // m == 0 implies a == b == 0, contributing nothing.
        if a > 0.0 {
            acc += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).log2();
        }
    }
    acc.clamp(0.0, 1.0)
}

/// Score flagged edges by endpoint soft-label divergence (parallel).
pub fn score_edges(
    edges: Vec<(usize, usize)>,
    soft: &SoftLabelMatrix,
) -> Result<HeterophilousEdgeSet> {
    soft.validate()?;
    let scores = map_range(edges.len(), |k| {
        let (u, v) = edges[k];
        js_core(soft.row(u), soft.row(v))
    });
    Ok(HeterophilousEdgeSet { edges, scores })
}

/// Sequential twin of [`score_edges`]; reference path for equality tests.
pub fn score_edges_seq(
    edges: Vec<(usize, usize)>,
    soft: &SoftLabelMatrix,
) -> Result<HeterophilousEdgeSet> {
    soft.validate()?;
    let scores = map_range_seq(edges.len(), |k| {
        let (u, v) = edges[k];
        js_core(soft.row(u), soft.row(v))
    });
    Ok(HeterophilousEdgeSet { edges, scores })
}

/// Softmax over scores, max-subtracted for stability. Higher score means
/// strictly higher probability.
pub fn sampling_probs(scores: &[f64]) -> Result<SamplingDistribution> {
    if scores.is_empty() {
        return Err(Error::Input("cannot normalize an empty score list".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(SamplingDistribution {
        probs: exps.iter().map(|&e| e / total).collect(),
    })
}

/// Remove `floor(q * |H_e|)` distinct flagged edges, drawn sequentially
/// without replacement proportional to `dist` (renormalizing after each
/// draw). Returns the cleaned graph and the removed pairs in draw order.
pub fn eliminate_edges(
    graph: &SparseGraph,
    he: &HeterophilousEdgeSet,
    dist: &SamplingDistribution,
    q: f64,
    seed: u64,
) -> Result<(SparseGraph, Vec<(usize, usize)>)> {
    if he.edges.len() != dist.probs.len() {
        return Err(Error::Input(format!(
            "distribution length {} does not match edge set {}",
            dist.probs.len(),
            he.edges.len()
        )));
    }
    let k = (q * he.edges.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = dist.probs.clone();
    let mut removed = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let mut r = rng.random::<f64>() * total;
        // Walk the remaining mass in index order; the last live index
        // absorbs any floating-point leftover.
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if r < w {
                pick = Some(i);
                break;
            }
            r -= w;
            pick = Some(i);
        }
        let i = pick.expect("draw from non-empty edge set");
        removed.push(he.edges[i]);
        weights[i] = 0.0;
    }
    Ok((graph.remove_edges(&removed), removed))
}

/// Full defense loop. `injected` lists node ids whose provenance is known
/// to be adversarial (empty on clean data); they join the untrusted set.
///
/// Returns the final parameters, the dataset with the cleaned graph, and
/// one [`IterationRecord`] per iteration.
pub fn chagnn_run(
    ds: &Dataset,
    injected: &[usize],
    cfg: &DefenseConfig,
    tcfg: &TrainConfig,
    seed: u64,
) -> Result<(GcnParams, Dataset, Vec<IterationRecord>)> {
    cfg.validate()?;
    tcfg.validate()?;
    ds.validate()?;
    for &i in injected {
        if i >= ds.num_nodes() {
            return Err(Error::Input(format!("injected id {i} out of range")));
        }
    }

    let mut current = ds.clone();
    let (mut params, _) = train(&current, tcfg, seed)?;

    let n = current.num_nodes();
    let mut v_m = vec![false; n];
    for &u in &modified_node_set(&current, injected) {
        v_m[u] = true;
    }
    // The defender trusts exactly the supervised labels: train and val.
    let v_l: Vec<bool> = (0..n)
        .map(|u| current.train_mask[u] || current.val_mask[u])
        .collect();

    let mut history = Vec::with_capacity(cfg.max_iter);
    for iter in 1..=cfg.max_iter {
        let adj = crate::graph::NormalizedAdjacency::symmetric(&current.graph);
        let soft = gcn_forward(&adj, &current.features, &params)?;
        let pseudo = soft.pseudo_labels();

        let flagged = identify_heterophilous(&current.graph, &v_m, &v_l, &current.labels, &pseudo);
        let he_size = flagged.len();
        let removed = if he_size > 0 {
            let he = score_edges(flagged, &soft)?;
            let dist = sampling_probs(&he.scores)?;
            let (cleaned, removed) = eliminate_edges(
                &current.graph,
                &he,
                &dist,
                cfg.elimination_rate,
                seed.wrapping_add(iter as u64),
            )?;
            current.graph = cleaned;
            removed
        } else {
            Vec::new()
        };
        let homophily = current
            .graph
            .homophily_ratio(&current.labels)
            .unwrap_or(f64::NAN);

        params = fine_tune(&params, &current, tcfg)?;
        let adj = crate::graph::NormalizedAdjacency::symmetric(&current.graph);
        let pred = gcn_forward(&adj, &current.features, &params)?.pseudo_labels();
        history.push(IterationRecord {
            iter,
            removed: removed.len(),
            he_size,
            val_acc: accuracy(&pred, &current.labels, &current.val_mask)?,
            test_acc: accuracy(&pred, &current.labels, &current.test_mask)?,
            homophily,
        });
    }
    Ok((params, current, history))
}

/// Pruning baseline: remove every flagged edge outright, no divergence
/// screening and no sampling.
pub fn baseline_adaedge(ds: &Dataset, injected: &[usize], pseudo: &[usize]) -> Result<Dataset> {
    ds.validate()?;
    let n = ds.num_nodes();
    if pseudo.len() != n {
        return Err(Error::Input(format!(
            "pseudo-label list length {} does not match {n} nodes",
            pseudo.len()
        )));
    }
    let mut v_m = vec![false; n];
    for &u in &modified_node_set(ds, injected) {
        v_m[u] = true;
    }
    let v_l: Vec<bool> = (0..n)
        .map(|u| ds.train_mask[u] || ds.val_mask[u])
        .collect();
    let flagged = identify_heterophilous(&ds.graph, &v_m, &v_l, &ds.labels, pseudo);
    ds.with_graph(ds.graph.remove_edges(&flagged))
}

/// Pruning baseline: drop edges whose endpoints share too little feature
/// support. Features are read as binary (coordinate present iff > 0);
/// identical rows — including two empty ones — score 1.
pub fn baseline_jaccard(ds: &Dataset, threshold: f64) -> Result<Dataset> {
    ds.validate()?;
    let mut remove = Vec::new();
    for (u, v) in ds.graph.edges() {
        let a = ds.features.row(u);
        let b = ds.features.row(v);
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&x, &y) in a.iter().zip(b.iter()) {
            let (xs, ys) = (x > 0.0, y > 0.0);
            if xs && ys {
                inter += 1;
            }
            if xs || ys {
                union += 1;
            }
        }
        let sim = if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        if sim < threshold {
            remove.push((u, v));
        }
    }
    ds.with_graph(ds.graph.remove_edges(&remove))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn line_graph(n: usize) -> SparseGraph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        SparseGraph::from_edges(&edges, n).unwrap()
    }

    #[test]
    fn js_examples() {
        let p = array![1.0, 0.0];
        let q = array![0.0, 1.0];
        assert_eq!(js_divergence(p.view(), q.view()).unwrap(), 1.0);
        assert_eq!(js_divergence(p.view(), p.view()).unwrap(), 0.0);
        let bad = array![0.7, 0.7];
        assert!(js_divergence(p.view(), bad.view()).is_err());
    }

    #[test]
    fn flag_rule_both_branches() {
        // 0 -- 1 -- 2 -- 3 -- 4. V_M = {2, 3}; V_L = {1}.
        let g = line_graph(5);
        let v_m = [false, false, true, true, false];
        let v_l = [false, true, false, false, false];
        let labels = vec![0, 1, 0, 0, 0];
        // pseudo: node2 = 1 conflicts with labeled node1 (true 1 == pseudo(2)=1? no).
        let pseudo = vec![0, 0, 1, 1, 1];
        // Edge (1,2): v=1 in V_L, y_1 = 1 == pseudo(2) = 1 → not flagged.
        // Edge (2,3): both pseudo 1 → not flagged.
        // Edge (3,4): v=4 not in V_L, pseudo 1 == 1 → not flagged.
        let out = identify_heterophilous(&g, &v_m, &v_l, &labels, &pseudo);
        assert!(out.is_empty());

        // Flip node 2's pseudo-label: (1,2) flagged by the labeled branch,
        // (2,3) flagged by the pseudo branch.
        let pseudo = vec![0, 0, 0, 1, 1];
        let out = identify_heterophilous(&g, &v_m, &v_l, &labels, &pseudo);
        assert_eq!(out, vec![(1, 2), (2, 3)]);
    }

    #[test]
    fn flag_rule_matches_brute_force() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let n = 30;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random::<f64>() < 0.1 {
                        edges.push((u, v));
                    }
                }
            }
            let g = SparseGraph::from_edges(&edges, n).unwrap();
            let v_m: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
            let v_l: Vec<bool> = (0..n)
                .map(|i| !v_m[i] && rng.random::<f64>() < 0.5)
                .collect();
            let labels: Vec<i64> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let pseudo: Vec<usize> = (0..n).map(|_| rng.random_range(0..3usize)).collect();

            let mut expect = BTreeSet::new();
            for (u, v) in g.edges() {
                for (a, b) in [(u, v), (v, u)] {
                    if !v_m[a] {
                        continue;
                    }
                    let hit = if v_l[b] {
                        labels[b] != pseudo[a] as i64
                    } else {
                        pseudo[b] != pseudo[a]
                    };
                    if hit {
                        expect.insert((u.min(v), u.max(v)));
                    }
                }
            }
            let got = identify_heterophilous(&g, &v_m, &v_l, &labels, &pseudo);
            assert_eq!(got, expect.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn softmax_examples() {
        let d = sampling_probs(&[0.3, 0.3, 0.3]).unwrap();
        for &p in &d.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let d = sampling_probs(&[0.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((d.probs[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((d.probs[1] - e / (1.0 + e)).abs() < 1e-12);
        assert!(sampling_probs(&[]).is_err());
    }

    #[test]
    fn eliminate_counts_and_symmetry() {
        let g = line_graph(6);
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let he = HeterophilousEdgeSet {
            scores: vec![0.5; edges.len()],
            edges,
        };
        let dist = sampling_probs(&he.scores).unwrap();

        let (g0, r0) = eliminate_edges(&g, &he, &dist, 0.0, 7).unwrap();
        assert_eq!(g0.num_edges(), g.num_edges());
        assert!(r0.is_empty());

        let (g1, r1) = eliminate_edges(&g, &he, &dist, 1.0, 7).unwrap();
        assert_eq!(g1.num_edges(), 0);
        assert_eq!(r1.len(), 5);
        assert!(g1.is_symmetric());

        let (g2, r2) = eliminate_edges(&g, &he, &dist, 0.5, 7).unwrap();
        assert_eq!(r2.len(), 2); // floor(0.5 * 5)
        assert_eq!(g2.num_edges(), 3);
        let set: BTreeSet<_> = r2.iter().collect();
        assert_eq!(set.len(), 2, "no edge drawn twice");
        for e in &r2 {
            assert!(he.edges.contains(e));
        }
    }

    #[test]
    fn eliminate_is_deterministic() {
        let g = line_graph(10);
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let scores: Vec<f64> = (0..edges.len()).map(|i| i as f64 / 10.0).collect();
        let he = HeterophilousEdgeSet { edges, scores };
        let dist = sampling_probs(&he.scores).unwrap();
        let a = eliminate_edges(&g, &he, &dist, 0.6, 42).unwrap();
        let b = eliminate_edges(&g, &he, &dist, 0.6, 42).unwrap();
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn jaccard_edge_cases() {
        // 3 nodes on a path; node 0 and 1 share support, node 2 disjoint.
        let g = line_graph(3);
        let features: Array2<f64> =
            array![[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let ds = Dataset {
            graph: g,
            features,
            labels: vec![0, 0, 1],
            num_classes: 2,
            train_mask: vec![true, false, false],
            val_mask: vec![false, true, false],
            test_mask: vec![false, false, true],
        };
        // sim(0,1) = 1/2; sim(1,2) = 0.
        let kept = baseline_jaccard(&ds, 0.4).unwrap();
        assert!(kept.graph.has_edge(0, 1));
        assert!(!kept.graph.has_edge(1, 2));
        let unchanged = baseline_jaccard(&ds, 0.0).unwrap();
        assert_eq!(unchanged.graph.num_edges(), 2);
    }

    #[test]
    fn score_parallel_matches_sequential() {
        let probs = array![
            [0.7, 0.2, 0.1],
            [0.1, 0.8, 0.1],
            [0.3, 0.3, 0.4],
            [0.25, 0.5, 0.25]
        ];
        let soft = SoftLabelMatrix::from_probs(probs);
        let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3)];
        let a = score_edges(edges.clone(), &soft).unwrap();
        let b = score_edges_seq(edges, &soft).unwrap();
        assert_eq!(a, b);
        for &s in &a.scores {
            assert!((0.0..=1.0).contains(&s));
        }
    }
}
