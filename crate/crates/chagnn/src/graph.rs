//! Sparse graph storage and the kernels everything else leans on.
//!
//! Graphs are undirected and simple, stored in CSR form (`row_offsets` /
//! `col_indices`) with both directions of every edge materialized and each
//! neighbor list sorted ascending. Normalized adjacencies reuse the same
//! layout with a weight per stored entry.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::parallel;

/// Sentinel for "label unknown" in label vectors.
pub const UNKNOWN_LABEL: i64 = -1;

/// Undirected simple graph in CSR form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl SparseGraph {
    /// Build from an undirected edge list. Duplicate pairs (in either
    /// orientation) collapse to one edge and self-pairs are dropped, so the
    /// result is always simple. Node ids must be `< num_nodes`.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize) -> Result<Self> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Input(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self::from_adj_lists(adj))
    }

    /// Build from per-node neighbor lists (both directions present).
    /// Lists are sorted and deduplicated here.
    pub(crate) fn from_adj_lists(mut adj: Vec<Vec<usize>>) -> Self {
        let num_nodes = adj.len();
        let mut row_offsets = Vec::with_capacity(num_nodes + 1);
        row_offsets.push(0);
        let mut nnz = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            nnz += list.len();
            row_offsets.push(nnz);
        }
        let mut col_indices = Vec::with_capacity(nnz);
        for list in &adj {
            col_indices.extend_from_slice(list);
        }
        SparseGraph {
            num_nodes,
            row_offsets,
            col_indices,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[u]..self.row_offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row_offsets[u + 1] - self.row_offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Iterate undirected edges as `(u, v)` with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    /// Copy of the graph without the listed edges (orientation ignored,
    /// unknown edges ignored).
    pub fn remove_edges(&self, remove: &[(usize, usize)]) -> SparseGraph {
        use std::collections::HashSet;
        let gone: HashSet<(usize, usize)> = remove
            .iter()
            .map(|&(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        let adj: Vec<Vec<usize>> = (0..self.num_nodes)
            .map(|u| {
                self.neighbors(u)
                    .iter()
                    .copied()
                    .filter(|&v| {
                        let key = if u <= v { (u, v) } else { (v, u) };
                        !gone.contains(&key)
                    })
                    .collect()
            })
            .collect();
        SparseGraph::from_adj_lists(adj)
    }

    /// Structural symmetry check (every stored arc has its reverse).
    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes).all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }

    /// Component id per node. Ids are assigned in discovery order scanning
    /// nodes ascending, so component 0 contains node 0.
    pub fn connected_components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut queue = std::collections::VecDeque::new();
        for start in 0..self.num_nodes {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Fraction of edges whose endpoints share a label, counting only edges
    /// where both endpoint labels are known (`>= 0`). Self-loops cannot
    /// occur (simple graph). Errors when no edge is countable.
    pub fn homophily_ratio(&self, labels: &[i64]) -> Result<f64> {
        if labels.len() != self.num_nodes {
            return Err(Error::Input(format!(
                "label vector length {} does not match {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        let mut total = 0u64;
        let mut same = 0u64;
        for (u, v) in self.edges() {
            if labels[u] < 0 || labels[v] < 0 {
                continue;
            }
            total += 1;
            if labels[u] == labels[v] {
                same += 1;
            }
        }
        if total == 0 {
            return Err(Error::UndefinedRatio);
        }
        Ok(same as f64 / total as f64)
    }
}

/// Normalized adjacency in CSR form with one weight per stored entry.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Symmetric GCN normalization with self-loops:
    /// weight(u, v) = 1 / sqrt((deg(u)+1) * (deg(v)+1)) over A + I.
    /// Every diagonal entry is present (isolated nodes get weight 1).
    pub fn symmetric(g: &SparseGraph) -> Self {
        let n = g.num_nodes();
        let dt: Vec<f64> = (0..n).map(|u| (g.degree(u) + 1) as f64).collect();
        // sqrt of the product, not a product of sqrts: keeps exact weights
        // exact (e.g. 1/sqrt(2*2) = 0.5 with no rounding).
        let w_of = |u: usize, v: usize| 1.0 / (dt[u] * dt[v]).sqrt();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(g.col_indices.len() + n);
        let mut weights = Vec::with_capacity(g.col_indices.len() + n);
        row_offsets.push(0);
        for u in 0..n {
            let mut self_written = false;
            for &v in g.neighbors(u) {
                if !self_written && v > u {
                    col_indices.push(u);
                    weights.push(w_of(u, u));
                    self_written = true;
                }
                col_indices.push(v);
                weights.push(w_of(u, v));
            }
            if !self_written {
                col_indices.push(u);
                weights.push(w_of(u, u));
            }
            row_offsets.push(col_indices.len());
        }
        NormalizedAdjacency {
            num_nodes: n,
            row_offsets,
            col_indices,
            weights,
        }
    }

    /// Row-stochastic (random walk) normalization of A itself, without
    /// inserting self-loops: weight(u, v) = 1 / deg(u). Isolated nodes get
    /// a unit self-entry so every row still sums to one.
    pub fn random_walk(g: &SparseGraph) -> Self {
        let n = g.num_nodes();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(g.col_indices.len());
        let mut weights = Vec::with_capacity(g.col_indices.len());
        row_offsets.push(0);
        for u in 0..n {
            let deg = g.degree(u);
            if deg == 0 {
                col_indices.push(u);
                weights.push(1.0);
            } else {
                let w = 1.0 / deg as f64;
                for &v in g.neighbors(u) {
                    col_indices.push(v);
                    weights.push(w);
                }
            }
            row_offsets.push(col_indices.len());
        }
        NormalizedAdjacency {
            num_nodes: n,
            row_offsets,
            col_indices,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Stored entries of row `u` as parallel (columns, weights) slices.
    pub fn row(&self, u: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[u];
        let hi = self.row_offsets[u + 1];
        (&self.col_indices[lo..hi], &self.weights[lo..hi])
    }

    /// Weight of entry (u, v) if stored.
    pub fn weight(&self, u: usize, v: usize) -> Option<f64> {
        let (cols, ws) = self.row(u);
        cols.binary_search(&v).ok().map(|i| ws[i])
    }

    /// Sparse * dense product. Each output row accumulates over the stored
    /// entries in ascending column order, so the result does not depend on
    /// thread schedule; the parallel build splits by output row only.
    pub fn spmm(&self, m: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_spmm_dims(m)?;
        let k = m.ncols();
        let mut out = vec![0.0; self.num_nodes * k];
        parallel::fill_rows(&mut out, k, |u, chunk| self.spmm_row(m, u, chunk));
        Ok(Array2::from_shape_vec((self.num_nodes, k), out).expect("shape fits"))
    }

    /// Sequential reference implementation of [`spmm`](Self::spmm);
    /// bit-identical to it by construction.
    pub fn spmm_seq(&self, m: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_spmm_dims(m)?;
        let k = m.ncols();
        let mut out = vec![0.0; self.num_nodes * k];
        parallel::fill_rows_seq(&mut out, k, |u, chunk| self.spmm_row(m, u, chunk));
        Ok(Array2::from_shape_vec((self.num_nodes, k), out).expect("shape fits"))
    }

    fn check_spmm_dims(&self, m: &Array2<f64>) -> Result<()> {
        if m.nrows() != self.num_nodes {
            return Err(Error::Input(format!(
                "spmm shape mismatch: adjacency is {0}x{0}, dense operand has {1} rows",
                self.num_nodes,
                m.nrows()
            )));
        }
        Ok(())
    }

    #[inline]
    fn spmm_row(&self, m: &Array2<f64>, u: usize, chunk: &mut [f64]) {
        let (cols, ws) = self.row(u);
        for (&v, &w) in cols.iter().zip(ws) {
            let src = m.row(v);
            let src = src.as_slice().expect("row-major dense input");
            for (o, &x) in chunk.iter_mut().zip(src) {
                *o += w * x;
            }
        }
    }
}
