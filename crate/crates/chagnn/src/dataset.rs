//! Node classification datasets: graph + features + labels + split masks.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// A node classification dataset. Labels use `-1` for unknown (allowed only
/// outside the train/val masks, e.g. on injected nodes). The three split
/// masks are pairwise disjoint; nodes outside all three are simply unused
/// for supervision and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: SparseGraph,
    /// Row-major N x D feature matrix.
    pub features: Array2<f64>,
    /// Length-N labels, `-1` meaning unknown.
    pub labels: Vec<i64>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Check the structural invariants; every loader and generator calls
    /// this before handing a dataset out.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.nrows() != n {
            return Err(Error::Input(format!(
                "feature matrix has {} rows for {} nodes",
                self.features.nrows(),
                n
            )));
        }
        if self.labels.len() != n {
            return Err(Error::Input(format!(
                "label vector length {} for {} nodes",
                self.labels.len(),
                n
            )));
        }
        for (masks, name) in [
            (&self.train_mask, "train"),
            (&self.val_mask, "val"),
            (&self.test_mask, "test"),
        ] {
            if masks.len() != n {
                return Err(Error::Input(format!(
                    "{name} mask length {} for {n} nodes",
                    masks.len()
                )));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Input(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        for (v, &y) in self.labels.iter().enumerate() {
            if y >= self.num_classes as i64 {
                return Err(Error::Input(format!(
                    "label {y} of node {v} exceeds {} classes",
                    self.num_classes
                )));
            }
            let supervised = self.train_mask[v] || self.val_mask[v];
            if supervised && y < 0 {
                return Err(Error::Input(format!(
                    "node {v} is in a supervision split but has unknown label"
                )));
            }
        }
        for v in 0..n {
            let hits = self.train_mask[v] as u8 + self.val_mask[v] as u8 + self.test_mask[v] as u8;
            if hits > 1 {
                return Err(Error::Input(format!("node {v} appears in multiple splits")));
            }
        }
        Ok(())
    }

    /// Node ids where `mask` is set, ascending.
    pub fn mask_nodes(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Same dataset over a replacement graph (node set must be unchanged).
    pub fn with_graph(&self, graph: SparseGraph) -> Result<Dataset> {
        if graph.num_nodes() != self.num_nodes() {
            return Err(Error::Input(format!(
                "replacement graph has {} nodes, dataset has {}",
                graph.num_nodes(),
                self.num_nodes()
            )));
        }
        let mut out = self.clone();
        out.graph = graph;
        Ok(out)
    }

    /// Restriction to the largest connected component. Ties on size go to
    /// the component containing the smallest original node id. Surviving
    /// nodes are reindexed densely in ascending original-id order.
    pub fn largest_connected_component(&self) -> Dataset {
        let comp = self.graph.connected_components();
        let num_comps = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; num_comps];
        for &c in &comp {
            sizes[c] += 1;
        }
        // Component ids follow discovery order over ascending node ids, so
        // the first maximal component is the one with the smallest node id.
        let best = sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap_or(0);
        let keep: Vec<usize> = (0..self.num_nodes()).filter(|&v| comp[v] == best).collect();
        let mut new_id = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in keep.iter().enumerate() {
            new_id[v] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .graph
            .edges()
            .filter(|&(u, v)| comp[u] == best && comp[v] == best)
            .map(|(u, v)| (new_id[u], new_id[v]))
            .collect();
        let graph = SparseGraph::from_edges(&edges, keep.len()).expect("reindexed ids in range");
        let mut features = Array2::zeros((keep.len(), self.num_features()));
        for (i, &v) in keep.iter().enumerate() {
            features.row_mut(i).assign(&self.features.row(v));
        }
        Dataset {
            graph,
            features,
            labels: keep.iter().map(|&v| self.labels[v]).collect(),
            num_classes: self.num_classes,
            train_mask: keep.iter().map(|&v| self.train_mask[v]).collect(),
            val_mask: keep.iter().map(|&v| self.val_mask[v]).collect(),
            test_mask: keep.iter().map(|&v| self.test_mask[v]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(edges: &[(usize, usize)], n: usize) -> Dataset {
        Dataset {
            graph: SparseGraph::from_edges(edges, n).unwrap(),
            features: Array2::zeros((n, 2)),
            labels: vec![0; n],
            num_classes: 2,
            train_mask: vec![false; n],
            val_mask: vec![false; n],
            test_mask: vec![false; n],
        }
    }

    #[test]
    fn validate_catches_overlapping_masks() {
        let mut ds = tiny(&[(0, 1)], 2);
        ds.train_mask[0] = true;
        ds.test_mask[0] = true;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn validate_catches_unknown_label_in_train() {
        let mut ds = tiny(&[(0, 1)], 2);
        ds.labels[1] = -1;
        ds.train_mask[1] = true;
        assert!(ds.validate().is_err());
    }

    #[test]
    fn lcc_keeps_largest_component() {
        // Components: {0,1,2} and {3,4}.
        let mut ds = tiny(&[(0, 1), (1, 2), (3, 4)], 5);
        ds.labels = vec![0, 1, 0, 1, 0];
        ds.test_mask[2] = true;
        let lcc = ds.largest_connected_component();
        assert_eq!(lcc.num_nodes(), 3);
        assert_eq!(lcc.labels, vec![0, 1, 0]);
        assert_eq!(lcc.test_mask, vec![false, false, true]);
        assert_eq!(lcc.graph.num_edges(), 2);
    }

    #[test]
    fn lcc_tie_goes_to_smallest_id() {
        // Two components of size 2; the one holding node 0 wins.
        let ds = tiny(&[(0, 3), (1, 2)], 4);
        let lcc = ds.largest_connected_component();
        assert_eq!(lcc.num_nodes(), 2);
        // Survivors are original nodes 0 and 3.
        assert!(lcc.graph.has_edge(0, 1));
    }
}
