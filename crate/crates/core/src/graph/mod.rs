//! Node-attributed undirected graphs and the statistics computed on them.

mod homophily;
pub mod io;
mod permutation;
mod split;
mod synthetic;

pub use homophily::{homophily, label_run_length, reconnected_homophily};
pub use permutation::Permutation;
pub use split::{split_nodes, Split, SplitRatios, TestNodes};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Immutable graph with symmetric CSR adjacency, node features and labels.
///
/// Self-loops are never stored; encoders add the self contribution explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped.
    pub fn from_edges(
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if features.shape().len() != 2 || features.rows() != n {
            return Err(Error::Shape {
                op: "graph features",
                lhs: features.shape().to_vec(),
                rhs: vec![n],
            });
        }
        if num_classes == 0 {
            return Err(Error::Config("graph needs at least one class".into()));
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Config(format!(
                "label {y} of node {v} outside [0,{num_classes})"
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Contract(format!("edge ({u},{v}) references a node outside 0..{n}")));
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Ok(Self {
            offsets,
            targets,
            features,
            labels,
            num_classes,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Renumbers nodes so that old node `v` becomes `new_id[v]`.
    pub fn relabel(&self, new_id: &[usize]) -> Result<Self> {
        let perm = Permutation::from_inverse(new_id.to_vec())?;
        if perm.len() != self.n() {
            return Err(Error::Contract(format!(
                "relabeling of length {} for a graph of {} nodes",
                perm.len(),
                self.n()
            )));
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(u, v)| (new_id[u], new_id[v])).collect();
        let features = self.features.gather_rows(perm.order());
        let labels = perm.order().iter().map(|&old| self.labels[old]).collect();
        Self::from_edges(&edges, features, labels, self.num_classes)
    }
}
