use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Held-out test nodes. Scoring against them goes through [`TestNodes::accuracy`],
/// which counts how often test labels were consulted.
#[derive(Debug)]
pub struct TestNodes {
    nodes: Vec<usize>,
    label_reads: AtomicUsize,
}

impl TestNodes {
    pub fn new(nodes: Vec<usize>) -> Self {
        Self {
            nodes,
            label_reads: AtomicUsize::new(0),
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Fraction of test nodes whose prediction matches the label.
    pub fn accuracy(&self, predictions: &[usize], labels: &[usize]) -> f64 {
        self.label_reads.fetch_add(1, Ordering::Relaxed);
        accuracy_on(&self.nodes, predictions, labels)
    }

    pub fn label_reads(&self) -> usize {
        self.label_reads.load(Ordering::Relaxed)
    }
}

impl Clone for TestNodes {
    fn clone(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            label_reads: AtomicUsize::new(self.label_reads()),
        }
    }
}

impl PartialEq for TestNodes {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

pub(crate) fn accuracy_on(nodes: &[usize], predictions: &[usize], labels: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes.iter().filter(|&&v| predictions[v] == labels[v]).count();
    hits as f64 / nodes.len() as f64
}

/// Disjoint train / validation / test node sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: TestNodes,
}

impl Split {
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>) -> Self {
        Self {
            train,
            val,
            test: TestNodes::new(test),
        }
    }

    /// Checks disjointness, range and that every class appears in train.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let mut seen = vec![false; g.n()];
        for &v in self.train.iter().chain(&self.val).chain(self.test.nodes()) {
            if v >= g.n() {
                return Err(Error::Split(format!("node {v} outside 0..{}", g.n())));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::Split(format!("node {v} appears in more than one set")));
            }
        }
        let mut in_train = vec![false; g.num_classes()];
        for &v in &self.train {
            in_train[g.labels()[v]] = true;
        }
        if let Some(c) = in_train.iter().position(|&b| !b) {
            return Err(Error::Split(format!("class {c} has no training node")));
        }
        Ok(())
    }
}

fn floor_share(ratio: f64, count: usize) -> usize {
    (ratio * count as f64 + 1e-9).floor() as usize
}

/// Stratified random split: per class, validation and test sizes are rounded
/// down and the remainder goes to train.
pub fn split_nodes(g: &Graph, ratios: SplitRatios, seed: u64) -> Result<Split> {
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r)) || (train + val + test - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be in [0,1] and sum to 1: {ratios:?}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); g.num_classes()];
    for (v, &y) in g.labels().iter().enumerate() {
        by_class[y].push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tr, mut va, mut te) = (Vec::new(), Vec::new(), Vec::new());
    for (c, nodes) in by_class.iter_mut().enumerate() {
        if nodes.len() < 3 {
            return Err(Error::Split(format!(
                "class {c} has {} node(s); at least 3 are required",
                nodes.len()
            )));
        }
        nodes.shuffle(&mut rng);
        let n_val = floor_share(val, nodes.len());
        let n_test = floor_share(test, nodes.len());
        let n_train = nodes.len() - n_val - n_test;
        tr.extend_from_slice(&nodes[..n_train]);
        va.extend_from_slice(&nodes[n_train..n_train + n_val]);
        te.extend_from_slice(&nodes[n_train + n_val..]);
    }
    tr.sort_unstable();
    va.sort_unstable();
    te.sort_unstable();
    let split = Split::new(tr, va, te);
    split.validate(g)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn classes(sizes: &[usize]) -> Graph {
        let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &k)| vec![c; k]).collect();
        let n = labels.len();
        Graph::from_edges(&[], Tensor::zeros(&[n, 1]), labels, sizes.len()).unwrap()
    }

    fn per_class(g: &Graph, nodes: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; g.num_classes()];
        for &v in nodes {
            counts[g.labels()[v]] += 1;
        }
        counts
    }

    #[test]
    fn ten_per_class_splits_six_two_two() {
        let g = classes(&[10, 10, 10]);
        let s = split_nodes(&g, SplitRatios::default(), 7).unwrap();
        assert_eq!(per_class(&g, &s.train), vec![6; 3]);
        assert_eq!(per_class(&g, &s.val), vec![2; 3]);
        assert_eq!(per_class(&g, s.test.nodes()), vec![2; 3]);
    }

    #[test]
    fn remainder_goes_to_train() {
        let g = classes(&[11]);
        let s = split_nodes(&g, SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 2, 2));
    }

    #[test]
    fn same_seed_same_split() {
        let g = classes(&[20, 13, 9]);
        let a = split_nodes(&g, SplitRatios::default(), 42).unwrap();
        let b = split_nodes(&g, SplitRatios::default(), 42).unwrap();
        let c = split_nodes(&g, SplitRatios::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_class_is_named() {
        let g = classes(&[10, 2]);
        let err = split_nodes(&g, SplitRatios::default(), 0).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn validate_catches_overlap() {
        let g = classes(&[3]);
        let s = Split::new(vec![0, 1], vec![1], vec![2]);
        assert!(s.validate(&g).is_err());
    }
}
