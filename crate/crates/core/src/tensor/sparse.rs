use crate::error::{Error, Result};

/// Row-compressed sparse matrix with fixed (non-learnable) weights.
///
/// Row `v` lists the nodes aggregated into `v`; for the graph encoders this is
/// the closed neighbourhood `N(v) ∪ {v}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdj {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseAdj {
    pub fn new(n: usize, offsets: Vec<usize>, cols: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if offsets.len() != n + 1 || offsets[0] != 0 {
            return Err(Error::Contract(format!(
                "sparse offsets must have length n+1={} and start at 0",
                n + 1
            )));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) || offsets[n] != cols.len() {
            return Err(Error::Contract("sparse offsets must be nondecreasing and end at nnz".into()));
        }
        if cols.len() != weights.len() {
            return Err(Error::Contract("sparse cols and weights differ in length".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= n) {
            return Err(Error::Contract(format!("sparse column {c} out of range for n={n}")));
        }
        Ok(Self {
            n,
            offsets,
            cols,
            weights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_range(&self, v: usize) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }

    /// Weight of entry `(v, u)`, or 0 when absent.
    pub fn weight(&self, v: usize, u: usize) -> f64 {
        self.row_range(v)
            .find(|&e| self.cols[e] == u)
            .map_or(0.0, |e| self.weights[e])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (v, row) in dense.iter_mut().enumerate() {
            for e in self.row_range(v) {
                row[self.cols[e]] += self.weights[e];
            }
        }
        dense
    }
}
