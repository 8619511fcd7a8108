use crate::error::{Error, Result};

/// Bijection between sorted positions and node indices.
///
/// `order[i]` is the node at position `i`; `inverse[v]` is the position of node `v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let inverse = invert(&order)?;
        Ok(Self { order, inverse })
    }

    pub fn from_inverse(inverse: Vec<usize>) -> Result<Self> {
        let order = invert(&inverse)?;
        Ok(Self { order, inverse })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }
}

fn invert(map: &[usize]) -> Result<Vec<usize>> {
    let n = map.len();
    let mut inv = vec![usize::MAX; n];
    for (i, &v) in map.iter().enumerate() {
        if v >= n || inv[v] != usize::MAX {
            return Err(Error::Contract(format!("not a permutation of 0..{n}: entry {v} at {i}")));
        }
        inv[v] = i;
    }
    Ok(inv)
}
