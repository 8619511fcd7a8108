use super::{Graph, Permutation};
use crate::error::{Error, Result};

/// Mean over non-isolated nodes of the fraction of neighbours that share the
/// node's label.
pub fn homophily(g: &Graph) -> Result<f64> {
    let labels = g.labels();
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..g.n() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&u| labels[u] == labels[v]).count();
        total += same as f64 / nbrs.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::UndefinedMetric("every node is isolated".into()));
    }
    Ok(total / counted as f64)
}

/// Homophily of the graph in which the node at sorted position `i` is joined
/// to positions `i-s ..= i+s` (clipped to the sequence, excluding itself).
pub fn reconnected_homophily(labels: &[usize], perm: &Permutation, half_width: usize) -> Result<f64> {
    if half_width == 0 {
        return Err(Error::Config("receptive half-width must be positive".into()));
    }
    let n = labels.len();
    if perm.len() != n {
        return Err(Error::Contract(format!(
            "permutation of length {} for {n} labels",
            perm.len()
        )));
    }
    if n < 2 {
        return Err(Error::UndefinedMetric("re-connected graph needs at least 2 nodes".into()));
    }
    let seq: Vec<usize> = perm.order().iter().map(|&v| labels[v]).collect();
    let mut total = 0.0;
    for i in 0..n {
        let lo = i.saturating_sub(half_width);
        let hi = (i + half_width).min(n - 1);
        let same = (lo..=hi).filter(|&j| j != i && seq[j] == seq[i]).count();
        total += same as f64 / (hi - lo) as f64;
    }
    Ok(total / n as f64)
}

/// Mean length of maximal runs of equal labels along `order`.
pub fn label_run_length(labels: &[usize], order: &[usize]) -> f64 {
    if order.is_empty() {
        return 0.0;
    }
    let runs = 1 + order.windows(2).filter(|w| labels[w[0]] != labels[w[1]]).count();
    order.len() as f64 / runs as f64
}
