use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of the two-block-probability synthetic graph generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub classes: usize,
    /// Target expected homophily in `[0, 1]`.
    pub homophily: f64,
    pub dim: usize,
    pub mean_degree: f64,
    /// Probability that a feature entry is replaced by a fair coin flip.
    pub feature_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, classes: usize, homophily: f64) -> Self {
        Self {
            n,
            classes,
            homophily,
            dim: 4 * classes,
            mean_degree: 10.0,
            feature_noise: 0.5,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Generation(msg));
        if self.classes == 0 || self.n < 10 * self.classes {
            return fail(format!("need n >= 10·classes, got n={} classes={}", self.n, self.classes));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return fail(format!("target homophily {} outside [0,1]", self.homophily));
        }
        if self.dim < self.classes {
            return fail(format!("feature dim {} smaller than class count {}", self.dim, self.classes));
        }
        if !(0.0..=1.0).contains(&self.feature_noise) {
            return fail(format!("feature noise {} outside [0,1]", self.feature_noise));
        }
        if !(self.mean_degree.is_finite() && self.mean_degree > 0.0) {
            return fail(format!("mean degree must be positive, got {}", self.mean_degree));
        }
        Ok(())
    }
}

/// Appends `(i, j)` pairs of one block, each present independently with
/// probability `p`, using geometric skips along each row.
fn sample_block(
    rng: &mut ChaCha8Rng,
    rows: &[usize],
    cols: &[usize],
    triangular: bool,
    p: f64,
    out: &mut Vec<(usize, usize)>,
) {
    if p <= 0.0 {
        return;
    }
    let log_q = (1.0 - p).ln();
    for (ri, &u) in rows.iter().enumerate() {
        let start = if triangular { ri + 1 } else { 0 };
        let mut j = start;
        loop {
            if p < 1.0 {
                let r: f64 = rng.random();
                let skip = ((1.0 - r).ln() / log_q).floor();
                if !skip.is_finite() || skip >= (cols.len() - j.min(cols.len())) as f64 {
                    break;
                }
                j += skip as usize;
            }
            if j >= cols.len() {
                break;
            }
            out.push((u, cols[j]));
            j += 1;
        }
    }
}

/// Generates a labelled graph whose expected homophily is `spec.homophily`.
///
/// Labels are balanced across classes. Same-class and cross-class pairs are
/// joined with probabilities chosen so the expected mean degree is
/// `spec.mean_degree` and the expected same-label share of edges equals the
/// target. Features are the class one-hot tiled across `dim` coordinates,
/// with each entry replaced by a coin flip at rate `feature_noise`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Graph> {
    spec.validate()?;
    let (n, c) = (spec.n, spec.classes);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (v, &y) in labels.iter().enumerate() {
        members[y].push(v);
    }

    let within_pairs: f64 = members.iter().map(|m| (m.len() * (m.len() - 1) / 2) as f64).sum();
    let all_pairs = (n * (n - 1) / 2) as f64;
    let between_pairs = all_pairs - within_pairs;
    let expected_edges = spec.mean_degree * n as f64 / 2.0;
    let want_in = spec.homophily * expected_edges;
    let want_out = (1.0 - spec.homophily) * expected_edges;
    let p_in = if want_in > 0.0 { want_in / within_pairs } else { 0.0 };
    let p_out = if want_out > 0.0 {
        if between_pairs == 0.0 {
            f64::INFINITY
        } else {
            want_out / between_pairs
        }
    } else {
        0.0
    };
    if p_in > 1.0 || p_out > 1.0 {
        return Err(Error::Generation(format!(
            "mean degree {} with homophily {} needs edge probabilities {p_in:.3} (within) / {p_out:.3} (between)",
            spec.mean_degree, spec.homophily
        )));
    }

    let mut edges = Vec::new();
    for a in 0..c {
        sample_block(&mut rng, &members[a], &members[a], true, p_in, &mut edges);
        for b in a + 1..c {
            sample_block(&mut rng, &members[a], &members[b], false, p_out, &mut edges);
        }
    }

    let d = spec.dim;
    let mut data = Vec::with_capacity(n * d);
    for &y in &labels {
        for j in 0..d {
            let proto = if j % c == y { 1.0 } else { 0.0 };
            let x = if rng.random::<f64>() < spec.feature_noise {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            } else {
                proto
            };
            data.push(x);
        }
    }
    let features = Tensor::matrix(n, d, data)?;
    Graph::from_edges(&edges, features, labels, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily;

    #[test]
    fn extreme_targets_are_exact() {
        let mut spec = SyntheticSpec::new(300, 3, 1.0);
        spec.seed = 3;
        assert_eq!(homophily(&generate_synthetic(&spec).unwrap()).unwrap(), 1.0);
        spec.homophily = 0.0;
        assert_eq!(homophily(&generate_synthetic(&spec).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn low_target_is_hit() {
        let mut spec = SyntheticSpec::new(2000, 5, 0.1);
        spec.seed = 11;
        let g = generate_synthetic(&spec).unwrap();
        let h = homophily(&g).unwrap();
        assert!((0.05..=0.15).contains(&h), "{h}");
        let mean_degree = 2.0 * g.num_edges() as f64 / g.n() as f64;
        assert!((mean_degree - 10.0).abs() < 0.5, "{mean_degree}");
    }

    #[test]
    fn infeasible_density_is_rejected() {
        let mut spec = SyntheticSpec::new(50, 5, 1.0);
        spec.mean_degree = 20.0;
        assert!(matches!(generate_synthetic(&spec), Err(Error::Generation(_))));
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        assert!(generate_synthetic(&SyntheticSpec::new(40, 5, 0.5)).is_err());
    }

    #[test]
    fn noiseless_features_are_tiled_one_hot() {
        let mut spec = SyntheticSpec::new(50, 5, 0.5);
        spec.feature_noise = 0.0;
        spec.dim = 10;
        let g = generate_synthetic(&spec).unwrap();
        for v in 0..g.n() {
            let y = g.labels()[v];
            for (j, &x) in g.features().row(v).iter().enumerate() {
                assert_eq!(x, if j % 5 == y { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(g.class_counts(), vec![10; 5]);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec::new(200, 4, 0.3);
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
    }
}
