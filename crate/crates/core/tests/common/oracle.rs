//! Direct-enumeration references for the vectorised kernels, and sweeps that
//! compare the two on random instances.

use nlgnn::graph::{homophily, Graph};
use nlgnn::layers::closed_neighborhoods;
use nlgnn::tensor::{conv1d_forward, full_attention_forward, gat_attention_weights, Tensor};
use rand::Rng;

use super::{random_graph, rng, uniform};

/// Largest deviation seen over `instances` random cases. A disagreement about
/// whether the quantity exists counts as an infinite deviation.
#[derive(Clone, Copy, Debug)]
pub struct Sweep {
    pub instances: usize,
    pub max_error: f64,
}

impl Sweep {
    fn new() -> Self {
        Sweep {
            instances: 0,
            max_error: 0.0,
        }
    }

    fn record(&mut self, err: f64) {
        self.max_error = self.max_error.max(if err.is_nan() { f64::INFINITY } else { err });
    }
}

pub fn brute_homophily(g: &Graph) -> Option<f64> {
    let y = g.labels();
    let mut fractions = Vec::new();
    for v in 0..g.n() {
        let nbrs: Vec<usize> = (0..g.n()).filter(|&u| g.edges().contains(&(v.min(u), v.max(u))) && u != v).collect();
        if !nbrs.is_empty() {
            fractions.push(nbrs.iter().filter(|&&u| y[u] == y[v]).count() as f64 / nbrs.len() as f64);
        }
    }
    (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64)
}

pub fn brute_conv(seq: &Tensor, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (n, f) = (seq.shape()[0], seq.shape()[1]);
    let (k, g) = (kernel.shape()[0], kernel.shape()[2]);
    let half = (k as isize - 1) / 2;
    let mut out = vec![0.0; n * g];
    for i in 0..n {
        for o in 0..g {
            let mut acc = bias.data()[o];
            for t in 0..k {
                let src = i as isize + t as isize - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                for c in 0..f {
                    acc += seq.get(src as usize, c) * kernel.data()[(t * f + c) * g + o];
                }
            }
            out[i * g + o] = acc;
        }
    }
    out
}

pub fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.2 * x
    }
}

pub fn brute_attention(z: &Tensor) -> Vec<f64> {
    let (n, f) = (z.shape()[0], z.shape()[1]);
    let mut out = vec![0.0; n * f];
    for v in 0..n {
        let s: Vec<f64> = (0..n).map(|u| (0..f).map(|j| z.get(v, j) * z.get(u, j)).sum()).collect();
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = s.iter().map(|x| (x - m).exp()).sum();
        for u in 0..n {
            let w = (s[u] - m).exp() / denom;
            for j in 0..f {
                out[v * f + j] += w * z.get(u, j);
            }
        }
    }
    out
}

/// Also checks the result lies in `[0, 1]`.
pub fn homophily_sweep(seed: u64, count: usize) -> Sweep {
    let mut r = rng(seed);
    let mut sweep = Sweep::new();
    for _ in 0..count {
        let n = r.random_range(1..=12);
        let classes = r.random_range(1..=3);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.random::<f64>() < 0.3 {
                    edges.push((u, v));
                }
            }
        }
        let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
        let g = Graph::from_edges(&edges, Tensor::zeros(&[n, 1]), labels, classes).unwrap();
        sweep.instances += 1;
        match (homophily(&g), brute_homophily(&g)) {
            (Ok(h), Some(b)) if (0.0..=1.0).contains(&h) => sweep.record((h - b).abs()),
            (Err(_), None) => {}
            _ => sweep.record(f64::INFINITY),
        }
    }
    sweep
}

pub fn conv1d_sweep(seed: u64, count: usize) -> Sweep {
    let mut r = rng(seed);
    let mut sweep = Sweep::new();
    for _ in 0..count {
        let (n, f, g) = (r.random_range(1..=16), r.random_range(1..=4), r.random_range(1..=4));
        let k = [1, 3, 5][r.random_range(0..3)];
        let seq = uniform(&[n, f], &mut r);
        let kernel = uniform(&[k, f, g], &mut r);
        let bias = uniform(&[g], &mut r);
        let got = conv1d_forward(&seq, &kernel, &bias).unwrap();
        sweep.instances += 1;
        for (a, b) in got.data().iter().zip(brute_conv(&seq, &kernel, &bias)) {
            sweep.record((a - b).abs());
        }
    }
    sweep
}

/// Every attention weight against a softmax over the closed neighborhood,
/// plus the deviation of each row sum from one.
pub fn gat_sweep(seed: u64, count: usize) -> Sweep {
    let mut r = rng(seed);
    let mut sweep = Sweep::new();
    for _ in 0..count {
        let n = r.random_range(1..=10);
        let g = random_graph(n.max(3), 1, 0.4, 1, &mut r);
        let n = g.n();
        let adj = closed_neighborhoods(&g);
        let (heads, hd) = (r.random_range(1..=3), r.random_range(1..=3));
        let h = uniform(&[n, heads * hd], &mut r);
        let src = uniform(&[heads, hd], &mut r);
        let dst = uniform(&[heads, hd], &mut r);
        let alpha = gat_attention_weights(&adj, &h, &src, &dst, 0.2).unwrap();
        let dot = |row: usize, head: usize, a: &Tensor| -> f64 {
            (0..hd).map(|j| h.get(row, head * hd + j) * a.get(head, j)).sum()
        };
        sweep.instances += 1;
        for head in 0..heads {
            for v in 0..n {
                let range = adj.row_range(v);
                let scores: Vec<f64> = adj.cols()[range.clone()]
                    .iter()
                    .map(|&u| leaky(dot(u, head, &src) + dot(v, head, &dst)))
                    .collect();
                let denom: f64 = scores.iter().map(|s| s.exp()).sum();
                let mut row_sum = 0.0;
                for (e, s) in range.zip(&scores) {
                    let a = alpha[head * adj.nnz() + e];
                    sweep.record((a - s.exp() / denom).abs());
                    row_sum += a;
                }
                sweep.record((row_sum - 1.0).abs());
            }
        }
    }
    sweep
}

pub fn full_attention_sweep(seed: u64, count: usize) -> Sweep {
    let mut r = rng(seed);
    let mut sweep = Sweep::new();
    for _ in 0..count {
        let (n, f) = (r.random_range(1..=8), r.random_range(1..=4));
        let z = uniform(&[n, f], &mut r);
        let got = full_attention_forward(&z).unwrap();
        sweep.instances += 1;
        for (a, b) in got.data().iter().zip(brute_attention(&z)) {
            sweep.record((a - b).abs());
        }
    }
    sweep
}
