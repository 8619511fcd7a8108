#![allow(dead_code)]

pub mod oracle;

use nlgnn::graph::Graph;
use nlgnn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    t
}

/// Erdős–Rényi graph with uniform random features and labels; every class
/// gets at least three nodes so it can be split.
pub fn random_graph(n: usize, classes: usize, p: f64, d: usize, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n)
        .map(|v| if v < 3 * classes { v % classes } else { rng.random_range(0..classes) })
        .collect();
    Graph::from_edges(&edges, uniform(&[n, d], rng), labels, classes).unwrap()
}

use std::sync::Arc;

use nlgnn::gradcheck::{check_gradients, check_model_gradients, GradCheckReport};
use nlgnn::layers::{GraphContext, Mode};
use nlgnn::model::{ModelConfig, ModelParams, Variant};
use nlgnn::tensor::{SparseAdj, Tape, Var};
use nlgnn::Result;

pub const EPS: f64 = 1e-5;

pub const OPS: [&str; 19] = [
    "matmul",
    "matvec",
    "add",
    "mul",
    "add_row",
    "relu",
    "leaky_relu",
    "log",
    "scale_rows",
    "concat_cols",
    "dropout",
    "softmax_rows",
    "sum",
    "permute_rows",
    "conv1d",
    "spmm",
    "gat",
    "full_attention",
    "softmax_cross_entropy",
];

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
fn project(tape: &mut Tape, out: Var, rng: &mut impl Rng) -> Result<Var> {
    let r = uniform(tape.value(out).shape(), rng);
    let r = tape.constant(r);
    let p = tape.mul(out, r)?;
    Ok(tape.sum(p))
}

fn random_adj(n: usize, rng: &mut impl Rng, closed: bool) -> Arc<SparseAdj> {
    let mut offsets = vec![0];
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for v in 0..n {
        for u in 0..n {
            if (closed && u == v) || (u != v && rng.random::<f64>() < 0.4) {
                cols.push(u);
                weights.push(if closed { 1.0 } else { rng.random_range(0.1..1.0) });
            }
        }
        offsets.push(cols.len());
    }
    Arc::new(SparseAdj::new(n, offsets, cols, weights).unwrap())
}

/// Finite-difference check of a single tape operation on random inputs.
pub fn check_op(op: &str, seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let (n, f) = (r.random_range(2..7), r.random_range(1..5));
    let a = uniform(&[n, f], &mut r);
    let proj_seed: u64 = r.random();
    let inputs: Vec<Tensor> = match op {
        "matmul" => vec![a, uniform(&[f, 3], &mut r)],
        "matvec" | "add_row" => vec![a, uniform(&[f], &mut r)],
        "add" | "mul" => vec![a.clone(), uniform(&[n, f], &mut r)],
        "log" => {
            let mut pos = a;
            pos.data_mut().iter_mut().for_each(|x| *x = x.abs() + 0.5);
            vec![pos]
        }
        "scale_rows" => vec![a, uniform(&[n], &mut r)],
        "concat_cols" => vec![a, uniform(&[n, 2], &mut r)],
        "conv1d" => {
            let k = [1, 3, 5][r.random_range(0..3)];
            vec![a, uniform(&[k, f, 2], &mut r), uniform(&[2], &mut r)]
        }
        "gat" => {
            let heads = r.random_range(1..3);
            vec![
                uniform(&[n, heads * f], &mut r),
                uniform(&[heads, f], &mut r),
                uniform(&[heads, f], &mut r),
            ]
        }
        "softmax_cross_entropy" => vec![uniform(&[n, 3], &mut r)],
        _ => vec![a],
    };
    let perm: Arc<[usize]> = {
        let mut p: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(p.as_mut_slice(), &mut r);
        p.into()
    };
    let adj = random_adj(n, &mut r, op == "gat");
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let mask: Vec<usize> = (0..n).filter(|v| v % 2 == 0).collect();
    let drop_seed: u64 = r.random();
    check_gradients(&inputs, EPS, |t, x| {
        let out = match op {
            "matmul" => t.matmul(x[0], x[1])?,
            "matvec" => t.matvec(x[0], x[1])?,
            "add" => t.add(x[0], x[1])?,
            "mul" => t.mul(x[0], x[1])?,
            "add_row" => t.add_row(x[0], x[1])?,
            "relu" => t.relu(x[0]),
            "leaky_relu" => t.leaky_relu(x[0], 0.2),
            "log" => t.log(x[0])?,
            "scale_rows" => t.scale_rows(x[0], x[1])?,
            "concat_cols" => t.concat_cols(&[x[0], x[1]])?,
            "dropout" => t.dropout(x[0], 0.5, drop_seed)?,
            "softmax_rows" => t.softmax_rows(x[0])?,
            "sum" => t.sum(x[0]),
            "permute_rows" => t.permute_rows(x[0], Arc::clone(&perm))?,
            "conv1d" => t.conv1d(x[0], x[1], x[2])?,
            "spmm" => t.spmm(&adj, x[0])?,
            "gat" => t.gat(&adj, x[0], x[1], x[2], 0.2)?,
            "full_attention" => t.full_attention(x[0])?,
            "softmax_cross_entropy" => return t.softmax_cross_entropy(x[0], &labels, &mask),
            other => panic!("unknown op {other}"),
        };
        project(t, out, &mut rng(proj_seed))
    })
    .unwrap()
}

pub fn model_config(variant: Variant, kernel_size: usize) -> ModelConfig {
    ModelConfig {
        variant,
        hidden: 16,
        dropout: 0.5,
        kernel_size,
    }
}

/// Finite-difference check of the full training loss of one model variant on
/// a random graph with at most 64 nodes, dropout active.
pub fn check_variant(variant: Variant, seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let n = r.random_range(12..=24);
    let g = random_graph(n, 3, 0.2, 4, &mut r);
    let ctx = GraphContext::new(&g);
    let k = [3, 5][r.random_range(0..2)];
    let mut params = ModelParams::init(model_config(variant, k), 4, 3, seed).unwrap();
    // Move off the zero-bias initialisation, where ReLU inputs can sit exactly on the kink.
    for (_, t) in params.named_mut() {
        t.data_mut().iter_mut().for_each(|x| *x += r.random_range(-0.1..0.1));
    }
    let mask: Vec<usize> = (0..n).filter(|v| v % 3 != 0).collect();
    check_model_gradients(&ctx, g.labels(), &mask, &params, Mode::Train { seed }, EPS).unwrap()
}

/// Outcome of one relabeling experiment.
pub enum Equivariance {
    Exact,
    Mismatch(String),
    /// Tied scores; the instance does not qualify.
    Tied,
}

/// Logits of a random model on a random graph versus the same model on the
/// graph with nodes renumbered by a random permutation.
pub fn equivariance_case(variant: Variant, seed: u64) -> Equivariance {
    use nlgnn::model::infer;
    let mut r = rng(seed);
    let n = r.random_range(5..=40);
    let g = random_graph(n, 3, 0.15, 5, &mut r);
    let params = ModelParams::init(model_config(variant, [3, 5][r.random_range(0..2)]), 5, 3, seed).unwrap();
    let mut new_id: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(new_id.as_mut_slice(), &mut r);
    let h = g.relabel(&new_id).unwrap();
    let a = infer(&GraphContext::new(&g), &params).unwrap();
    let b = infer(&GraphContext::new(&h), &params).unwrap();
    if let Some(s) = &a.scores {
        let mut sorted = s.data().to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Equivariance::Tied;
        }
    }
    for v in 0..n {
        if a.logits.row(v) != b.logits.row(new_id[v]) {
            return Equivariance::Mismatch(format!(
                "{variant} seed {seed}: node {v} -> {}: {:?} vs {:?}",
                new_id[v],
                a.logits.row(v),
                b.logits.row(new_id[v])
            ));
        }
    }
    Equivariance::Exact
}
