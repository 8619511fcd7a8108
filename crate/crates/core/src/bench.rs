//! Per-epoch timing, sorted-path versus dense-attention scaling, and the
//! sorted-sequence export.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{homophily, label_run_length, reconnected_homophily, split_nodes, Graph, SplitRatios};
use crate::layers::{glorot, GraphContext};
use crate::model::{infer, ModelParams, Variant};
use crate::nonlocal::{attention_scores, full_attention_baseline, nonlocal_aggregate, sort_permutation};
use crate::tensor::{Tape, Tensor};
use crate::training::{train, TrainConfig};

/// Epochs excluded from every per-epoch mean.
pub const WARMUP_EPOCHS: usize = 10;
pub const DEFAULT_SIZES: [usize; 4] = [1024, 2048, 4096, 8192];

/// Where and how a measurement was taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub threads: usize,
    pub available_parallelism: usize,
    pub profile: String,
    pub os: String,
    pub arch: String,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            threads: 1,
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTiming {
    pub variant: Variant,
    pub ms_per_epoch: f64,
    /// `ms_per_epoch` relative to GCN.
    pub slowdown: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub epochs: usize,
    pub warmup: usize,
    pub timings: Vec<ModelTiming>,
    pub environment: Environment,
}

impl BenchReport {
    pub fn get(&self, v: Variant) -> Option<&ModelTiming> {
        self.timings.iter().find(|t| t.variant == v)
    }
}

/// Trains each configuration for `epochs` epochs on one split and reports the
/// mean step time after warm-up. GCN is always measured as the reference.
pub fn bench_runtime(g: &Graph, cfgs: &[TrainConfig], epochs: usize) -> Result<BenchReport> {
    let Some(first) = cfgs.first() else {
        return Err(Error::Config("bench needs at least one model".into()));
    };
    if epochs <= WARMUP_EPOCHS {
        return Err(Error::Config(format!(
            "bench needs more than {WARMUP_EPOCHS} epochs, got {epochs}"
        )));
    }
    let mut cfgs = cfgs.to_vec();
    if !cfgs.iter().any(|c| c.variant == Variant::Gcn) {
        cfgs.insert(0, first.with_variant(Variant::Gcn));
    }
    let split = split_nodes(g, SplitRatios::default(), first.seed)?;
    let mut measured = Vec::with_capacity(cfgs.len());
    for cfg in &cfgs {
        let cfg = TrainConfig {
            max_epochs: epochs,
            ..*cfg
        };
        let r = train(g, &split, &cfg)?.result;
        measured.push((cfg.variant, r.mean_epoch_ms(WARMUP_EPOCHS), r.test_accuracy));
    }
    let gcn_ms = measured
        .iter()
        .find(|(v, _, _)| *v == Variant::Gcn)
        .map(|m| m.1)
        .expect("GCN is always measured");
    let timings = measured
        .into_iter()
        .map(|(variant, ms, acc)| ModelTiming {
            variant,
            ms_per_epoch: ms,
            slowdown: ms / gcn_ms,
            test_accuracy: acc,
        })
        .collect();
    Ok(BenchReport {
        epochs,
        warmup: WARMUP_EPOCHS,
        timings,
        environment: Environment::current(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub f: usize,
    pub kernel_size: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Sizes whose dense baseline would exceed this many bytes are skipped.
    pub memory_limit_bytes: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            f: 16,
            kernel_size: 3,
            repeats: 5,
            seed: 0,
            memory_limit_bytes: 1 << 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub sorted_ms: f64,
    pub baseline_ms: Option<f64>,
    pub annotation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
    pub sorted_slope: f64,
    pub baseline_slope: Option<f64>,
    pub environment: Environment,
}

impl ScalingReport {
    pub fn row(&self, n: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.n == n)
    }

    /// Baseline time over sorted-path time at size `n`.
    pub fn speedup(&self, n: usize) -> Option<f64> {
        self.row(n).and_then(|r| r.baseline_ms.map(|b| b / r.sorted_ms))
    }
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn loglog_slope(points: &[(usize, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn uniform(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    t
}

struct SortedInputs {
    z: Tensor,
    c: Tensor,
    convs: Vec<(Tensor, Tensor)>,
}

/// One forward and backward pass of score, sort, scale and the two-layer
/// conv stack, in milliseconds.
fn time_sorted(inp: &SortedInputs) -> Result<f64> {
    let start = Instant::now();
    let mut tape = Tape::new();
    let z = tape.leaf(inp.z.clone());
    let c = tape.leaf(inp.c.clone());
    let convs: Vec<_> = inp
        .convs
        .iter()
        .map(|(k, b)| (tape.leaf(k.clone()), tape.leaf(b.clone())))
        .collect();
    let scores = attention_scores(&mut tape, z, c)?;
    let perm = sort_permutation(tape.value(scores).data())?;
    let zhat = nonlocal_aggregate(&mut tape, z, scores, &perm, &convs)?;
    let loss = tape.sum(zhat);
    let grads = tape.backward(loss)?;
    std::hint::black_box(grads.get(z));
    Ok(start.elapsed().as_secs_f64() * 1e3)
}

/// Passes are repeated until at least this much time accumulates, so one
/// sample of a millisecond-scale pass is not dominated by timer and allocator noise.
const MIN_SAMPLE_MS: f64 = 25.0;

fn sample(mut pass: impl FnMut() -> Result<f64>) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0);
    while total < MIN_SAMPLE_MS {
        total += pass()?;
        count += 1;
    }
    Ok(total / count as f64)
}

fn time_baseline(z: &Tensor) -> Result<f64> {
    let start = Instant::now();
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let o = full_attention_baseline(&mut tape, zv)?;
    let loss = tape.sum(o);
    let grads = tape.backward(loss)?;
    std::hint::black_box(grads.get(zv));
    Ok(start.elapsed().as_secs_f64() * 1e3)
}

/// Forward+backward time of the sorted path and the dense baseline on random
/// embeddings for each size, with log-log slopes. Each of `repeats` rounds
/// samples every size in turn, so drift in machine load hits all sizes alike,
/// and the fastest sample per size is kept.
pub fn scaling_experiment(cfg: &ScalingConfig) -> Result<ScalingReport> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("scaling sizes must be nonempty and strictly increasing".into()));
    }
    if cfg.repeats == 0 || cfg.f == 0 {
        return Err(Error::Config("repeats and f must be positive".into()));
    }
    if cfg.kernel_size % 2 == 0 {
        return Err(Error::Config(format!("kernel size must be odd, got {}", cfg.kernel_size)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (f, k) = (cfg.f, cfg.kernel_size);
    let inputs: Vec<SortedInputs> = cfg
        .sizes
        .iter()
        .map(|&n| SortedInputs {
            z: uniform(&[n, f], &mut rng),
            c: uniform(&[f], &mut rng),
            convs: (0..2)
                .map(|_| (glorot(&[k, f, f], k * f, k * f, &mut rng), Tensor::zeros(&[f])))
                .collect(),
        })
        .collect();
    // Dense attention keeps O(nf) state: z, output, gradient and one attention row.
    let dense_ok: Vec<bool> = cfg
        .sizes
        .iter()
        .map(|&n| 8 * (4 * n * f + n) <= cfg.memory_limit_bytes)
        .collect();
    time_sorted(&inputs[0])?;
    let mut sorted_ms = vec![f64::INFINITY; inputs.len()];
    let mut dense_ms = vec![f64::INFINITY; inputs.len()];
    for _ in 0..cfg.repeats {
        for (i, inp) in inputs.iter().enumerate() {
            sorted_ms[i] = sorted_ms[i].min(sample(|| time_sorted(inp))?);
            if dense_ok[i] {
                dense_ms[i] = dense_ms[i].min(sample(|| time_baseline(&inp.z))?);
            }
        }
    }
    let rows: Vec<ScalingRow> = cfg
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| ScalingRow {
            n,
            sorted_ms: sorted_ms[i],
            baseline_ms: dense_ok[i].then_some(dense_ms[i]),
            annotation: (!dense_ok[i]).then(|| {
                format!(
                    "baseline skipped: needs ~{} bytes, limit {}",
                    8 * (4 * n * f + n),
                    cfg.memory_limit_bytes
                )
            }),
        })
        .collect();
    let sorted: Vec<_> = rows.iter().map(|r| (r.n, r.sorted_ms)).collect();
    let base: Vec<_> = rows.iter().filter_map(|r| r.baseline_ms.map(|t| (r.n, t))).collect();
    Ok(ScalingReport {
        config: cfg.clone(),
        sorted_slope: loglog_slope(&sorted).unwrap_or(f64::NAN),
        baseline_slope: loglog_slope(&base),
        rows,
        environment: Environment::current(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortedRow {
    pub position: usize,
    pub node: usize,
    pub score: f64,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SortedExport {
    pub rows: Vec<SortedRow>,
    pub homophily: f64,
    pub reconnected_homophily: f64,
    pub half_width: usize,
    pub run_length: f64,
    /// Median label-run length over random shuffles of the same labels.
    pub shuffled_run_length: f64,
}

pub const SHUFFLES: usize = 100;

/// Sorted sequence of a trained non-local model with the homophily of the
/// graph and of its re-connected counterpart. `half_width` defaults to the
/// receptive half-width of the conv stack.
pub fn export_sorted(g: &Graph, params: &ModelParams, half_width: Option<usize>, seed: u64) -> Result<SortedExport> {
    let nl = params
        .nonlocal
        .as_ref()
        .ok_or_else(|| Error::Params(format!("variant {} has no calibration vector", params.config.variant)))?;
    let ctx = GraphContext::new(g);
    let out = infer(&ctx, params)?;
    let (scores, perm) = match (out.scores, out.perm) {
        (Some(s), Some(p)) => (s, p),
        _ => return Err(Error::Params("model produced no attention scores".into())),
    };
    let labels = g.labels();
    let rows = perm
        .order()
        .iter()
        .enumerate()
        .map(|(position, &node)| SortedRow {
            position,
            node,
            score: scores.data()[node],
            label: labels[node],
        })
        .collect();
    let s = half_width.unwrap_or(nl.receptive_half_width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..g.n()).collect();
    let shuffled = (0..SHUFFLES)
        .map(|_| {
            order.shuffle(&mut rng);
            label_run_length(labels, &order)
        })
        .collect();
    Ok(SortedExport {
        rows,
        homophily: homophily(g)?,
        reconnected_homophily: reconnected_homophily(labels, &perm, s)?,
        half_width: s,
        run_length: label_run_length(labels, perm.order()),
        shuffled_run_length: median(shuffled),
    })
}
