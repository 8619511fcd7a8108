//! Full-batch training, model selection and the tuning grid.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{split_nodes, Graph, Split, SplitRatios};
use crate::layers::{splitmix, GraphContext, Mode};
use crate::model::{forward, infer, predictions, ModelConfig, ModelParams, Variant};
use crate::tensor::{adam_step, AdamConfig, AdamState, Tape, Tensor};

pub const HIDDEN_GRID: [usize; 3] = [16, 48, 96];
pub const DROPOUT_GRID: [f64; 3] = [0.0, 0.5, 0.8];
pub const WEIGHT_DECAY_GRID: [f64; 4] = [0.0, 5e-4, 5e-5, 5e-6];
pub const LR_GRID: [f64; 2] = [0.01, 0.05];
pub const KERNEL_GRID: [usize; 2] = [3, 5];
pub const DEFAULT_EPOCHS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub lr: f64,
    pub kernel_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            hidden: 16,
            dropout: 0.5,
            weight_decay: 5e-4,
            lr: 0.01,
            kernel_size: 3,
            max_epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    /// Every hyperparameter must be a value of the tuning grid.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: String| Err(Error::Config(format!("{what} {v} is not on the tuning grid")));
        if !HIDDEN_GRID.contains(&self.hidden) {
            return bad("hidden width", self.hidden.to_string());
        }
        if !DROPOUT_GRID.contains(&self.dropout) {
            return bad("dropout", self.dropout.to_string());
        }
        if !WEIGHT_DECAY_GRID.contains(&self.weight_decay) {
            return bad("weight decay", self.weight_decay.to_string());
        }
        if !LR_GRID.contains(&self.lr) {
            return bad("learning rate", self.lr.to_string());
        }
        if !KERNEL_GRID.contains(&self.kernel_size) {
            return bad("kernel size", self.kernel_size.to_string());
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            hidden: self.hidden,
            dropout: self.dropout,
            kernel_size: self.kernel_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    /// 1-based epoch whose parameters were selected.
    pub best_epoch: usize,
    pub losses: Vec<f64>,
    /// Wall time of each training step (forward, backward, update).
    pub epoch_ms: Vec<f64>,
}

impl RunResult {
    /// Mean step time after discarding the first `warmup` epochs.
    pub fn mean_epoch_ms(&self, warmup: usize) -> f64 {
        let tail = self.epoch_ms.get(warmup..).filter(|t| !t.is_empty()).unwrap_or(&self.epoch_ms);
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub result: RunResult,
    pub params: ModelParams,
}

/// Trains on `split.train`, selects the epoch of maximum validation accuracy
/// (earliest on ties) and scores it once on the test nodes.
pub fn train(g: &Graph, split: &Split, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    split.validate(g)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Split("training and validation sets must be nonempty".into()));
    }
    let ctx = GraphContext::new(g);
    let labels = g.labels();
    let mut params = ModelParams::init(cfg.model(), g.feature_dim(), g.num_classes(), cfg.seed)?;
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::new(params.named().into_iter().map(|(_, t)| t));

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut losses = Vec::with_capacity(cfg.max_epochs);
    let mut epoch_ms = Vec::with_capacity(cfg.max_epochs);
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let mode = Mode::Train {
            seed: splitmix(cfg.seed ^ splitmix(epoch as u64)),
        };
        let out = forward(&mut tape, &ctx, &params, &vars, mode)?;
        let loss = tape.softmax_cross_entropy(out.logits, labels, &split.train)?;
        let loss_value = tape.value(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!("loss is {loss_value}"),
            });
        }
        let grads = tape.backward(loss)?;
        let shapes: Vec<Vec<usize>> = params.named().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let grads: Vec<Tensor> = vars
            .all()
            .into_iter()
            .zip(&shapes)
            .map(|(v, s)| grads.get_or_zeros(v, s))
            .collect();
        let mut named = params.named_mut();
        let mut slots: Vec<(&str, &mut Tensor)> = named.iter_mut().map(|(k, t)| (k.as_str(), &mut **t)).collect();
        adam_step(&mut slots, &grads.iter().collect::<Vec<_>>(), &mut state, &adam)?;
        epoch_ms.push(start.elapsed().as_secs_f64() * 1e3);
        losses.push(loss_value);

        let pred = predictions(&infer(&ctx, &params)?.logits);
        let val = accuracy(&split.val, &pred, labels);
        if best.as_ref().is_none_or(|(b, _, _)| val > *b) {
            best = Some((val, epoch, params.clone()));
        }
    }
    let (best_val_accuracy, best_epoch, params) = best.expect("at least one epoch ran");
    let pred = predictions(&infer(&ctx, &params)?.logits);
    let test_accuracy = split.test.accuracy(&pred, labels);
    Ok(Trained {
        result: RunResult {
            test_accuracy,
            best_val_accuracy,
            best_epoch,
            losses,
            epoch_ms,
        },
        params,
    })
}

fn accuracy(nodes: &[usize], pred: &[usize], labels: &[usize]) -> f64 {
    let hits = nodes.iter().filter(|&&v| pred[v] == labels[v]).count();
    hits as f64 / nodes.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub result: RunResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub config: TrainConfig,
    pub mean: f64,
    pub std: f64,
    pub mean_val: f64,
    pub runs: Vec<SeedRun>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One random stratified split and one training run per seed. Runs are
/// sequential so per-epoch timings are not confounded.
pub fn evaluate_mean(g: &Graph, cfg: &TrainConfig, seeds: &[u64]) -> Result<MeanResult> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluate_mean needs at least one seed".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("evaluation seeds must be distinct".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let split = split_nodes(g, SplitRatios::default(), seed)?;
        let result = train(g, &split, &cfg.with_seed(seed))?.result;
        runs.push(SeedRun { seed, result });
    }
    let test: Vec<f64> = runs.iter().map(|r| r.result.test_accuracy).collect();
    let val: Vec<f64> = runs.iter().map(|r| r.result.best_val_accuracy).collect();
    let (mean, std) = mean_std(&test);
    Ok(MeanResult {
        config: *cfg,
        mean,
        std,
        mean_val: mean_std(&val).0,
        runs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    /// Local aggregation hurts: the MLP beats every local GNN.
    Category1,
    Category2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Categorization {
    pub category: Category,
    pub mlp: MeanResult,
    pub gcn: MeanResult,
    pub gat: MeanResult,
}

/// Compares MLP against GCN and GAT trained with the hyperparameters of `base`.
pub fn categorize_dataset(g: &Graph, base: &TrainConfig, seeds: &[u64]) -> Result<Categorization> {
    let mlp = evaluate_mean(g, &base.with_variant(Variant::Mlp), seeds)?;
    let gcn = evaluate_mean(g, &base.with_variant(Variant::Gcn), seeds)?;
    let gat = evaluate_mean(g, &base.with_variant(Variant::Gat), seeds)?;
    let category = if mlp.mean > gcn.mean.max(gat.mean) {
        Category::Category1
    } else {
        Category::Category2
    };
    Ok(Categorization {
        category,
        mlp,
        gcn,
        gat,
    })
}

/// Cartesian hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub lr: Vec<f64>,
    pub kernel_size: Vec<usize>,
}

impl Grid {
    /// The full tuning grid; kernel size only varies for non-local variants.
    pub fn full(variant: Variant) -> Self {
        Self {
            hidden: HIDDEN_GRID.to_vec(),
            dropout: DROPOUT_GRID.to_vec(),
            weight_decay: WEIGHT_DECAY_GRID.to_vec(),
            lr: LR_GRID.to_vec(),
            kernel_size: if variant.is_nonlocal() { KERNEL_GRID.to_vec() } else { vec![3] },
        }
    }

    pub fn singleton(cfg: &TrainConfig) -> Self {
        Self {
            hidden: vec![cfg.hidden],
            dropout: vec![cfg.dropout],
            weight_decay: vec![cfg.weight_decay],
            lr: vec![cfg.lr],
            kernel_size: vec![cfg.kernel_size],
        }
    }

    pub fn size(&self) -> usize {
        self.hidden.len() * self.dropout.len() * self.weight_decay.len() * self.lr.len() * self.kernel_size.len()
    }

    /// Every cell, in lexicographic order of (hidden, dropout, wd, lr, k).
    pub fn configs(&self, variant: Variant, max_epochs: usize) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.size());
        for &hidden in &self.hidden {
            for &dropout in &self.dropout {
                for &weight_decay in &self.weight_decay {
                    for &lr in &self.lr {
                        for &kernel_size in &self.kernel_size {
                            out.push(TrainConfig {
                                variant,
                                hidden,
                                dropout,
                                weight_decay,
                                lr,
                                kernel_size,
                                max_epochs,
                                seed: 0,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: TrainConfig,
    /// Every cell, sorted by nonincreasing mean validation accuracy.
    pub leaderboard: Vec<MeanResult>,
}

/// Exhaustive search ranked by mean validation accuracy over `split_seeds`.
pub fn grid_search(
    g: &Graph,
    split_seeds: &[u64],
    variant: Variant,
    grid: &Grid,
    max_epochs: usize,
) -> Result<GridResult> {
    let configs = grid.configs(variant, max_epochs);
    if configs.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut leaderboard = Vec::with_capacity(configs.len());
    for cfg in &configs {
        cfg.validate()?;
        leaderboard.push(evaluate_mean(g, cfg, split_seeds)?);
    }
    leaderboard.sort_by(|a, b| b.mean_val.total_cmp(&a.mean_val));
    Ok(GridResult {
        best: leaderboard[0].config,
        leaderboard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticSpec};

    fn small_graph() -> Graph {
        let mut spec = SyntheticSpec::new(60, 3, 0.5);
        spec.feature_noise = 0.0;
        generate_synthetic(&spec).unwrap()
    }

    fn quick(variant: Variant) -> TrainConfig {
        TrainConfig {
            max_epochs: 20,
            ..TrainConfig::new(variant)
        }
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(Grid::full(Variant::Gcn).size(), 72);
        assert_eq!(Grid::full(Variant::NlGcn).size(), 144);
        assert_eq!(Grid::full(Variant::NlGat).configs(Variant::NlGat, 1).len(), 144);
    }

    #[test]
    fn off_grid_configs_are_rejected() {
        let mut cfg = TrainConfig::new(Variant::Mlp);
        cfg.hidden = 32;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::new(Variant::Mlp);
        cfg.lr = 0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_epochs_is_an_error() {
        let g = small_graph();
        let split = split_nodes(&g, SplitRatios::default(), 0).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::new(Variant::Mlp)
        };
        assert!(matches!(train(&g, &split, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn test_labels_read_once_per_run() {
        let g = small_graph();
        let split = split_nodes(&g, SplitRatios::default(), 1).unwrap();
        let out = train(&g, &split, &quick(Variant::NlGcn)).unwrap();
        assert_eq!(split.test.label_reads(), 1);
        assert!(out.result.best_epoch >= 1 && out.result.best_epoch <= 20);
        assert_eq!(out.result.losses.len(), 20);
    }

    #[test]
    fn training_is_deterministic() {
        let g = small_graph();
        let split = split_nodes(&g, SplitRatios::default(), 2).unwrap();
        let a = train(&g, &split, &quick(Variant::NlGat)).unwrap();
        let b = train(&g, &split, &quick(Variant::NlGat)).unwrap();
        assert_eq!(a.result.losses, b.result.losses);
        assert_eq!(a.result.test_accuracy, b.result.test_accuracy);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let g = small_graph();
        assert!(evaluate_mean(&g, &quick(Variant::Mlp), &[1, 1]).is_err());
    }

    #[test]
    fn singleton_grid_returns_its_config() {
        let g = small_graph();
        let cfg = quick(Variant::Mlp);
        let r = grid_search(&g, &[0, 1], Variant::Mlp, &Grid::singleton(&cfg), 20).unwrap();
        assert_eq!(r.leaderboard.len(), 1);
        assert_eq!(r.best, cfg);
    }
}
