use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::json;

use nlgnn::bench::{bench_runtime, export_sorted, scaling_experiment, ScalingConfig, DEFAULT_SIZES};
use nlgnn::graph::io::{load_manifest, write_dataset};
use nlgnn::graph::{generate_synthetic, split_nodes, Graph, SplitRatios, SyntheticSpec};
use nlgnn::model::{ModelParams, Variant};
use nlgnn::report::{
    bench_csv, leaderboard_csv, mean_result_csv, scaling_csv, sorted_csv, stats_csv, write_report, Csv, Sidecar,
};
use nlgnn::training::{
    categorize_dataset, evaluate_mean, grid_search, train, Grid, TrainConfig, DEFAULT_EPOCHS,
};
use nlgnn::{Error, Result};

/// Node classification with attention-guided sorting and non-local aggregation.
#[derive(Parser, Debug)]
#[command(name = "nlgnn", version)]
struct Cli {
    /// Seed for splits, initialisation and dropout.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (CSV; a `.json` sidecar is written next to it) or directory for `generate`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset statistics including homophily.
    Analyze,
    /// Decide whether local aggregation helps by comparing MLP with GCN and GAT.
    Categorize {
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long, default_value_t = 10)]
        repeats: u64,
    },
    /// Train one model, optionally repeated over several random splits.
    Train {
        #[arg(long, default_value = "nlmlp")]
        model: Variant,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(long, default_value_t = 1)]
        repeats: u64,
        /// Write the selected parameters of the first run as JSON.
        #[arg(long)]
        save_params: Option<PathBuf>,
    },
    /// Exhaustive hyperparameter search ranked by mean validation accuracy.
    Grid {
        #[arg(long, default_value = "nlmlp")]
        model: Variant,
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        dropout: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        weight_decay: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        lr: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        kernel_size: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_EPOCHS)]
        epochs: usize,
        #[arg(long, default_value_t = 3)]
        repeats: u64,
    },
    /// Mean training time per epoch relative to GCN.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "gcn,nlgcn")]
        models: Vec<Variant>,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Sorted-path versus dense-attention runtime over growing node counts.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        f: usize,
        #[arg(long, default_value_t = 3)]
        kernel_size: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
    /// Write a synthetic dataset and its manifest.
    Generate {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0.1)]
        homophily: f64,
        /// Feature dimension; defaults to four times the class count.
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, default_value_t = 10.0)]
        degree: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value = "synthetic")]
        name: String,
    },
    /// Nodes in attention-sorted order from trained non-local parameters.
    ExportSorted {
        #[arg(long)]
        params: Option<PathBuf>,
        /// Re-connection half-width; defaults to the conv receptive half-width.
        #[arg(long)]
        half_width: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
struct Hyper {
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
}

impl Hyper {
    fn config(&self, variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            variant,
            hidden: self.hidden,
            dropout: self.dropout,
            weight_decay: self.weight_decay,
            lr: self.lr,
            kernel_size: self.kernel_size,
            max_epochs: self.epochs,
            seed,
        }
    }
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::MissingRequiredArgument, msg).exit()
}

fn graph(cli: &Cli) -> Result<(String, Graph)> {
    let Some(path) = &cli.manifest else {
        usage_error("this subcommand needs --manifest <PATH>");
    };
    let (m, g) = load_manifest(path)?;
    Ok((m.name, g))
}

fn seeds(start: u64, repeats: u64) -> Result<Vec<u64>> {
    if repeats == 0 {
        return Err(Error::Config("--repeats must be at least 1".into()));
    }
    Ok((start..start + repeats).collect())
}

/// Writes the report when `--out` is given, otherwise prints the CSV.
fn emit(cli: &Cli, csv: &Csv, sidecar: &Sidecar) -> Result<()> {
    match &cli.out {
        Some(path) => {
            let json = write_report(path, csv.as_str(), sidecar)?;
            eprintln!("wrote {} and {}", path.display(), json.display());
        }
        None => print!("{}", csv.as_str()),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze => {
            let (name, g) = graph(cli)?;
            let csv = stats_csv(&name, &g);
            let side = Sidecar::new("analyze", json!({ "manifest": cli.manifest }), cli.seed, json!({}))?;
            emit(cli, &csv, &side)
        }
        Command::Categorize { hyper, repeats } => {
            let (name, g) = graph(cli)?;
            let base = hyper.config(Variant::Mlp, cli.seed);
            let c = categorize_dataset(&g, &base, &seeds(cli.seed, *repeats)?)?;
            eprintln!(
                "{name}: {:?} (mlp {:.4}, gcn {:.4}, gat {:.4})",
                c.category, c.mlp.mean, c.gcn.mean, c.gat.mean
            );
            let csv = mean_result_csv(&[&c.mlp, &c.gcn, &c.gat]);
            let results = json!({
                "category": c.category,
                "mean_test_accuracy": { "mlp": c.mlp.mean, "gcn": c.gcn.mean, "gat": c.gat.mean },
                "std_test_accuracy": { "mlp": c.mlp.std, "gcn": c.gcn.std, "gat": c.gat.std },
            });
            emit(cli, &csv, &Sidecar::new("categorize", base, cli.seed, results)?)
        }
        Command::Train {
            model,
            hyper,
            repeats,
            save_params,
        } => {
            let (_, g) = graph(cli)?;
            let cfg = hyper.config(*model, cli.seed);
            let seeds = seeds(cli.seed, *repeats)?;
            if let Some(path) = save_params {
                let split = split_nodes(&g, SplitRatios::default(), cli.seed)?;
                train(&g, &split, &cfg)?.params.save(path)?;
                eprintln!("wrote {}", path.display());
            }
            let r = evaluate_mean(&g, &cfg, &seeds)?;
            eprintln!("{model}: test accuracy {:.4} ± {:.4} over {} runs", r.mean, r.std, seeds.len());
            let mut csv = Csv::new(&["seed", "epoch", "loss"]);
            for run in &r.runs {
                for (e, loss) in run.result.losses.iter().enumerate() {
                    csv.row([run.seed.to_string(), (e + 1).to_string(), loss.to_string()]);
                }
            }
            let runs: Vec<_> = r
                .runs
                .iter()
                .map(|s| {
                    json!({
                        "seed": s.seed,
                        "test_accuracy": s.result.test_accuracy,
                        "best_val_accuracy": s.result.best_val_accuracy,
                        "best_epoch": s.result.best_epoch,
                    })
                })
                .collect();
            let results = json!({ "mean_test_accuracy": r.mean, "std_test_accuracy": r.std, "runs": runs });
            emit(cli, &csv, &Sidecar::new("train", cfg, cli.seed, results)?)
        }
        Command::Grid {
            model,
            hidden,
            dropout,
            weight_decay,
            lr,
            kernel_size,
            epochs,
            repeats,
        } => {
            let (_, g) = graph(cli)?;
            let full = Grid::full(*model);
            let grid = Grid {
                hidden: hidden.clone().unwrap_or(full.hidden),
                dropout: dropout.clone().unwrap_or(full.dropout),
                weight_decay: weight_decay.clone().unwrap_or(full.weight_decay),
                lr: lr.clone().unwrap_or(full.lr),
                kernel_size: kernel_size.clone().unwrap_or(full.kernel_size),
            };
            let r = grid_search(&g, &seeds(cli.seed, *repeats)?, *model, &grid, *epochs)?;
            eprintln!("best of {} configs: {:?}", grid.size(), r.best);
            let config = json!({ "model": model, "grid": grid, "epochs": epochs, "repeats": repeats });
            let results = json!({ "best": r.best, "best_mean_val_accuracy": r.leaderboard[0].mean_val });
            emit(cli, &leaderboard_csv(&r.leaderboard), &Sidecar::new("grid", config, cli.seed, results)?)
        }
        Command::Bench { models, hyper } => {
            let (_, g) = graph(cli)?;
            let cfgs: Vec<_> = models.iter().map(|&m| hyper.config(m, cli.seed)).collect();
            let r = bench_runtime(&g, &cfgs, hyper.epochs)?;
            let config = json!({ "models": models, "hyper": hyper.config(Variant::Gcn, cli.seed) });
            emit(cli, &bench_csv(&r), &Sidecar::new("bench", config, cli.seed, &r)?)
        }
        Command::Scaling {
            sizes,
            f,
            kernel_size,
            repeats,
        } => {
            let cfg = ScalingConfig {
                sizes: sizes.clone(),
                f: *f,
                kernel_size: *kernel_size,
                repeats: *repeats,
                seed: cli.seed,
                ..ScalingConfig::default()
            };
            let r = scaling_experiment(&cfg)?;
            eprintln!(
                "log-log slope: sorted {:.3}, baseline {}",
                r.sorted_slope,
                r.baseline_slope.map_or("n/a".into(), |s| format!("{s:.3}"))
            );
            emit(cli, &scaling_csv(&r), &Sidecar::new("scaling", &cfg, cli.seed, &r)?)
        }
        Command::Generate {
            n,
            classes,
            homophily,
            dim,
            degree,
            noise,
            name,
        } => {
            let spec = SyntheticSpec {
                dim: dim.unwrap_or(4 * classes),
                mean_degree: *degree,
                feature_noise: *noise,
                seed: cli.seed,
                ..SyntheticSpec::new(*n, *classes, *homophily)
            };
            let g = generate_synthetic(&spec)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let path = write_dataset(&dir, name, &g)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::ExportSorted { params, half_width } => {
            let (_, g) = graph(cli)?;
            let Some(path) = params else {
                return Err(Error::Params("export-sorted needs trained parameters (--params <PATH>)".into()));
            };
            let p = load_params(path)?;
            let e = export_sorted(&g, &p, *half_width, cli.seed)?;
            eprintln!(
                "H(G) {:.4}, H(re-connected) {:.4}, half-width {}",
                e.homophily, e.reconnected_homophily, e.half_width
            );
            let results = json!({
                "homophily": e.homophily,
                "reconnected_homophily": e.reconnected_homophily,
                "half_width": e.half_width,
                "label_run_length": e.run_length,
                "shuffled_label_run_length": e.shuffled_run_length,
            });
            let config = json!({ "params": path, "half_width": half_width });
            emit(cli, &sorted_csv(&e), &Sidecar::new("export-sorted", config, cli.seed, results)?)
        }
    }
}

fn load_params(path: &Path) -> Result<ModelParams> {
    ModelParams::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Params(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
