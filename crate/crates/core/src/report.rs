//! CSV reports with a JSON sidecar `{command, config, seed, environment, results}`.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::bench::{BenchReport, Environment, ScalingReport, SortedExport};
use crate::error::{Error, Result};
use crate::graph::{homophily, Graph};
use crate::training::MeanResult;

/// Minimal CSV builder. Fields never contain separators, so no quoting.
#[derive(Clone, Debug)]
pub struct Csv {
    width: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            width: header.len(),
            text: header.join(",") + "\n",
        }
    }

    pub fn row<I, T>(&mut self, fields: I) -> &mut Self
    where
        I: IntoIterator<Item = T>,
        T: Display,
    {
        let fields: Vec<String> = fields.into_iter().map(|f| f.to_string()).collect();
        assert_eq!(fields.len(), self.width, "csv row width");
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
        self
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sidecar {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    pub environment: Environment,
    pub results: Value,
}

impl Sidecar {
    pub fn new(command: &str, config: impl Serialize, seed: u64, results: impl Serialize) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seed,
            environment: Environment::current(),
            results: serde_json::to_value(results)?,
        })
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `csv` to `path` and the sidecar next to it with a `.json` extension.
pub fn write_report(path: &Path, csv: &str, sidecar: &Sidecar) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let json_path = sidecar_path(path);
    if json_path == path {
        return Err(Error::Config(format!(
            "report path {} must not end in .json",
            path.display()
        )));
    }
    std::fs::write(path, csv)?;
    std::fs::write(&json_path, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok(json_path)
}

/// Dataset statistics in the layout of a dataset-summary table.
pub fn stats_csv(name: &str, g: &Graph) -> Csv {
    let h = homophily(g).map_or_else(|_| "undefined".to_string(), |h| h.to_string());
    let isolated = (0..g.n()).filter(|&v| g.degree(v) == 0).count();
    let mut csv = Csv::new(&["dataset", "nodes", "edges", "features", "classes", "isolated", "homophily"]);
    csv.row([
        name.to_string(),
        g.n().to_string(),
        g.num_edges().to_string(),
        g.feature_dim().to_string(),
        g.num_classes().to_string(),
        isolated.to_string(),
        h,
    ]);
    csv
}

/// One line per seed plus a `mean` line.
pub fn mean_result_csv(results: &[&MeanResult]) -> Csv {
    let mut csv = Csv::new(&["variant", "seed", "test_accuracy", "best_val_accuracy", "best_epoch"]);
    for r in results {
        for run in &r.runs {
            csv.row([
                r.config.variant.to_string(),
                run.seed.to_string(),
                run.result.test_accuracy.to_string(),
                run.result.best_val_accuracy.to_string(),
                run.result.best_epoch.to_string(),
            ]);
        }
        csv.row([
            r.config.variant.to_string(),
            "mean".into(),
            r.mean.to_string(),
            r.mean_val.to_string(),
            String::new(),
        ]);
    }
    csv
}

pub fn leaderboard_csv(board: &[MeanResult]) -> Csv {
    let mut csv = Csv::new(&[
        "rank",
        "variant",
        "hidden",
        "dropout",
        "weight_decay",
        "lr",
        "kernel_size",
        "mean_val_accuracy",
        "mean_test_accuracy",
        "std_test_accuracy",
    ]);
    for (i, r) in board.iter().enumerate() {
        let c = &r.config;
        csv.row([
            (i + 1).to_string(),
            c.variant.to_string(),
            c.hidden.to_string(),
            c.dropout.to_string(),
            c.weight_decay.to_string(),
            c.lr.to_string(),
            c.kernel_size.to_string(),
            r.mean_val.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
        ]);
    }
    csv
}

pub fn bench_csv(r: &BenchReport) -> Csv {
    let mut csv = Csv::new(&["variant", "ms_per_epoch", "slowdown"]);
    for t in &r.timings {
        csv.row([
            t.variant.to_string(),
            format!("{:.3}", t.ms_per_epoch),
            format!("{:.2}x", t.slowdown),
        ]);
    }
    csv
}

pub fn scaling_csv(r: &ScalingReport) -> Csv {
    let mut csv = Csv::new(&["n", "sorted_ms", "baseline_ms", "speedup", "annotation"]);
    for row in &r.rows {
        let base = row.baseline_ms.map_or(String::new(), |b| format!("{b:.4}"));
        let speed = row.baseline_ms.map_or(String::new(), |b| format!("{:.2}", b / row.sorted_ms));
        csv.row([
            row.n.to_string(),
            format!("{:.4}", row.sorted_ms),
            base,
            speed,
            row.annotation.clone().unwrap_or_default(),
        ]);
    }
    csv
}

pub fn sorted_csv(e: &SortedExport) -> Csv {
    let mut csv = Csv::new(&["sorted_position", "node_id", "attention_score", "label"]);
    for r in &e.rows {
        csv.row([r.position.to_string(), r.node.to_string(), r.score.to_string(), r.label.to_string()]);
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_follow_header() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row([1, 2]).row(["x", "y"]);
        assert_eq!(csv.as_str(), "a,b\n1,2\nx,y\n");
    }

    #[test]
    #[should_panic(expected = "csv row width")]
    fn ragged_row_panics() {
        Csv::new(&["a", "b"]).row([1]);
    }

    #[test]
    fn report_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/stats.csv");
        let side = Sidecar::new("analyze", serde_json::json!({"k": 1}), 3, [0.5]).unwrap();
        let json = write_report(&path, "a\n1\n", &side).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a\n1\n");
        let v: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        for key in ["command", "config", "seed", "environment", "results"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn json_output_path_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let side = Sidecar::new("x", 0, 0, 0).unwrap();
        assert!(write_report(&dir.path().join("r.json"), "", &side).is_err());
    }
}
