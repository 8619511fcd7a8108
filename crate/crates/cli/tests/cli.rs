use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlgnn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nlgnn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, n: &str, h: &str, seed: &str) -> PathBuf {
    let out = ok(&["generate", "--n", n, "--classes", "5", "--homophily", h, "--seed", seed, "--out", s(dir)]);
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

#[test]
fn generate_then_analyze_recovers_homophily() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "2000", "0.1", "3");
    let stats = dir.path().join("stats.csv");
    ok(&["analyze", "--manifest", s(&m), "--out", s(&stats)]);
    let text = std::fs::read_to_string(&stats).unwrap();
    let mut lines = text.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    let row: Vec<_> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "homophily").unwrap();
    let h: f64 = row[col].parse().unwrap();
    assert!((h - 0.1).abs() <= 0.05, "{h}");
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("stats.json")).unwrap()).unwrap();
    for key in ["command", "config", "seed", "environment", "results"] {
        assert!(side.get(key).is_some(), "{key}");
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(nlgnn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(nlgnn(&["analyze", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(nlgnn(&["analyze"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.manifest");
    let out = nlgnn(&["analyze", "--manifest", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.edges");
    std::fs::write(&bad, "0 1\n1 7\n").unwrap();
    std::fs::write(dir.path().join("bad.features"), "0\n0\n").unwrap();
    std::fs::write(dir.path().join("bad.labels"), "0\n0\n").unwrap();
    let m = dir.path().join("bad.manifest");
    std::fs::write(&m, "name = bad\nclasses = 1\nedges = bad.edges\nfeatures = bad.features\nlabels = bad.labels\n").unwrap();
    let out = nlgnn(&["analyze", "--manifest", s(&m)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"), "line number reported");

    let off_grid = generate(dir.path(), "100", "0.5", "0");
    let out = nlgnn(&["train", "--manifest", s(&off_grid), "--hidden", "17", "--epochs", "5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fixed_seed_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "150", "0.2", "5");
    let run = |tag: &str| {
        let sub = dir.path().join(tag);
        std::fs::create_dir(&sub).unwrap();
        let out = sub.join("train.csv");
        let params = sub.join("params.json");
        let sorted = sub.join("sorted.csv");
        let cwd_rel = |p: &Path| p.strip_prefix(&sub).unwrap().to_str().unwrap().to_string();
        let run_in = |args: &[&str]| {
            let o = Command::new(env!("CARGO_BIN_EXE_nlgnn")).current_dir(&sub).args(args).output().unwrap();
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        };
        let (o, pr, so) = (cwd_rel(&out), cwd_rel(&params), cwd_rel(&sorted));
        run_in(&[
            "train", "--manifest", s(&m), "--model", "nlgcn", "--epochs", "15", "--repeats", "2", "--seed", "9",
            "--save-params", &pr, "--out", &o,
        ]);
        run_in(&["export-sorted", "--manifest", s(&m), "--params", &pr, "--seed", "9", "--out", &so]);
        [
            out.clone(),
            out.with_extension("json"),
            params,
            sorted.clone(),
            sorted.with_extension("json"),
        ]
        .map(|p| std::fs::read(p).unwrap())
    };
    assert_eq!(run("a"), run("b"));
    let regen = dir.path().join("again");
    let m2 = generate(&regen, "150", "0.2", "5");
    for ext in ["edges", "features", "labels"] {
        assert_eq!(
            std::fs::read(m.with_extension(ext)).unwrap(),
            std::fs::read(m2.with_extension(ext)).unwrap()
        );
    }
}

#[test]
fn export_sorted_needs_params_and_sorts_scores() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "100", "0.1", "1");
    assert_eq!(nlgnn(&["export-sorted", "--manifest", s(&m)]).status.code(), Some(1));

    let baseline = dir.path().join("mlp.json");
    ok(&["train", "--manifest", s(&m), "--model", "mlp", "--epochs", "5", "--save-params", s(&baseline)]);
    assert_eq!(
        nlgnn(&["export-sorted", "--manifest", s(&m), "--params", s(&baseline)]).status.code(),
        Some(1)
    );

    let params = dir.path().join("nl.json");
    ok(&["train", "--manifest", s(&m), "--model", "nlmlp", "--epochs", "20", "--save-params", s(&params)]);
    let out = ok(&["export-sorted", "--manifest", s(&m), "--params", s(&params)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "sorted_position,node_id,attention_score,label");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 100);
    let scores: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    let mut nodes: Vec<usize> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    nodes.sort_unstable();
    assert_eq!(nodes, (0..100).collect::<Vec<_>>());
}

#[test]
fn bench_reports_multipliers_against_gcn() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "100", "0.5", "2");
    let out = ok(&["bench", "--manifest", s(&m), "--models", "nlgcn", "--epochs", "15"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "variant,ms_per_epoch,slowdown");
    assert!(lines[1].starts_with("gcn,") && lines[1].ends_with(",1.00x"), "{}", lines[1]);
    let nl: Vec<_> = lines[2].split(',').collect();
    assert_eq!(nl[0], "nlgcn");
    let gcn_ms: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let nl_ms: f64 = nl[1].parse().unwrap();
    let mult: f64 = nl[2].trim_end_matches('x').parse().unwrap();
    assert!((mult - nl_ms / gcn_ms).abs() < 0.01 + 0.01 * mult);
}

#[test]
fn scaling_and_grid_smoke() {
    let out = ok(&["scaling", "--sizes", "64,128", "--repeats", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("n,sorted_ms,baseline_ms,speedup,annotation\n"));
    assert_eq!(text.lines().count(), 3);

    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "100", "0.5", "4");
    let out = ok(&[
        "grid", "--manifest", s(&m), "--model", "mlp", "--hidden", "16", "--dropout", "0,0.5", "--weight-decay",
        "5e-4", "--lr", "0.01", "--epochs", "10", "--repeats", "2",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    let vals: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert!(vals[0] >= vals[1]);
}

#[test]
fn categorize_reports_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "100", "0.9", "6");
    let out = ok(&["categorize", "--manifest", s(&m), "--epochs", "10", "--repeats", "2"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("Category"), "{err}");
}
