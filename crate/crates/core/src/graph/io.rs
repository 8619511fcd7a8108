//! Plain-text dataset formats.
//!
//! All three data files are line oriented. `#` starts a comment that runs to
//! the end of the line, and blank lines are ignored.
//!
//! * edges: one `u v` pair per line, 0-based node ids.
//! * features: one row of whitespace-separated reals per node.
//! * labels: one class index per line, node order matching the feature rows.
//!
//! A manifest ties them together with `key = value` lines:
//!
//! ```text
//! name = texas
//! classes = 5
//! edges = texas.edges
//! features = texas.features
//! labels = texas.labels
//! ```
//!
//! Relative paths in a manifest are resolved against the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub u: usize,
    pub v: usize,
    pub line: usize,
}

fn ingest_err<T>(source: &str, line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Ingestion {
        source_name: source.to_string(),
        line,
        msg: msg.into(),
    })
}

/// Non-empty content lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

pub fn parse_edges(text: &str, source: &str) -> Result<Vec<EdgeRecord>> {
    let mut out = Vec::new();
    for (line, body) in content_lines(text) {
        let mut fields = body.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return ingest_err(source, line, format!("expected `u v`, got `{body}`"));
        };
        let parse = |tok: &str| {
            tok.parse::<usize>()
                .or_else(|_| ingest_err(source, line, format!("invalid node id `{tok}`")))
        };
        out.push(EdgeRecord {
            u: parse(a)?,
            v: parse(b)?,
            line,
        });
    }
    Ok(out)
}

pub fn parse_features(text: &str, source: &str) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, body) in content_lines(text) {
        let start = data.len();
        for tok in body.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(x) if x.is_finite() => data.push(x),
                _ => return ingest_err(source, line, format!("invalid feature value `{tok}`")),
            }
        }
        let w = data.len() - start;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return ingest_err(source, line, format!("row has {w} values, expected {expected}"));
            }
            _ => {}
        }
        rows += 1;
    }
    let Some(width) = width else {
        return ingest_err(source, 0, "no feature rows");
    };
    Tensor::matrix(rows, width, data)
}

/// Parses class indices, checking them against `classes` when given.
pub fn parse_labels(text: &str, source: &str, classes: Option<usize>) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (line, body) in content_lines(text) {
        let Ok(y) = body.parse::<usize>() else {
            return ingest_err(source, line, format!("invalid class label `{body}`"));
        };
        if let Some(c) = classes {
            if y >= c {
                return ingest_err(source, line, format!("label {y} outside [0,{c})"));
            }
        }
        out.push(y);
    }
    if out.is_empty() {
        return ingest_err(source, 0, "no labels");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub classes: usize,
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
}

impl Manifest {
    /// Returns a copy with relative paths joined onto `base`.
    pub fn resolve(&self, base: &Path) -> Self {
        let fix = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        Self {
            name: self.name.clone(),
            classes: self.classes,
            edges: fix(&self.edges),
            features: fix(&self.features),
            labels: fix(&self.labels),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "edges = {}", self.edges.display());
        let _ = writeln!(s, "features = {}", self.features.display());
        let _ = writeln!(s, "labels = {}", self.labels.display());
        s
    }
}

pub fn parse_manifest(text: &str, source: &str) -> Result<Manifest> {
    let (mut name, mut classes, mut edges, mut features, mut labels) = (None, None, None, None, None);
    for (line, body) in content_lines(text) {
        let Some((key, value)) = body.split_once('=') else {
            return ingest_err(source, line, format!("expected `key = value`, got `{body}`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return ingest_err(source, line, format!("empty value for `{key}`"));
        }
        let slot = match key {
            "name" => &mut name,
            "edges" => &mut edges,
            "features" => &mut features,
            "labels" => &mut labels,
            "classes" => {
                match value.parse::<usize>() {
                    Ok(c) if c > 0 => classes = Some((c, line)),
                    _ => return ingest_err(source, line, format!("invalid class count `{value}`")),
                }
                continue;
            }
            other => return ingest_err(source, line, format!("unknown key `{other}`")),
        };
        if slot.replace(value.to_string()).is_some() {
            return ingest_err(source, line, format!("duplicate key `{key}`"));
        }
    }
    let missing = |k: &str| ingest_err(source, 0, format!("missing key `{k}`"));
    Ok(Manifest {
        name: match name {
            Some(n) => n,
            None => return missing("name"),
        },
        classes: match classes {
            Some((c, _)) => c,
            None => return missing("classes"),
        },
        edges: match edges {
            Some(p) => p.into(),
            None => return missing("edges"),
        },
        features: match features {
            Some(p) => p.into(),
            None => return missing("features"),
        },
        labels: match labels {
            Some(p) => p.into(),
            None => return missing("labels"),
        },
    })
}

/// Combines parsed records into a [`Graph`], reporting dangling edge ids by line.
pub fn assemble(
    edges: &[EdgeRecord],
    features: Tensor,
    labels: Vec<usize>,
    classes: Option<usize>,
    edges_source: &str,
) -> Result<Graph> {
    let n = labels.len();
    if features.rows() != n {
        return ingest_err(
            edges_source,
            0,
            format!("{} feature rows but {n} labels", features.rows()),
        );
    }
    if let Some(e) = edges.iter().find(|e| e.u >= n || e.v >= n) {
        return ingest_err(
            edges_source,
            e.line,
            format!("edge ({}, {}) references a node outside 0..{n}", e.u, e.v),
        );
    }
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    let pairs: Vec<_> = edges.iter().map(|e| (e.u, e.v)).collect();
    Graph::from_edges(&pairs, features, labels, classes)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Ingestion {
        source_name: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })
}

pub fn load_graph(edges_path: &Path, features_path: &Path, labels_path: &Path, classes: Option<usize>) -> Result<Graph> {
    let (es, fs_, ls) = (
        edges_path.display().to_string(),
        features_path.display().to_string(),
        labels_path.display().to_string(),
    );
    let edges = parse_edges(&read(edges_path)?, &es)?;
    let features = parse_features(&read(features_path)?, &fs_)?;
    let labels = parse_labels(&read(labels_path)?, &ls, classes)?;
    assemble(&edges, features, labels, classes, &es)
}

/// Reads a manifest and the graph it names.
pub fn load_manifest(path: &Path) -> Result<(Manifest, Graph)> {
    let manifest = parse_manifest(&read(path)?, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolved = manifest.resolve(base);
    let g = load_graph(&resolved.edges, &resolved.features, &resolved.labels, Some(resolved.classes))?;
    Ok((manifest, g))
}

pub fn edges_to_text(g: &Graph) -> String {
    let mut s = String::new();
    for (u, v) in g.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

pub fn features_to_text(g: &Graph) -> String {
    let mut s = String::new();
    for v in 0..g.n() {
        let row = g.features().row(v);
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x}");
        }
        s.push('\n');
    }
    s
}

pub fn labels_to_text(g: &Graph) -> String {
    let mut s = String::new();
    for y in g.labels() {
        let _ = writeln!(s, "{y}");
    }
    s
}

/// Writes `<name>.edges`, `<name>.features`, `<name>.labels` and
/// `<name>.manifest` into `dir`; returns the manifest path.
pub fn write_dataset(dir: &Path, name: &str, g: &Graph) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        name: name.to_string(),
        classes: g.num_classes(),
        edges: format!("{name}.edges").into(),
        features: format!("{name}.features").into(),
        labels: format!("{name}.labels").into(),
    };
    fs::write(dir.join(&manifest.edges), edges_to_text(g))?;
    fs::write(dir.join(&manifest.features), features_to_text(g))?;
    fs::write(dir.join(&manifest.labels), labels_to_text(g))?;
    let path = dir.join(format!("{name}.manifest"));
    fs::write(&path, manifest.to_text())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_skip_comments_and_blank_lines() {
        let e = parse_edges("# header\n0 1\n\n1 2 # trailing\n", "e").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[1].u, e[1].v, e[1].line), (1, 2, 4));
    }

    #[test]
    fn malformed_edge_line_reports_line() {
        let err = parse_edges("0 1\n0 x\n", "edges.txt").unwrap_err();
        assert!(err.to_string().starts_with("edges.txt:2:"), "{err}");
        assert!(parse_edges("0 1 2\n", "e").is_err());
        assert!(parse_edges("-1 2\n", "e").is_err());
    }

    #[test]
    fn dangling_edge_reports_line() {
        let edges = parse_edges("0 1\n1 2\n2 9\n", "edges.txt").unwrap();
        let feats = parse_features("1\n2\n3\n", "f").unwrap();
        let labels = parse_labels("0\n0\n1\n", "l", Some(2)).unwrap();
        let err = assemble(&edges, feats, labels, Some(2), "edges.txt").unwrap_err();
        match err {
            Error::Ingestion { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let feats = parse_features("1\n2\n", "f").unwrap();
        let labels = parse_labels("0\n0\n1\n", "l", None).unwrap();
        assert!(matches!(assemble(&[], feats, labels, None, "e"), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn directed_pair_is_symmetrized() {
        let edges = parse_edges("0 1\n", "e").unwrap();
        let g = assemble(&edges, parse_features("0\n0\n", "f").unwrap(), vec![0, 0], None, "e").unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn features_reject_ragged_and_non_finite_rows() {
        assert!(parse_features("1 2\n3\n", "f").is_err());
        assert!(parse_features("1 nan\n", "f").is_err());
        assert!(parse_features("inf\n", "f").is_err());
        assert!(parse_features("# nothing\n", "f").is_err());
    }

    #[test]
    fn labels_check_class_range() {
        assert!(parse_labels("0\n5\n", "l", Some(5)).is_err());
        assert_eq!(parse_labels("0\n4\n", "l", Some(5)).unwrap(), vec![0, 4]);
    }

    #[test]
    fn manifest_requires_every_key() {
        let text = "name = toy\nclasses = 2\nedges = a\nfeatures = b\nlabels = c\n";
        let m = parse_manifest(text, "m").unwrap();
        assert_eq!(m.classes, 2);
        assert_eq!(parse_manifest(&m.to_text(), "m").unwrap(), m);
        assert!(parse_manifest("name = toy\n", "m").is_err());
        assert!(parse_manifest(&format!("{text}colour = red\n"), "m").is_err());
        assert!(parse_manifest(&format!("{text}name = again\n"), "m").is_err());
        assert!(parse_manifest("classes = 0\n", "m").is_err());
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = Tensor::from_rows(&[vec![0.5, 1.0], vec![-2.25, 0.0], vec![1e-3, 7.0]]).unwrap();
        let g = Graph::from_edges(&[(0, 1), (2, 1)], f, vec![1, 0, 1], 2).unwrap();
        let path = write_dataset(dir.path(), "toy", &g).unwrap();
        let (m, back) = load_manifest(&path).unwrap();
        assert_eq!(m.name, "toy");
        assert_eq!(back, g);
    }
}
