//! Dataset directories on disk and synthetic stochastic-block-model graphs.
//!
//! A dataset directory holds plain-text files:
//!
//! * `manifest.json`: `{"name", "n", "num_features", "num_classes"}`, the
//!   file names below (optional, these are the defaults) and an optional
//!   `checksum` (hex SHA-256 over the four data files in the order listed).
//! * `edges.tsv`: `src<TAB>dst[<TAB>weight]`, 0-indexed, weight defaults
//!   to 1. Reverse and repeated entries are coalesced.
//! * `features.csv`: `n` lines of `num_features` comma-separated decimals.
//! * `labels.txt`: `n` lines, a class in `[0, num_classes)` or `-1`.
//! * `masks.txt`: `n` lines, one of `train`, `val`, `test`, `none`.
//!
//! Self-loops are never written; normalization adds them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{normalize_adjacency, GraphError, SparseGraph};
use crate::linalg::DenseMatrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("{what}: manifest says {expected}, files contain {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("checksum mismatch: manifest {expected}, computed {found}")]
    Checksum { expected: String, found: String },
    #[error("invalid SBM spec: {0}")]
    InvalidSbm(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn default_edges() -> String {
    "edges.tsv".into()
}
fn default_features() -> String {
    "features.csv".into()
}
fn default_labels() -> String {
    "labels.txt".into()
}
fn default_masks() -> String {
    "masks.txt".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub num_features: usize,
    pub num_classes: usize,
    #[serde(default = "default_edges")]
    pub edges: String,
    #[serde(default = "default_features")]
    pub features: String,
    #[serde(default = "default_labels")]
    pub labels: String,
    #[serde(default = "default_masks")]
    pub masks: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checksum: Option<String>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, n: usize, num_features: usize, num_classes: usize) -> Self {
        Self {
            name: name.into(),
            n,
            num_features,
            num_classes,
            edges: default_edges(),
            features: default_features(),
            labels: default_labels(),
            masks: default_masks(),
            checksum: None,
        }
    }

    fn file_names(&self) -> [&str; 4] {
        [&self.edges, &self.features, &self.labels, &self.masks]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Scale each feature row to unit L1 norm (zero rows stay zero).
    pub row_normalize: bool,
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), DataError> {
    fs::write(path, contents).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        file: file.to_owned(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DataError> {
    let path = dir.join("manifest.json");
    let text = read(&path)?;
    serde_json::from_str(&text).map_err(|source| DataError::Manifest { path, source })
}

pub fn load_dataset(dir: &Path) -> Result<SparseGraph, DataError> {
    load_dataset_with(dir, LoadOptions::default())
}

pub fn load_dataset_with(dir: &Path, opts: LoadOptions) -> Result<SparseGraph, DataError> {
    let manifest = read_manifest(dir)?;
    let texts = manifest
        .file_names()
        .map(|f| read(&dir.join(f)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(expected) = &manifest.checksum {
        let found = checksum(&texts);
        if !expected.eq_ignore_ascii_case(&found) {
            return Err(DataError::Checksum {
                expected: expected.clone(),
                found,
            });
        }
    }
    let n = manifest.n;

    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in lines(&texts[0]) {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(&manifest.edges, ln, "expected src<TAB>dst[<TAB>weight]"));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| parse_err(&manifest.edges, ln, format!("bad node index {s:?}: {e}")))
        };
        let (src, dst) = (idx(fields[0])?, idx(fields[1])?);
        let w = match fields.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|e| parse_err(&manifest.edges, ln, format!("bad weight {s:?}: {e}")))?,
            None => 1.0,
        };
        edges.push((src, dst));
        weights.push(w);
    }

    let mut data = Vec::with_capacity(n * manifest.num_features);
    let mut rows = 0;
    for (ln, line) in lines(&texts[1]) {
        let before = data.len();
        for tok in line.split(',') {
            let v = tok.trim().parse::<f64>().map_err(|e| {
                parse_err(&manifest.features, ln, format!("bad value {tok:?}: {e}"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(&manifest.features, ln, "non-finite feature"));
            }
            data.push(v);
        }
        let width = data.len() - before;
        if width != manifest.num_features {
            return Err(DataError::CountMismatch {
                what: "features per row",
                expected: manifest.num_features,
                found: width,
            });
        }
        rows += 1;
    }
    if rows != n {
        return Err(DataError::CountMismatch {
            what: "feature rows",
            expected: n,
            found: rows,
        });
    }
    let mut features = DenseMatrix::from_vec(n, manifest.num_features, data)
        .map_err(GraphError::from)?;
    if opts.row_normalize {
        for i in 0..n {
            let row = features.row_mut(i);
            let s: f64 = row.iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
    }

    let mut labels = Vec::with_capacity(n);
    for (ln, line) in lines(&texts[2]) {
        let v: i64 = line
            .trim()
            .parse()
            .map_err(|e| parse_err(&manifest.labels, ln, format!("bad label: {e}")))?;
        labels.push(match v {
            -1 => None,
            c if c >= 0 && (c as usize) < manifest.num_classes => Some(c as usize),
            c => {
                return Err(parse_err(
                    &manifest.labels,
                    ln,
                    format!("label {c} outside [0, {}) and not -1", manifest.num_classes),
                ))
            }
        });
    }
    if labels.len() != n {
        return Err(DataError::CountMismatch {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }

    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (ln, line) in lines(&texts[3]) {
        let m = line.trim();
        let (a, b, c) = match m {
            "train" => (true, false, false),
            "val" => (false, true, false),
            "test" => (false, false, true),
            "none" => (false, false, false),
            other => {
                return Err(parse_err(
                    &manifest.masks,
                    ln,
                    format!("unknown split {other:?}"),
                ))
            }
        };
        train.push(a);
        val.push(b);
        test.push(c);
    }
    if train.len() != n {
        return Err(DataError::CountMismatch {
            what: "mask lines",
            expected: n,
            found: train.len(),
        });
    }

    let adjacency = normalize_adjacency(&edges, n, Some(&weights))?;
    Ok(SparseGraph::new(
        adjacency,
        features,
        labels,
        manifest.num_classes,
        train,
        val,
        test,
    )?)
}

fn checksum(texts: &[String]) -> String {
    let mut h = Sha256::new();
    for t in texts {
        h.update(t.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Writes `g` as a dataset directory (created if missing), with a checksum.
pub fn save_dataset(g: &SparseGraph, name: &str, dir: &Path) -> Result<DatasetManifest, DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut edges = String::new();
    for &(u, v, w) in g.adjacency.edges() {
        let pairs: &[(usize, usize)] = if u == v { &[(u, v)] } else { &[(u, v), (v, u)] };
        for &(a, b) in pairs {
            if w == 1.0 {
                let _ = writeln!(edges, "{a}\t{b}");
            } else {
                let _ = writeln!(edges, "{a}\t{b}\t{w}");
            }
        }
    }
    let mut features = String::new();
    for i in 0..g.n() {
        for (j, v) in g.features.row(i).iter().enumerate() {
            if j > 0 {
                features.push(',');
            }
            let _ = write!(features, "{v}");
        }
        features.push('\n');
    }
    let mut labels = String::new();
    for l in &g.labels {
        match l {
            Some(c) => {
                let _ = writeln!(labels, "{c}");
            }
            None => labels.push_str("-1\n"),
        }
    }
    let mut masks = String::new();
    for i in 0..g.n() {
        masks.push_str(if g.train_mask[i] {
            "train\n"
        } else if g.val_mask[i] {
            "val\n"
        } else if g.test_mask[i] {
            "test\n"
        } else {
            "none\n"
        });
    }
    let texts = [edges, features, labels, masks];
    let mut manifest = DatasetManifest::new(name, g.n(), g.features.cols(), g.num_classes);
    manifest.checksum = Some(checksum(&texts));
    for (file, text) in manifest.file_names().iter().zip(&texts) {
        write(&dir.join(file), text)?;
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&dir.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub nodes: usize,
    /// Undirected edges, self-loops excluded.
    pub undirected_edges: usize,
    /// Both directions of every undirected edge (the usual "edge" count of
    /// citation benchmarks).
    pub directed_entries: usize,
    pub classes: usize,
    pub features: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unlabeled: usize,
    pub asymmetric_input_edges: usize,
}

pub fn dataset_stats(g: &SparseGraph) -> DatasetStats {
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    let undirected = g.adjacency.undirected_edge_count();
    DatasetStats {
        nodes: g.n(),
        undirected_edges: undirected,
        directed_entries: 2 * undirected,
        classes: g.num_classes,
        features: g.features.cols(),
        train: count(&g.train_mask),
        val: count(&g.val_mask),
        test: count(&g.test_mask),
        unlabeled: g.labels.iter().filter(|l| l.is_none()).count(),
        asymmetric_input_edges: g.adjacency.asymmetric_edges(),
    }
}

/// Planted-partition graph with Gaussian class-conditional features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between any two class means.
    pub mean_separation: f64,
    pub feature_std: f64,
    pub train_per_class: usize,
    pub val_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSbm(m));
        if self.num_classes == 0 || self.nodes_per_class == 0 {
            return bad("num_classes and nodes_per_class must be positive".into());
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return bad(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if self.train_per_class + self.val_per_class > self.nodes_per_class {
            return bad("train_per_class + val_per_class exceeds nodes_per_class".into());
        }
        if self.feature_dim < self.num_classes {
            return bad(format!(
                "feature_dim {} must be at least num_classes {} to place the class means",
                self.feature_dim, self.num_classes
            ));
        }
        if !(self.mean_separation >= 0.0 && self.mean_separation.is_finite())
            || !(self.feature_std >= 0.0 && self.feature_std.is_finite())
        {
            return bad("mean_separation and feature_std must be finite and nonnegative".into());
        }
        Ok(())
    }
}

/// Samples an SBM graph. Nodes are grouped by class; within each class the
/// first `train_per_class` nodes are training nodes, the next
/// `val_per_class` validation nodes and the rest test nodes.
///
/// Class means are the vertices of a centred regular simplex in the first
/// `num_classes` coordinates, scaled so every pair sits `mean_separation`
/// apart.
pub fn generate_sbm(spec: &SbmSpec) -> Result<SparseGraph, DataError> {
    spec.validate()?;
    let c = spec.num_classes;
    let per = spec.nodes_per_class;
    let n = c * per;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / per == j / per { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.extend([(i, j), (j, i)]);
            }
        }
    }

    let scale = spec.mean_separation / std::f64::consts::SQRT_2;
    let features = DenseMatrix::from_fn(n, spec.feature_dim, |i, j| {
        let class = i / per;
        let mean = if j < c {
            scale * (f64::from(u8::from(j == class)) - 1.0 / c as f64)
        } else {
            0.0
        };
        let noise: f64 = rng.sample(StandardNormal);
        mean + spec.feature_std * noise
    });

    let labels = (0..n).map(|i| Some(i / per)).collect();
    let pos = |i: usize| i % per;
    let train = (0..n).map(|i| pos(i) < spec.train_per_class).collect();
    let val = (0..n)
        .map(|i| (spec.train_per_class..spec.train_per_class + spec.val_per_class).contains(&pos(i)))
        .collect();
    let test = (0..n)
        .map(|i| pos(i) >= spec.train_per_class + spec.val_per_class)
        .collect();

    let adjacency = normalize_adjacency(&edges, n, None)?;
    Ok(SparseGraph::new(adjacency, features, labels, c, train, val, test)?)
}
