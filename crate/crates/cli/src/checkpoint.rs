//! Checkpoint directories: `manifest.json` plus one decimal text file per
//! matrix. Values are written with 17 significant digits, which round-trips
//! every f64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use oversmooth::model::Parameters;
use oversmooth::{DenseMatrix, Family, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: u32,
    pub family: Family,
    pub depth_hops: usize,
    pub num_weight_layers: usize,
    pub width: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    /// Epochs completed when the parameters were written.
    pub epoch: usize,
    pub weights: Vec<MatrixFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_projection: Option<MatrixFile>,
}

impl CheckpointManifest {
    pub fn model_spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.family, self.depth_hops, self.input_dim, self.num_classes);
        spec.width = self.width;
        spec.seed = self.seed;
        if self.family == Family::SgcStack {
            spec.num_weight_layers = Some(self.num_weight_layers);
        }
        spec
    }
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty matrix file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| format!("bad header {header:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [rows, cols] = dims[..] else {
        return Err(format!("header must be `rows cols`, got {header:?}"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|e| format!("row {i}: bad value {tok:?}: {e}"))?);
        }
        if data.len() - before != cols {
            return Err(format!("row {i} has {} values, expected {cols}", data.len() - before));
        }
    }
    if data.len() != rows * cols {
        return Err(format!("expected {rows} rows, found {}", data.len() / cols.max(1)));
    }
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
}

pub fn save_checkpoint(
    dir: &Path,
    spec: &ModelSpec,
    params: &Parameters,
    epoch: usize,
) -> Result<CheckpointManifest, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let put = |name: String, m: &DenseMatrix| -> Result<MatrixFile, CliError> {
        let path = dir.join(&name);
        fs::write(&path, format_matrix(m)).map_err(|e| CliError::io(&path, e))?;
        Ok(MatrixFile {
            file: name,
            rows: m.rows(),
            cols: m.cols(),
        })
    };
    let input_projection = params
        .input_projection
        .as_ref()
        .map(|p| put("input_projection.txt".into(), p))
        .transpose()?;
    let weights = params
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| put(format!("w{}.txt", k + 1), w))
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT,
        family: spec.family,
        depth_hops: spec.depth_hops,
        num_weight_layers: spec.weight_layers(),
        width: spec.width,
        input_dim: spec.input_dim,
        num_classes: spec.num_classes,
        seed: spec.seed,
        epoch,
        weights,
        input_projection,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// Reads and validates a checkpoint. Every failure, I/O included, is
/// reported as a corrupt checkpoint.
pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Parameters), CliError> {
    let corrupt = |msg: String| CliError::Checkpoint {
        path: dir.to_owned(),
        msg,
    };
    let read = |name: &str| {
        fs::read_to_string(dir.join(name)).map_err(|e| corrupt(format!("{name}: {e}")))
    };
    let manifest: CheckpointManifest = serde_json::from_str(&read("manifest.json")?)
        .map_err(|e| corrupt(format!("manifest.json: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(corrupt(format!("unsupported format {}", manifest.format)));
    }
    let load = |f: &MatrixFile| -> Result<DenseMatrix, CliError> {
        let m = parse_matrix(&read(&f.file)?).map_err(|e| corrupt(format!("{}: {e}", f.file)))?;
        if m.shape() != (f.rows, f.cols) {
            return Err(corrupt(format!(
                "{}: shape {:?}, manifest says {:?}",
                f.file,
                m.shape(),
                (f.rows, f.cols)
            )));
        }
        Ok(m)
    };
    let params = Parameters {
        weights: manifest.weights.iter().map(&load).collect::<Result<_, _>>()?,
        input_projection: manifest.input_projection.as_ref().map(&load).transpose()?,
    };

    let spec = manifest.model_spec();
    spec.validate().map_err(|e| corrupt(e.to_string()))?;
    let shapes: Vec<(usize, usize)> = params.weights.iter().map(DenseMatrix::shape).collect();
    if shapes != spec.weight_shapes() {
        return Err(corrupt(format!(
            "weight shapes {shapes:?} do not match the model ({:?})",
            spec.weight_shapes()
        )));
    }
    let want_proj = (spec.family == Family::Resgcn).then_some((spec.input_dim, spec.width));
    if params.input_projection.as_ref().map(DenseMatrix::shape) != want_proj {
        return Err(corrupt("input projection does not match the model family".into()));
    }
    Ok((manifest, params))
}
