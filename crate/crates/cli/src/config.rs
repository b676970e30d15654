//! JSON run and sweep configurations.

use std::fs;
use std::path::{Path, PathBuf};

use oversmooth::data::{generate_sbm, load_dataset_with, LoadOptions, SbmSpec};
use oversmooth::{Family, ModelSpec, SparseGraph, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where the graph comes from: a dataset directory or an SBM spec, never
/// both. Relative dataset paths are resolved against the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmSpec>,
    #[serde(default)]
    pub row_normalize: bool,
    /// `input_dim` and `num_classes` may be omitted; they are taken from
    /// the graph.
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmSpec>,
    #[serde(default)]
    pub row_normalize: bool,
    /// Base model; `depth_hops` and `num_weight_layers` are overridden per cell.
    pub model: ModelSpec,
    /// Base training config; `lambda_w` is overridden per cell.
    #[serde(default)]
    pub train: TrainConfig,
    pub depths: Vec<usize>,
    pub lambda_w: Vec<f64>,
    /// K grid, `sgc_stack` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_layers: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub repeats: usize,
    /// Repeat r uses seed + r for both model and training seeds; when
    /// false every repeat reuses the base seeds.
    #[serde(default = "yes")]
    pub vary_seed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(path, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(path, e.to_string()))
}

/// A resolved graph source.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    Dir(PathBuf),
    Sbm(SbmSpec),
}

impl GraphSource {
    pub fn resolve(
        dataset: &Option<PathBuf>,
        sbm: &Option<SbmSpec>,
        config_path: &Path,
    ) -> Result<Self, CliError> {
        match (dataset, sbm) {
            (Some(d), None) => {
                let base = config_path.parent().unwrap_or(Path::new(""));
                Ok(GraphSource::Dir(base.join(d)))
            }
            (None, Some(s)) => {
                s.validate()
                    .map_err(|e| CliError::config(config_path, e.to_string()))?;
                Ok(GraphSource::Sbm(s.clone()))
            }
            _ => Err(CliError::config(
                config_path,
                "exactly one of `dataset` and `sbm` must be given",
            )),
        }
    }

    pub fn load(&self, row_normalize: bool) -> Result<SparseGraph, CliError> {
        let mut g = match self {
            GraphSource::Dir(dir) => load_dataset_with(dir, LoadOptions { row_normalize })?,
            GraphSource::Sbm(spec) => generate_sbm(spec)?,
        };
        if row_normalize && matches!(self, GraphSource::Sbm(_)) {
            for i in 0..g.n() {
                let row = g.features.row_mut(i);
                let s: f64 = row.iter().map(|v| v.abs()).sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|v| *v /= s);
                }
            }
        }
        Ok(g)
    }
}

/// Fills the graph-derived model dimensions, rejecting conflicting values.
pub fn bind_model(mut spec: ModelSpec, g: &SparseGraph, config_path: &Path) -> Result<ModelSpec, CliError> {
    for (name, field, actual) in [
        ("input_dim", &mut spec.input_dim, g.features.cols()),
        ("num_classes", &mut spec.num_classes, g.num_classes),
    ] {
        if *field != 0 && *field != actual {
            return Err(CliError::config(
                config_path,
                format!("model.{name} is {} but the graph has {actual}", *field),
            ));
        }
        *field = actual;
    }
    if spec.family != Family::SgcStack {
        spec.num_weight_layers = None;
    }
    Ok(spec)
}
