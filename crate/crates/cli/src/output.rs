//! Run artifacts: `metrics.csv` and `summary.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use oversmooth::data::DatasetStats;
use oversmooth::MetricRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const METRICS_HEADER: &str = "epoch,layer,scope,metric,value";

/// One CSV line (no newline). Values carry 17 significant digits.
pub fn format_record(r: &MetricRecord) -> String {
    format!("{},{},{},{},{:.16e}", r.epoch, r.layer, r.scope, r.metric, r.value)
}

pub fn write_metrics_csv(path: &Path, records: &[MetricRecord]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = || -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        for r in records {
            writeln!(w, "{}", format_record(r))?;
        }
        w.flush()
    };
    put().map_err(|e| CliError::io(path, e))
}

/// A `metrics.csv` row as read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRecord {
    pub epoch: usize,
    /// Layer index, or `output`.
    pub layer: String,
    pub scope: String,
    pub metric: String,
    pub value: f64,
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<CsvRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, msg: &str| {
        CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {line}: {msg}")),
        )
    };
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(bad(1, "missing header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 2, "expected 5 fields"));
            }
            Ok(CsvRecord {
                epoch: f[0].parse().map_err(|_| bad(i + 2, "bad epoch"))?,
                layer: f[1].to_owned(),
                scope: f[2].to_owned(),
                metric: f[3].to_owned(),
                value: f[4].parse().map_err(|_| bad(i + 2, "bad value"))?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    /// 1-based.
    pub layer: usize,
    pub shape: (usize, usize),
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
}

/// Accuracies are `None` when the corresponding split is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// The configuration actually run (seeds and graph dimensions resolved).
    pub config: RunConfig,
    pub dataset: DatasetStats,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub test_accuracy_at_best_val: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_val_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub final_loss: f64,
    /// Singular values of the weights after the last update.
    pub layers: Vec<LayerSummary>,
    pub wall_time_seconds: f64,
    pub metrics_path: String,
    pub checkpoint_path: String,
}

pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("summary serializes") + "\n";
    fs::write(path, json).map_err(|e| CliError::io(path, e))
}
