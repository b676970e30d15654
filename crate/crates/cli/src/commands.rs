use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use oversmooth::data::{dataset_stats, generate_sbm, load_dataset_with, save_dataset, DatasetManifest, DatasetStats, LoadOptions, SbmSpec};
use oversmooth::metrics::survival_from_svds;
use oversmooth::model::ModelError;
use oversmooth::train::greg_term;
use oversmooth::{svd_values, train_model, Family, ModelSpec, SparseGraph, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{bind_model, read_json, GraphSource, RunConfig, SweepConfig};
use crate::error::CliError;
use crate::output::{finite, write_json, write_metrics_csv, LayerSummary, RunSummary};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "params.ckpt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const BEST_DEPTH_FILE: &str = "best_depth.csv";

/// Flags shared by every subcommand. They override scalar config fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GlobalOpts {
    /// Sweep worker count; 0 is treated as 1.
    pub jobs: usize,
    /// Replaces the model and training seeds (the SBM seed for `gen`).
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Forces L1 row normalisation of features on.
    pub row_normalize: bool,
}

fn out_dir(config_out: &Option<PathBuf>, opts: &GlobalOpts, config_path: &Path) -> Result<PathBuf, CliError> {
    opts.out
        .clone()
        .or_else(|| {
            config_out
                .as_ref()
                .map(|o| config_path.parent().unwrap_or(Path::new("")).join(o))
        })
        .ok_or_else(|| CliError::config(config_path, "no output directory: set `out` or pass --out"))
}

fn apply_seed(spec: &mut ModelSpec, train: &mut TrainConfig, seed: u64) {
    spec.seed = seed;
    train.seed = seed;
}

/// Trains one configuration on an already loaded graph and writes
/// `metrics.csv`, `summary.json` and `params.ckpt` into `out`.
pub fn run_on_graph(
    g: &SparseGraph,
    cfg: &RunConfig,
    config_path: &Path,
    out: &Path,
) -> Result<RunSummary, CliError> {
    let start = Instant::now();
    let spec = bind_model(cfg.model.clone(), g, config_path)?;
    let mut echo = cfg.clone();
    echo.model = spec.clone();
    echo.out = Some(out.to_owned());
    log::info!(
        "training {} L={} K={} lambda_w={} seed={}",
        spec.family.as_str(),
        spec.depth_hops,
        spec.weight_layers(),
        cfg.train.lambda_w,
        spec.seed
    );
    let outcome = train_model(g, &spec, &cfg.train)?;

    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let metrics_path = out.join(METRICS_FILE);
    write_metrics_csv(&metrics_path, &outcome.records)?;
    let ckpt = out.join(CHECKPOINT_DIR);
    save_checkpoint(&ckpt, &spec, &outcome.params, cfg.train.epochs)?;

    let layers = outcome
        .params
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let s = svd_values(w).map_err(|e| CliError::Train(ModelError::from(e).into()))?;
            Ok(LayerSummary {
                layer: k + 1,
                shape: w.shape(),
                sigma_max: s.sigma_max,
                sigma_min: s.sigma_min,
                singular_values: s.all_singular_values,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let best = outcome.best_val_epoch();
    let last = outcome.history.last().expect("at least one epoch");
    let summary = RunSummary {
        config: echo,
        dataset: dataset_stats(g),
        epochs: cfg.train.epochs,
        best_epoch: best.map(|b| b.epoch),
        best_val_accuracy: best.and_then(|b| finite(b.val_acc)),
        test_accuracy_at_best_val: best.and_then(|b| finite(b.test_acc)),
        final_train_accuracy: finite(last.train_acc),
        final_val_accuracy: finite(last.val_acc),
        final_test_accuracy: finite(last.test_acc),
        final_loss: last.loss,
        layers,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        metrics_path: metrics_path.display().to_string(),
        checkpoint_path: ckpt.display().to_string(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn cmd_train(config_path: &Path, opts: &GlobalOpts) -> Result<RunSummary, CliError> {
    let mut cfg: RunConfig = read_json(config_path)?;
    if let Some(seed) = opts.seed {
        apply_seed(&mut cfg.model, &mut cfg.train, seed);
    }
    cfg.row_normalize |= opts.row_normalize;
    let out = out_dir(&cfg.out, opts, config_path)?;
    let g = GraphSource::resolve(&cfg.dataset, &cfg.sbm, config_path)?.load(cfg.row_normalize)?;
    run_on_graph(&g, &cfg, config_path, &out)
}

/// One grid cell: a depth, a K (equal to the depth outside `sgc_stack`)
/// and a λ_w.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub family: Family,
    pub depth_hops: usize,
    pub weight_layers: usize,
    pub lambda_w: f64,
    pub repeats: usize,
    pub completed: usize,
    pub best_val_mean: Option<f64>,
    pub best_val_std: Option<f64>,
    pub test_at_best_val_mean: Option<f64>,
    pub test_at_best_val_std: Option<f64>,
    /// First failure message, if any repeat failed.
    pub error: Option<String>,
}

/// Best depth per (K grid entry, λ_w), chosen by mean validation accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestDepth {
    /// The K grid entry; for GCN/ResGCN the row covers every depth with K = L.
    pub weight_layers: Option<usize>,
    pub lambda_w: f64,
    pub best_depth: usize,
    pub best_val_mean: f64,
    pub test_at_best_val_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub best: Vec<BestDepth>,
}

/// Population mean and standard deviation.
fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

pub fn cmd_sweep(config_path: &Path, opts: &GlobalOpts) -> Result<SweepReport, CliError> {
    let mut cfg: SweepConfig = read_json(config_path)?;
    if let Some(seed) = opts.seed {
        apply_seed(&mut cfg.model, &mut cfg.train, seed);
    }
    cfg.row_normalize |= opts.row_normalize;
    let out = out_dir(&cfg.out, opts, config_path)?;
    let bad = |m: &str| CliError::config(config_path, m);
    if cfg.depths.is_empty() || cfg.lambda_w.is_empty() {
        return Err(bad("`depths` and `lambda_w` must be nonempty"));
    }
    if cfg.repeats == 0 {
        return Err(bad("`repeats` must be at least 1"));
    }
    let ks: Vec<Option<usize>> = match (cfg.model.family, &cfg.weight_layers) {
        (Family::SgcStack, Some(ks)) if !ks.is_empty() => ks.iter().copied().map(Some).collect(),
        (Family::SgcStack, Some(_)) => return Err(bad("`weight_layers` must be nonempty")),
        (Family::SgcStack, None) => vec![Some(cfg.model.num_weight_layers.unwrap_or(1))],
        (_, None) => vec![None],
        (_, Some(_)) => return Err(bad("`weight_layers` applies to sgc_stack only")),
    };
    let g = GraphSource::resolve(&cfg.dataset, &cfg.sbm, config_path)?.load(cfg.row_normalize)?;

    // Grid order: K, λ_w, depth. Each (cell, repeat) is an independent job.
    let mut grid = Vec::new();
    for &k in &ks {
        for &lw in &cfg.lambda_w {
            for &depth in &cfg.depths {
                grid.push((k, lw, depth));
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..cfg.repeats).map(move |r| (c, r)))
        .collect();
    let run_job = |&(c, r): &(usize, usize)| -> Result<RunSummary, CliError> {
        let (k, lw, depth) = grid[c];
        let mut model = cfg.model.clone();
        let mut train = cfg.train.clone();
        model.depth_hops = depth;
        model.num_weight_layers = k;
        train.lambda_w = lw;
        if cfg.vary_seed {
            let seed = model.seed + r as u64;
            apply_seed(&mut model, &mut train, seed);
        }
        let run = RunConfig {
            dataset: cfg.dataset.clone(),
            sbm: cfg.sbm.clone(),
            row_normalize: cfg.row_normalize,
            model,
            train,
            out: None,
        };
        let cell_dir = out
            .join("cells")
            .join(format!("L{depth}_K{}_lw{lw}", k.unwrap_or(depth)))
            .join(format!("rep{r}"));
        run_on_graph(&g, &run, config_path, &cell_dir)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", opts.jobs)))?;
    let results: Vec<Result<RunSummary, CliError>> = pool.install(|| jobs.par_iter().map(run_job).collect());

    let mut cells = Vec::with_capacity(grid.len());
    for (c, &(k, lw, depth)) in grid.iter().enumerate() {
        let mine = &results[c * cfg.repeats..(c + 1) * cfg.repeats];
        let ok: Vec<&RunSummary> = mine.iter().filter_map(|r| r.as_ref().ok()).collect();
        let error = mine.iter().find_map(|r| r.as_ref().err()).map(|e| {
            log::warn!("sweep cell L={depth} K={k:?} lambda_w={lw} failed: {e}");
            e.to_string()
        });
        let vals: Vec<f64> = ok.iter().filter_map(|s| s.best_val_accuracy).collect();
        let tests: Vec<f64> = ok.iter().filter_map(|s| s.test_accuracy_at_best_val).collect();
        let (best_val_mean, best_val_std) = mean_std(&vals);
        let (test_at_best_val_mean, test_at_best_val_std) = mean_std(&tests);
        cells.push(SweepCell {
            family: cfg.model.family,
            depth_hops: depth,
            weight_layers: k.unwrap_or(depth),
            lambda_w: lw,
            repeats: cfg.repeats,
            completed: ok.len(),
            best_val_mean,
            best_val_std,
            test_at_best_val_mean,
            test_at_best_val_std,
            error,
        });
    }

    let mut best = Vec::new();
    for &k in &ks {
        for &lw in &cfg.lambda_w {
            let pick = grid
                .iter()
                .zip(&cells)
                .filter(|((ck, clw, _), _)| *ck == k && clw.to_bits() == lw.to_bits())
                .filter_map(|(_, cell)| Some((cell, cell.best_val_mean?, cell.test_at_best_val_mean?)))
                .fold(None, |acc: Option<(&SweepCell, f64, f64)>, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            if let Some((cell, v, t)) = pick {
                best.push(BestDepth {
                    weight_layers: k,
                    lambda_w: lw,
                    best_depth: cell.depth_hops,
                    best_val_mean: v,
                    test_at_best_val_mean: t,
                });
            }
        }
    }

    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut csv = String::from(
        "family,depth_hops,weight_layers,lambda_w,repeats,completed,best_val_mean,best_val_std,test_at_best_val_mean,test_at_best_val_std,error\n",
    );
    for c in &cells {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.family.as_str(),
            c.depth_hops,
            c.weight_layers,
            c.lambda_w,
            c.repeats,
            c.completed,
            opt(c.best_val_mean),
            opt(c.best_val_std),
            opt(c.test_at_best_val_mean),
            opt(c.test_at_best_val_std),
            c.error.as_deref().map(csv_text).unwrap_or_default()
        );
    }
    let path = out.join(SWEEP_FILE);
    fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;

    let mut csv = String::from("weight_layers,lambda_w,best_depth,best_val_mean,test_at_best_val_mean\n");
    for b in &best {
        let _ = writeln!(
            csv,
            "{},{},{},{:.16e},{:.16e}",
            b.weight_layers.map_or("L".to_owned(), |k| k.to_string()),
            b.lambda_w,
            b.best_depth,
            b.best_val_mean,
            b.test_at_best_val_mean
        );
    }
    let path = out.join(BEST_DEPTH_FILE);
    fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    let report = SweepReport { cells, best };
    write_json(&out.join("sweep.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectLayer {
    pub layer: usize,
    pub shape: (usize, usize),
    pub sigma_max: f64,
    pub sigma_min: f64,
    /// `None` when σ_min is zero.
    pub condition_number: Option<f64>,
    pub singular_values_above_threshold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectReport {
    pub family: Family,
    pub depth_hops: usize,
    pub epoch: usize,
    pub layers: Vec<InspectLayer>,
    pub threshold: f64,
    pub survival_probability: f64,
    pub greg: f64,
}

pub fn cmd_inspect(checkpoint: &Path, threshold: f64) -> Result<InspectReport, CliError> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(CliError::Usage(format!("threshold must be positive, got {threshold}")));
    }
    let (manifest, params) = load_checkpoint(checkpoint)?;
    let corrupt = |e: String| CliError::Checkpoint {
        path: checkpoint.to_owned(),
        msg: e,
    };
    let svds = params
        .weights
        .iter()
        .map(svd_values)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| corrupt(e.to_string()))?;
    let survival = survival_from_svds(&svds, threshold).map_err(|e| corrupt(e.to_string()))?;
    let layers = svds
        .iter()
        .enumerate()
        .map(|(k, s)| InspectLayer {
            layer: k + 1,
            shape: s.shape,
            sigma_max: s.sigma_max,
            sigma_min: s.sigma_min,
            condition_number: finite(s.condition_number()),
            singular_values_above_threshold: survival.per_layer_k[k],
        })
        .collect();
    Ok(InspectReport {
        family: manifest.family,
        depth_hops: manifest.depth_hops,
        epoch: manifest.epoch,
        layers,
        threshold,
        survival_probability: survival.probability,
        greg: greg_term(&params).0,
    })
}

impl InspectReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} L={} epoch={}\nlayer  shape      sigma_max              sigma_min              condition   k>{}\n",
            self.family.as_str(),
            self.depth_hops,
            self.epoch,
            self.threshold
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<6} {:<10} {:<22.15e} {:<22.15e} {:<11} {}",
                l.layer,
                format!("{}x{}", l.shape.0, l.shape.1),
                l.sigma_max,
                l.sigma_min,
                l.condition_number.map_or("inf".to_owned(), |c| format!("{c:.4e}")),
                l.singular_values_above_threshold
            );
        }
        let _ = writeln!(s, "survival_probability {:.16e}", self.survival_probability);
        let _ = writeln!(s, "greg {:.16e}", self.greg);
        s
    }
}

pub fn cmd_gen(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<DatasetManifest, CliError> {
    let mut spec: SbmSpec = read_json(spec_path)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()
        .map_err(|e| CliError::config(spec_path, e.to_string()))?;
    let g = generate_sbm(&spec)?;
    let name = spec_path
        .file_stem()
        .map_or("sbm".to_owned(), |s| s.to_string_lossy().into_owned());
    Ok(save_dataset(&g, &name, out)?)
}

pub fn cmd_stats(dir: &Path, row_normalize: bool) -> Result<DatasetStats, CliError> {
    Ok(dataset_stats(&load_dataset_with(dir, LoadOptions { row_normalize })?))
}

pub fn stats_text(s: &DatasetStats) -> String {
    format!(
        "nodes {}\nundirected_edges {}\ndirected_entries {}\nclasses {}\nfeatures {}\ntrain {}\nval {}\ntest {}\nunlabeled {}\nasymmetric_input_edges {}\n",
        s.nodes,
        s.undirected_edges,
        s.directed_entries,
        s.classes,
        s.features,
        s.train,
        s.val,
        s.test,
        s.unlabeled,
        s.asymmetric_input_edges
    )
}
