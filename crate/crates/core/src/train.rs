//! Cross-entropy, the G-Reg row-deviation term, Adam, cold start, and the
//! full-batch training loop with metric snapshots.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SparseGraph;
use crate::linalg::{svd_values, DenseMatrix, SvdSummary, DEFAULT_DENSE_THRESHOLD};
use crate::metrics::{
    self, centroid_angles, embedding_norm_stats, gram_stats, layer_bounds_with_svd,
    network_bounds_with, GraphSpectrum, LowerBoundProvenance, MetricsError,
};
use crate::model::{backward, forward, init_parameters, Family, ModelError, ModelSpec, Parameters};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("non-finite {quantity} at epoch {epoch}")]
    NonFinite { epoch: usize, quantity: &'static str },
    #[error("mask selects no labelled nodes")]
    EmptyMask,
    #[error("node {node} is selected by the training mask but has no valid label")]
    InvalidLabel { node: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Whether the G-Reg term is subtracted from (reward) or added to
/// (penalty) the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GregSign {
    #[default]
    Reward,
    Penalty,
}

impl GregSign {
    /// Coefficient of the G-Reg value in the objective, per unit λ_w.
    fn coefficient(self) -> f64 {
        match self {
            GregSign::Reward => -1.0,
            GregSign::Penalty => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricLayers {
    #[default]
    FirstMidLast,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AllNodes,
    TrainNodes,
    /// Quantities that belong to the parameters or the whole run.
    Model,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::AllNodes => "all_nodes",
            Scope::TrainNodes => "train_nodes",
            Scope::Model => "model",
        })
    }
}

/// A 1-based weight layer, or the network as a whole.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerRef {
    Index(usize),
    Output,
}

impl fmt::Display for LayerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerRef::Index(i) => write!(f, "{i}"),
            LayerRef::Output => f.write_str("output"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub layer: LayerRef,
    pub scope: Scope,
    pub metric: &'static str,
    pub value: f64,
}

fn default_weight_decay() -> f64 {
    5e-4
}
fn default_epochs() -> usize {
    200
}
fn default_scopes() -> Vec<Scope> {
    vec![Scope::AllNodes, Scope::TrainNodes]
}
fn one() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn yes() -> bool {
    true
}
fn default_dense_threshold() -> usize {
    DEFAULT_DENSE_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Defaults to 1e-3 for GCN/ResGCN and 6e-3 for the SGC stack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub lambda_w: f64,
    #[serde(default)]
    pub greg_sign: GregSign,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub cold_start: bool,
    #[serde(default)]
    pub metric_layers: MetricLayers,
    #[serde(default = "default_scopes")]
    pub metric_scopes: Vec<Scope>,
    /// Embedding metrics are taken every `metric_every` epochs (and at the
    /// first and last epoch).
    #[serde(default = "one")]
    pub metric_every: usize,
    /// Metrics that need weight SVDs (bounds, singular values) are taken
    /// every `spectral_every` epochs (and at the first and last epoch).
    #[serde(default = "ten")]
    pub spectral_every: usize,
    #[serde(default = "yes")]
    pub network_bounds: bool,
    #[serde(default = "default_dense_threshold")]
    pub dense_threshold: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn effective_lr(&self, family: Family) -> f64 {
        self.lr.unwrap_or(match family {
            Family::Gcn | Family::Resgcn => 1e-3,
            Family::SgcStack => 6e-3,
        })
    }

    pub fn validate(&self, family: Family) -> Result<(), TrainError> {
        let lr = self.effective_lr(family);
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(lr.is_finite() && lr > 0.0) {
            return bad(format!("lr must be positive, got {lr}"));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lambda_w.is_finite() && self.lambda_w >= 0.0) {
            return bad(format!("lambda_w must be nonnegative, got {}", self.lambda_w));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            ));
        }
        if self.metric_every == 0 || self.spectral_every == 0 {
            return bad("metric cadences must be at least 1".into());
        }
        Ok(())
    }
}

/// Mean −log softmax(logits)[label] over the masked nodes, and its gradient.
pub fn cross_entropy_loss(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<(f64, DenseMatrix), TrainError> {
    let c = logits.cols();
    let selected: Vec<(usize, usize)> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| match labels.get(i).copied().flatten() {
            Some(y) if y < c => Ok((i, y)),
            _ => Err(TrainError::InvalidLabel { node: i }),
        })
        .collect::<Result<_, _>>()?;
    if selected.is_empty() {
        return Err(TrainError::EmptyMask);
    }
    let scale = 1.0 / selected.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), c);
    let mut loss = 0.0;
    for (i, y) in selected {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * scale;
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Σ_l mean_i std(W^(l)_i) over the weight matrices (population std of
/// each row), with its exact gradient. The ResGCN input projection is not
/// included; a constant row contributes zero gradient.
pub fn greg_term(p: &Parameters) -> (f64, Parameters) {
    let mut grads = p.zeros_like();
    let mut value = 0.0;
    for (w, g) in p.weights.iter().zip(grads.weights.iter_mut()) {
        let (rows, cols) = w.shape();
        if rows == 0 || cols == 0 {
            continue;
        }
        let per_row = 1.0 / rows as f64;
        for i in 0..rows {
            let row = w.row(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            let std = var.sqrt();
            value += per_row * std;
            if std > 0.0 {
                let k = per_row / (cols as f64 * std);
                for (gj, v) in g.row_mut(i).iter_mut().zip(row) {
                    *gj = k * (v - mean);
                }
            }
        }
    }
    (value, grads)
}

/// Copy of `g` with every non-training feature row zeroed.
pub fn apply_cold_start(g: &SparseGraph) -> SparseGraph {
    let mut out = g.clone();
    for (i, &train) in g.train_mask.iter().enumerate() {
        if !train {
            out.features.row_mut(i).fill(0.0);
        }
    }
    out
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub t: u64,
}

impl AdamState {
    pub fn new(p: &Parameters) -> Self {
        Self {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam update; `weight_decay·θ` is added to the gradient first.
pub fn adam_step(
    p: &mut Parameters,
    grads: &Parameters,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) {
    assert!(p.same_shape(grads) && p.same_shape(&state.m), "adam shape mismatch");
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (((w, g), m), v) in p
        .matrices_mut()
        .zip(grads.matrices())
        .zip(state.m.matrices_mut())
        .zip(state.v.matrices_mut())
    {
        for (((w, &g), m), v) in w
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g + weight_decay * *w;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Fraction of masked, labelled nodes whose argmax logit (lowest index on
/// ties) equals the label. NaN if the mask selects no labelled node.
pub fn accuracy(logits: &DenseMatrix, labels: &[Option<usize>], mask: &[bool]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for i in 0..logits.rows() {
        let Some(y) = labels[i] else { continue };
        if !mask[i] {
            continue;
        }
        total += 1;
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == y {
            hit += 1;
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}

/// Scalar summary of one epoch, measured before that epoch's update.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// cross_entropy + greg_coefficient·λ_w·greg + decay.
    pub loss: f64,
    pub cross_entropy: f64,
    pub greg: f64,
    /// (weight_decay / 2)·‖θ‖².
    pub decay: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: Parameters,
    pub records: Vec<MetricRecord>,
    pub history: Vec<EpochStats>,
}

impl TrainOutcome {
    /// Epoch with the highest validation accuracy (earliest on ties).
    pub fn best_val_epoch(&self) -> Option<&EpochStats> {
        self.history
            .iter()
            .filter(|s| !s.val_acc.is_nan())
            .fold(None, |best: Option<&EpochStats>, s| match best {
                Some(b) if b.val_acc >= s.val_acc => Some(b),
                _ => Some(s),
            })
    }
}

/// 1-based layers recorded under `which` for a K-layer model.
pub fn metric_layer_indices(which: MetricLayers, k: usize) -> Vec<usize> {
    match which {
        MetricLayers::All => (1..=k).collect(),
        MetricLayers::FirstMidLast => {
            let mut v = vec![1, k.div_ceil(2), k];
            v.dedup();
            v
        }
    }
}

/// Trains `spec` on `g` full-batch with Adam.
///
/// Each epoch runs forward on the whole graph, records accuracies and (at
/// the configured cadences) metric snapshots from that forward pass, then
/// steps on `CE ± λ_w·greg` with weight decay folded into Adam.
pub fn train_model(
    g: &SparseGraph,
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    spec.validate()?;
    cfg.validate(spec.family)?;
    if spec.input_dim != g.features.cols() || spec.num_classes != g.num_classes {
        return Err(ModelError::InvalidSpec(format!(
            "spec expects {} features / {} classes, graph has {} / {}",
            spec.input_dim,
            spec.num_classes,
            g.features.cols(),
            g.num_classes
        ))
        .into());
    }
    let cold;
    let g = if cfg.cold_start {
        cold = apply_cold_start(g);
        &cold
    } else {
        g
    };
    let adj = &g.adjacency;
    let x = &g.features;
    let lr = cfg.effective_lr(spec.family);
    let greg_coef = cfg.greg_sign.coefficient() * cfg.lambda_w;
    let spectrum = if cfg.network_bounds {
        Some(GraphSpectrum::compute(adj, cfg.dense_threshold)?)
    } else {
        None
    };
    let layers = metric_layer_indices(cfg.metric_layers, spec.weight_layers());
    let all = g.all_mask();

    let mut params = init_parameters(spec)?;
    let mut adam = AdamState::new(&params);
    let mut records = Vec::new();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let tape = forward(adj, x, &params, spec)?;
        let logits = tape.logits();
        let (ce, dlogits) = cross_entropy_loss(logits, &g.labels, &g.train_mask)?;
        let (greg, dgreg) = greg_term(&params);
        let decay = 0.5 * cfg.weight_decay * params.squared_norm();
        let loss = ce + greg_coef * greg + decay;
        for (quantity, v) in [("cross_entropy", ce), ("greg", greg), ("loss", loss)] {
            if !v.is_finite() {
                return Err(TrainError::NonFinite { epoch, quantity });
            }
        }
        let stats = EpochStats {
            epoch,
            loss,
            cross_entropy: ce,
            greg,
            decay,
            train_acc: accuracy(logits, &g.labels, &g.train_mask),
            val_acc: accuracy(logits, &g.labels, &g.val_mask),
            test_acc: accuracy(logits, &g.labels, &g.test_mask),
        };

        let edge = epoch == 1 || epoch == cfg.epochs;
        if edge || epoch % cfg.metric_every == 0 {
            let snap = Snapshot {
                epoch,
                g,
                params: &params,
                tape: &tape,
                cfg,
                layers: &layers,
                all: &all,
                spectral: edge || epoch % cfg.spectral_every == 0,
                spectrum: spectrum.as_ref(),
            };
            snap.record(&stats, &mut records)?;
        }
        history.push(stats);

        let mut grads = backward(&tape, adj, &params, &dlogits)?;
        if greg_coef != 0.0 {
            for (gw, dw) in grads.weights.iter_mut().zip(&dgreg.weights) {
                gw.axpy(greg_coef, dw).map_err(ModelError::from)?;
            }
        }
        adam_step(&mut params, &grads, &mut adam, lr, cfg.weight_decay);
        if params.matrices().any(|w| !w.is_finite()) {
            return Err(TrainError::NonFinite {
                epoch,
                quantity: "parameters",
            });
        }
    }
    Ok(TrainOutcome {
        params,
        records,
        history,
    })
}

struct Snapshot<'a> {
    epoch: usize,
    g: &'a SparseGraph,
    params: &'a Parameters,
    tape: &'a crate::model::ForwardTape,
    cfg: &'a TrainConfig,
    layers: &'a [usize],
    all: &'a [bool],
    spectral: bool,
    spectrum: Option<&'a GraphSpectrum>,
}

impl Snapshot<'_> {
    fn record(&self, stats: &EpochStats, out: &mut Vec<MetricRecord>) -> Result<(), TrainError> {
        let epoch = self.epoch;
        let mut push = |layer, scope, metric, value| {
            out.push(MetricRecord {
                epoch,
                layer,
                scope,
                metric,
                value,
            })
        };
        for (metric, value) in [
            ("loss", stats.loss),
            ("cross_entropy", stats.cross_entropy),
            ("greg", stats.greg),
            ("train_acc", stats.train_acc),
            ("val_acc", stats.val_acc),
            ("test_acc", stats.test_acc),
        ] {
            push(LayerRef::Output, Scope::Model, metric, value);
        }

        let svds: Vec<Option<SvdSummary>> = if self.spectral {
            let needed = |k: usize| self.spectrum.is_some() || self.layers.contains(&(k + 1));
            self.params
                .weights
                .iter()
                .enumerate()
                .map(|(k, w)| needed(k).then(|| svd_values(w)).transpose())
                .collect::<Result<_, _>>()
                .map_err(MetricsError::from)?
        } else {
            vec![None; self.params.weights.len()]
        };

        for &l in self.layers {
            let layer = LayerRef::Index(l);
            let tape = &self.tape.layers[l - 1];
            if let Some(svd) = &svds[l - 1] {
                push(layer, Scope::Model, "sigma_max", svd.sigma_max);
                push(layer, Scope::Model, "sigma_min", svd.sigma_min);
            }
            for &scope in &self.cfg.metric_scopes {
                let mask: &[bool] = match scope {
                    Scope::AllNodes => self.all,
                    Scope::TrainNodes => &self.g.train_mask,
                    Scope::Model => continue,
                };
                let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
                if idx.is_empty() {
                    continue;
                }
                let (h_hat, h_out) = if idx.len() == mask.len() {
                    (tape.h_hat.clone(), tape.post_activation.clone())
                } else {
                    (tape.h_hat.select_rows(&idx), tape.post_activation.select_rows(&idx))
                };
                let gs = gram_stats(&h_out);
                push(layer, scope, "mased", metrics::compute_mased(&h_out));
                if let Ok(eps) = metrics::spectral_alignment_epsilon(&h_out) {
                    push(layer, scope, "epsilon", eps);
                }
                push(layer, scope, "gram_trace", gs.trace);
                let norms = embedding_norm_stats(&tape.post_activation, mask)?;
                push(layer, scope, "norm_mean", norms.mean);
                push(layer, scope, "norm_min", norms.min);
                push(layer, scope, "norm_max", norms.max);
                if let Ok(angles) = centroid_angles(&tape.post_activation, &self.g.labels, mask) {
                    if angles.mean_angle_degrees.is_finite() {
                        push(layer, scope, "centroid_angle", angles.mean_angle_degrees);
                    }
                    push(layer, scope, "centroid_skipped_pairs", angles.skipped_pairs as f64);
                }
                if let Some(svd) = &svds[l - 1] {
                    let b = layer_bounds_with_svd(&h_hat, svd, &h_out)?;
                    push(layer, scope, "bound_lower", b.lower);
                    push(layer, scope, "bound_upper", b.upper);
                    push(layer, scope, "bound_degenerate", f64::from(u8::from(b.degenerate)));
                }
            }
        }

        if let (Some(spectrum), true) = (self.spectrum, self.spectral) {
            let svds: Vec<SvdSummary> = svds.into_iter().flatten().collect();
            let eps = metrics::spectral_alignment_epsilon(self.tape.logits()).unwrap_or(0.0);
            let nb = network_bounds_with(spectrum, &self.g.features, &svds, eps)?;
            push(LayerRef::Output, Scope::AllNodes, "network_lower", nb.lower);
            push(LayerRef::Output, Scope::AllNodes, "network_upper", nb.upper);
            push(
                LayerRef::Output,
                Scope::AllNodes,
                "network_lower_computed",
                f64::from(u8::from(nb.provenance == LowerBoundProvenance::Computed)),
            );
        }
        Ok(())
    }
}
