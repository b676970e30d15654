//! MASED and the diagnostics built around it: per-layer and network-level
//! bounds, spectral alignment, embedding norms, class-centroid angles,
//! direction survival and the row-norm spread bound.
//!
//! Everything here is a pure function of an embedding snapshot and the
//! weight matrices; nothing mutates training state.

use thiserror::Error;

use crate::graph::NormalizedAdjacency;
use crate::linalg::{
    self, dot, min_singular_sparse, spectral_norm_sparse, svd_values, DenseMatrix, LinalgError,
    SvdSummary,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("degenerate-all-zero: every embedding is the zero vector")]
    DegenerateAllZero,
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("need at least two classes with masked members, found {found}")]
    TooFewClasses { found: usize },
    #[error("weight list is empty")]
    EmptyWeights,
    #[error("{what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The two Gram quantities MASED needs, computed without forming HHᵀ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramStats {
    /// tr(HHᵀ) = Σ_i ‖H_i‖².
    pub trace: f64,
    /// 1ᵀHHᵀ1 = ‖1ᵀH‖².
    pub uniform_energy: f64,
    pub n: usize,
    pub d: usize,
}

pub fn gram_stats(h: &DenseMatrix) -> GramStats {
    let mut col_sums = vec![0.0; h.cols()];
    let mut trace = 0.0;
    for i in 0..h.rows() {
        let row = h.row(i);
        trace += dot(row, row);
        for (s, v) in col_sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    GramStats {
        trace,
        uniform_energy: dot(&col_sums, &col_sums),
        n: h.rows(),
        d: h.cols(),
    }
}

/// Mean average squared Euclidean distance over all ordered row pairs,
/// (2/N)(tr G − 1ᵀG1/N).
pub fn compute_mased(h: &DenseMatrix) -> f64 {
    if h.rows() == 0 {
        return 0.0;
    }
    mased_from_stats(&gram_stats(h))
}

fn mased_from_stats(s: &GramStats) -> f64 {
    let n = s.n as f64;
    let v = 2.0 / n * (s.trace - s.uniform_energy / n);
    if v < 0.0 {
        debug_assert!(v > -1e-9 * s.trace.max(1.0), "MASED {v} far below zero");
        0.0
    } else {
        v
    }
}

/// Smallest ε with Σλ(vᵀ1)² ≤ (1−ε)·N·Σλ for the Gram eigenpairs of `h`,
/// i.e. 1 − 1ᵀG1 / (N·tr G), clamped to [0, 1].
pub fn spectral_alignment_epsilon(h: &DenseMatrix) -> Result<f64, MetricsError> {
    epsilon_from_stats(&gram_stats(h))
}

fn epsilon_from_stats(s: &GramStats) -> Result<f64, MetricsError> {
    if s.trace <= 0.0 {
        return Err(MetricsError::DegenerateAllZero);
    }
    Ok((1.0 - s.uniform_energy / (s.n as f64 * s.trace)).clamp(0.0, 1.0))
}

/// Per-layer MASED with the singular-value sandwich around it.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBounds {
    pub mased: f64,
    /// 2·ε·σ_min²(W)·m_Ĥ².
    pub lower: f64,
    /// 2·σ_max²(W)·M_Ĥ².
    pub upper: f64,
    pub epsilon: f64,
    /// Smallest row gain of W (σ_min, or 0 for a tall W).
    pub sigma_min_w: f64,
    pub sigma_max_w: f64,
    /// min_i ‖Ĥ_i‖.
    pub m_hat: f64,
    /// max_i ‖Ĥ_i‖.
    pub big_m_hat: f64,
    /// Set when the output is all zeros and ε is undefined.
    pub degenerate: bool,
}

/// Bounds for `h_out = act(h_hat · w)` as recorded by a forward pass.
pub fn layer_bounds(
    h_hat: &DenseMatrix,
    w: &DenseMatrix,
    h_out: &DenseMatrix,
) -> Result<LayerBounds, MetricsError> {
    let svd = svd_values(w)?;
    layer_bounds_with_svd(h_hat, &svd, h_out)
}

/// [`layer_bounds`] with the weight SVD already computed.
pub fn layer_bounds_with_svd(
    h_hat: &DenseMatrix,
    svd: &SvdSummary,
    h_out: &DenseMatrix,
) -> Result<LayerBounds, MetricsError> {
    if h_hat.cols() != svd.shape.0 {
        return Err(MetricsError::Shape {
            what: "h_hat columns vs weight rows",
            expected: svd.shape.0,
            found: h_hat.cols(),
        });
    }
    if h_hat.rows() != h_out.rows() {
        return Err(MetricsError::Shape {
            what: "h_hat rows vs output rows",
            expected: h_out.rows(),
            found: h_hat.rows(),
        });
    }
    if h_hat.rows() == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let norms = h_hat.row_norms();
    let m_hat = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m_hat = norms.iter().copied().fold(0.0, f64::max);
    let stats = gram_stats(h_out);
    let mased = mased_from_stats(&stats);
    let (epsilon, degenerate) = match epsilon_from_stats(&stats) {
        Ok(e) => (e, false),
        Err(_) => (0.0, true),
    };
    let sigma_min_w = svd.min_row_gain();
    let sigma_max_w = svd.sigma_max;
    Ok(LayerBounds {
        mased,
        lower: 2.0 * epsilon * sigma_min_w.powi(2) * m_hat.powi(2),
        upper: 2.0 * sigma_max_w.powi(2) * big_m_hat.powi(2),
        epsilon,
        sigma_min_w,
        sigma_max_w,
        m_hat,
        big_m_hat,
        degenerate,
    })
}

/// Where the network-level lower bound came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LowerBoundProvenance {
    Computed,
    /// σ_min(Â) was above the dense threshold; the lower bound is reported as 0.
    SigmaMinNotComputed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBounds {
    pub lower: f64,
    pub upper: f64,
    pub provenance: LowerBoundProvenance,
}

/// σ_max(Â) and, when affordable, σ_min(Â).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphSpectrum {
    pub sigma_max: f64,
    pub sigma_min: Option<f64>,
}

impl GraphSpectrum {
    pub fn compute(adj: &NormalizedAdjacency, dense_threshold: usize) -> Result<Self, MetricsError> {
        Ok(Self {
            sigma_max: spectral_norm_sparse(adj)?,
            sigma_min: min_singular_sparse(adj, dense_threshold),
        })
    }
}

/// Final-layer MASED bounds from the input features and every weight matrix.
pub fn network_bounds(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    weights: &[DenseMatrix],
    epsilon: f64,
    dense_threshold: usize,
) -> Result<NetworkBounds, MetricsError> {
    if weights.is_empty() {
        return Err(MetricsError::EmptyWeights);
    }
    let spectrum = GraphSpectrum::compute(adj, dense_threshold)?;
    let svds = weights
        .iter()
        .map(svd_values)
        .collect::<Result<Vec<_>, _>>()?;
    network_bounds_with(&spectrum, x, &svds, epsilon)
}

/// [`network_bounds`] from a precomputed graph spectrum and weight SVDs.
pub fn network_bounds_with(
    spectrum: &GraphSpectrum,
    x: &DenseMatrix,
    weight_svds: &[SvdSummary],
    epsilon: f64,
) -> Result<NetworkBounds, MetricsError> {
    let depth = weight_svds.len();
    if depth == 0 {
        return Err(MetricsError::EmptyWeights);
    }
    if x.rows() == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let norms = x.row_norms();
    let m_x = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let big_m_x = norms.iter().copied().fold(0.0, f64::max);
    let hops = (depth - 1) as i32;
    let prod_max: f64 = weight_svds.iter().map(|s| s.sigma_max).product();
    let prod_min: f64 = weight_svds.iter().map(SvdSummary::min_row_gain).product();
    let upper = 2.0 * (spectrum.sigma_max.powi(hops) * big_m_x * prod_max).powi(2);
    let (lower, provenance) = match spectrum.sigma_min {
        Some(smin) => (
            2.0 * epsilon * (smin.powi(hops) * m_x * prod_min).powi(2),
            LowerBoundProvenance::Computed,
        ),
        None => (0.0, LowerBoundProvenance::SigmaMinNotComputed),
    };
    Ok(NetworkBounds {
        lower,
        upper,
        provenance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Row-norm statistics over the masked rows.
pub fn embedding_norm_stats(h: &DenseMatrix, mask: &[bool]) -> Result<NormStats, MetricsError> {
    check_mask(h, mask)?;
    let norms: Vec<f64> = (0..h.rows())
        .filter(|&i| mask[i])
        .map(|i| linalg::norm(h.row(i)))
        .collect();
    if norms.is_empty() {
        return Err(MetricsError::EmptyMask);
    }
    Ok(NormStats {
        mean: norms.iter().sum::<f64>() / norms.len() as f64,
        min: norms.iter().copied().fold(f64::INFINITY, f64::min),
        max: norms.iter().copied().fold(0.0, f64::max),
    })
}

fn check_mask(h: &DenseMatrix, mask: &[bool]) -> Result<(), MetricsError> {
    if mask.len() != h.rows() {
        return Err(MetricsError::Shape {
            what: "mask length",
            expected: h.rows(),
            found: mask.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentroidAngles {
    /// Mean over valid centroid pairs; NaN when every pair was skipped.
    pub mean_angle_degrees: f64,
    pub pairs: usize,
    /// Pairs with a centroid of norm below 1e-12.
    pub skipped_pairs: usize,
}

/// Mean angle between per-class centroids of the masked rows.
pub fn centroid_angles(
    h: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<CentroidAngles, MetricsError> {
    check_mask(h, mask)?;
    if labels.len() != h.rows() {
        return Err(MetricsError::Shape {
            what: "labels length",
            expected: h.rows(),
            found: labels.len(),
        });
    }
    let num_classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let mut sums = vec![vec![0.0; h.cols()]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for i in (0..h.rows()).filter(|&i| mask[i]) {
        if let Some(c) = labels[i] {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(h.row(i)) {
                *s += v;
            }
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 0)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    if centroids.len() < 2 {
        return Err(MetricsError::TooFewClasses {
            found: centroids.len(),
        });
    }
    let norms: Vec<f64> = centroids.iter().map(|c| linalg::norm(c)).collect();
    let mut total = 0.0;
    let mut pairs = 0;
    let mut skipped = 0;
    for a in 0..centroids.len() {
        for b in a + 1..centroids.len() {
            if norms[a] < 1e-12 || norms[b] < 1e-12 {
                skipped += 1;
                continue;
            }
            let cos = (dot(&centroids[a], &centroids[b]) / (norms[a] * norms[b])).clamp(-1.0, 1.0);
            total += cos.acos().to_degrees();
            pairs += 1;
        }
    }
    Ok(CentroidAngles {
        mean_angle_degrees: if pairs > 0 { total / pairs as f64 } else { f64::NAN },
        pairs,
        skipped_pairs: skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Survival {
    /// Singular values above the threshold, per layer.
    pub per_layer_k: Vec<usize>,
    /// Number of singular values, per layer.
    pub per_layer_d: Vec<usize>,
    /// Π k_l / d_l.
    pub probability: f64,
}

/// Chance that an informative direction passes every layer with gain above
/// `threshold`, taking each layer's surviving fraction k/d independently.
pub fn survival_probability(
    weights: &[DenseMatrix],
    threshold: f64,
) -> Result<Survival, MetricsError> {
    let svds = weights
        .iter()
        .map(svd_values)
        .collect::<Result<Vec<_>, _>>()?;
    survival_from_svds(&svds, threshold)
}

pub fn survival_from_svds(svds: &[SvdSummary], threshold: f64) -> Result<Survival, MetricsError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let per_layer_k: Vec<usize> = svds
        .iter()
        .map(|s| s.all_singular_values.iter().filter(|&&v| v > threshold).count())
        .collect();
    let per_layer_d: Vec<usize> = svds.iter().map(|s| s.all_singular_values.len()).collect();
    let probability = per_layer_k
        .iter()
        .zip(&per_layer_d)
        .map(|(&k, &d)| k as f64 / d as f64)
        .product();
    Ok(Survival {
        per_layer_k,
        per_layer_d,
        probability,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadBound {
    /// max_i ‖Ĥ_i W‖ − min_i ‖Ĥ_i W‖.
    pub delta_r: f64,
    /// σ_min(W)·(M_Ĥ − κ(W)·m_Ĥ).
    pub bound: f64,
    /// Whether M_Ĥ ≥ κ·m_Ĥ, i.e. the bound says something.
    pub applicable: bool,
}

/// Lower bound on the spread of output row norms implied by the spread of
/// input row norms.
pub fn row_norm_spread_bound(h_hat: &DenseMatrix, w: &DenseMatrix) -> Result<SpreadBound, MetricsError> {
    let out = h_hat.matmul(w)?;
    if out.rows() == 0 {
        return Err(MetricsError::EmptyMask);
    }
    let svd = svd_values(w)?;
    let in_norms = h_hat.row_norms();
    let out_norms = out.row_norms();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let delta_r = max(&out_norms) - min(&out_norms);
    let (m, big_m) = (min(&in_norms), max(&in_norms));
    let smin = svd.min_row_gain();
    let (bound, applicable) = if smin == 0.0 {
        (0.0, big_m > 0.0 && m == 0.0)
    } else {
        let kappa = svd.sigma_max / smin;
        (smin * (big_m - kappa * m), big_m >= kappa * m)
    };
    Ok(SpreadBound {
        delta_r,
        bound,
        applicable,
    })
}
