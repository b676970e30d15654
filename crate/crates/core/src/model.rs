//! GCN, ResGCN and hop-decoupled stacked-SGC models: parameter
//! initialization, forward passes that keep a per-layer tape, and exact
//! reverse-mode gradients.
//!
//! All three families share one block structure. Block `k` aggregates
//! `hops[k]` times with Â, multiplies by its weight matrix and applies ReLU
//! unless it is the last block. A GCN is the case where every block has one
//! hop; a K-block SGC stack spreads L hops over K blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NormalizedAdjacency};
use crate::linalg::{DenseMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("tape does not match parameters: {0}")]
    TapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gcn,
    Resgcn,
    SgcStack,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gcn => "gcn",
            Family::Resgcn => "resgcn",
            Family::SgcStack => "sgc_stack",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// U(±sqrt(6 / (fan_in + fan_out))).
    #[default]
    GlorotUniform,
    /// N(0, std²).
    Gaussian { std: f64 },
}

fn default_width() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    /// Total adjacency hops L.
    pub depth_hops: usize,
    /// Weight matrices K; only meaningful for `sgc_stack` (GCN and ResGCN use K = L).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_weight_layers: Option<usize>,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default)]
    pub input_dim: usize,
    #[serde(default)]
    pub init: Init,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, depth_hops: usize, input_dim: usize, num_classes: usize) -> Self {
        Self {
            family,
            depth_hops,
            num_weight_layers: None,
            width: default_width(),
            num_classes,
            input_dim,
            init: Init::GlorotUniform,
            seed: 0,
        }
    }

    /// K.
    pub fn weight_layers(&self) -> usize {
        match self.family {
            Family::SgcStack => self.num_weight_layers.unwrap_or(1),
            Family::Gcn | Family::Resgcn => self.depth_hops,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        let k = self.weight_layers();
        if self.depth_hops == 0 {
            return bad("depth_hops must be at least 1".into());
        }
        if k == 0 || k > self.depth_hops {
            return bad(format!(
                "weight layers K={k} must satisfy 1 <= K <= L={}",
                self.depth_hops
            ));
        }
        if self.family != Family::SgcStack {
            if let Some(k) = self.num_weight_layers {
                if k != self.depth_hops {
                    return bad(format!(
                        "{} uses one weight matrix per hop, got K={k} for L={}",
                        self.family.as_str(),
                        self.depth_hops
                    ));
                }
            }
        }
        if self.width == 0 || self.num_classes == 0 || self.input_dim == 0 {
            return bad("width, num_classes and input_dim must be positive".into());
        }
        if let Init::Gaussian { std } = self.init {
            if !(std.is_finite() && std > 0.0) {
                return bad(format!("gaussian init std must be positive, got {std}"));
            }
        }
        Ok(())
    }

    /// Hops per block: the first `L mod K` blocks take ⌈L/K⌉, the rest ⌊L/K⌋.
    pub fn hop_split(&self) -> Vec<usize> {
        hop_split(self.depth_hops, self.weight_layers())
    }

    /// Shapes of W^(1..K).
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let k = self.weight_layers();
        let first_in = match self.family {
            Family::Resgcn => self.width,
            _ => self.input_dim,
        };
        (0..k)
            .map(|i| {
                let rows = if i == 0 { first_in } else { self.width };
                let cols = if i + 1 == k { self.num_classes } else { self.width };
                (rows, cols)
            })
            .collect()
    }
}

pub fn hop_split(total: usize, blocks: usize) -> Vec<usize> {
    let base = total / blocks;
    let extra = total % blocks;
    (0..blocks).map(|b| base + usize::from(b < extra)).collect()
}

/// Trainable matrices. Also used to carry gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub weights: Vec<DenseMatrix>,
    /// ResGCN only: maps X to the hidden width for the residual H⁰.
    pub input_projection: Option<DenseMatrix>,
}

impl Parameters {
    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
                .collect(),
            input_projection: self
                .input_projection
                .as_ref()
                .map(|w| DenseMatrix::zeros(w.rows(), w.cols())),
        }
    }

    /// Every matrix, projection last.
    pub fn matrices(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.weights.iter().chain(self.input_projection.iter())
    }

    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut DenseMatrix> {
        self.weights.iter_mut().chain(self.input_projection.iter_mut())
    }

    pub fn squared_norm(&self) -> f64 {
        self.matrices().map(DenseMatrix::frobenius_norm_sq).sum()
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.weights.len() == other.weights.len()
            && self
                .matrices()
                .zip(other.matrices())
                .all(|(a, b)| a.shape() == b.shape())
            && self.input_projection.is_some() == other.input_projection.is_some()
    }
}

pub fn init_parameters(spec: &ModelSpec) -> Result<Parameters, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut draw = |rows: usize, cols: usize| -> DenseMatrix {
        match spec.init {
            Init::GlorotUniform => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-a..=a))
            }
            Init::Gaussian { std } => DenseMatrix::from_fn(rows, cols, |_, _| {
                std * rng.sample::<f64, _>(StandardNormal)
            }),
        }
    };
    let input_projection = (spec.family == Family::Resgcn).then(|| draw(spec.input_dim, spec.width));
    let weights = spec
        .weight_shapes()
        .into_iter()
        .map(|(r, c)| draw(r, c))
        .collect();
    Ok(Parameters {
        weights,
        input_projection,
    })
}

/// Intermediates of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTape {
    pub hops: usize,
    /// Â^hops · H_in.
    pub h_hat: DenseMatrix,
    pub pre_activation: DenseMatrix,
    /// ReLU(pre_activation), or pre_activation itself for the final block.
    pub post_activation: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTape {
    pub family: Family,
    pub layers: Vec<LayerTape>,
    /// ResGCN: the raw features and the projected residual H⁰ = X·P.
    pub residual: Option<(DenseMatrix, DenseMatrix)>,
}

impl ForwardTape {
    pub fn logits(&self) -> &DenseMatrix {
        &self.layers.last().expect("tape has at least one layer").post_activation
    }
}

/// H^(l+1) = ReLU(ÂH^(l)W^(l)); the last layer emits logits.
pub fn forward_gcn(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    p: &Parameters,
) -> Result<ForwardTape, ModelError> {
    let hops = vec![1; p.weights.len()];
    forward_blocks(Family::Gcn, adj, x, p, &hops)
}

/// H^(l+1) = ReLU(ÂH^(l)W^(l) + H⁰) with H⁰ = X·P; the last layer has no
/// residual and no ReLU.
pub fn forward_resgcn(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    p: &Parameters,
) -> Result<ForwardTape, ModelError> {
    let hops = vec![1; p.weights.len()];
    forward_blocks(Family::Resgcn, adj, x, p, &hops)
}

/// K stacked SGC blocks sharing L hops.
pub fn forward_sgc_stack(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    p: &Parameters,
    spec: &ModelSpec,
) -> Result<ForwardTape, ModelError> {
    let k = spec.weight_layers();
    if k == 0 || k > spec.depth_hops {
        return Err(ModelError::InvalidSpec(format!(
            "weight layers K={k} must satisfy 1 <= K <= L={}",
            spec.depth_hops
        )));
    }
    forward_blocks(Family::SgcStack, adj, x, p, &spec.hop_split())
}

/// Dispatches on `spec.family`.
pub fn forward(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    p: &Parameters,
    spec: &ModelSpec,
) -> Result<ForwardTape, ModelError> {
    match spec.family {
        Family::Gcn => forward_gcn(adj, x, p),
        Family::Resgcn => forward_resgcn(adj, x, p),
        Family::SgcStack => forward_sgc_stack(adj, x, p, spec),
    }
}

fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn forward_blocks(
    family: Family,
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    p: &Parameters,
    hops: &[usize],
) -> Result<ForwardTape, ModelError> {
    if p.weights.len() != hops.len() || p.weights.is_empty() {
        return Err(ModelError::TapeMismatch(format!(
            "{} weight matrices for {} blocks",
            p.weights.len(),
            hops.len()
        )));
    }
    let residual = match family {
        Family::Resgcn => {
            let proj = p.input_projection.as_ref().ok_or_else(|| {
                ModelError::TapeMismatch("resgcn requires an input projection".into())
            })?;
            Some((x.clone(), x.matmul(proj)?))
        }
        _ => None,
    };
    let last = hops.len() - 1;
    let mut layers: Vec<LayerTape> = Vec::with_capacity(hops.len());
    for (k, (&h, w)) in hops.iter().zip(&p.weights).enumerate() {
        let input = match (layers.last(), &residual) {
            (Some(prev), _) => &prev.post_activation,
            (None, Some((_, h0))) => h0,
            (None, None) => x,
        };
        let h_hat = adj.spmm_power(input, h)?;
        let mut pre = h_hat.matmul(w)?;
        let post = if k == last {
            pre.clone()
        } else {
            if let Some((_, h0)) = &residual {
                pre.add_assign(h0)?;
            }
            relu(&pre)
        };
        layers.push(LayerTape {
            hops: h,
            h_hat,
            pre_activation: pre,
            post_activation: post,
        });
    }
    Ok(ForwardTape {
        family,
        layers,
        residual,
    })
}

/// Exact gradients of every parameter given ∂loss/∂logits.
///
/// Â is symmetric, so the aggregation backward reuses Â. ReLU passes
/// gradient where the recorded output is strictly positive.
pub fn backward(
    tape: &ForwardTape,
    adj: &NormalizedAdjacency,
    p: &Parameters,
    dlogits: &DenseMatrix,
) -> Result<Parameters, ModelError> {
    let depth = tape.layers.len();
    if depth != p.weights.len() {
        return Err(ModelError::TapeMismatch(format!(
            "tape has {depth} layers, parameters have {} weights",
            p.weights.len()
        )));
    }
    if dlogits.shape() != tape.logits().shape() {
        return Err(ModelError::TapeMismatch(format!(
            "dlogits {:?} vs logits {:?}",
            dlogits.shape(),
            tape.logits().shape()
        )));
    }
    let resid = tape.residual.as_ref();
    if resid.is_some() != p.input_projection.is_some() {
        return Err(ModelError::TapeMismatch("residual/projection mismatch".into()));
    }

    let mut grads = p.zeros_like();
    let mut dh0 = resid.map(|(_, h0)| DenseMatrix::zeros(h0.rows(), h0.cols()));
    let mut d_out = dlogits.clone();
    for k in (0..depth).rev() {
        let layer = &tape.layers[k];
        let dpre = if k + 1 == depth {
            d_out
        } else {
            let mut g = d_out;
            for (gv, &post) in g.data_mut().iter_mut().zip(layer.post_activation.data()) {
                if post <= 0.0 {
                    *gv = 0.0;
                }
            }
            if let Some(acc) = dh0.as_mut() {
                acc.add_assign(&g)?;
            }
            g
        };
        grads.weights[k] = layer.h_hat.matmul_tn(&dpre)?;
        if k == 0 && dh0.is_none() {
            break;
        }
        let d_in = adj.spmm_power(&dpre.matmul_nt(&p.weights[k])?, layer.hops)?;
        if k == 0 {
            dh0.as_mut().expect("checked above").add_assign(&d_in)?;
            break;
        }
        d_out = d_in;
    }
    if let (Some((x, _)), Some(dh0)) = (resid, dh0) {
        grads.input_projection = Some(x.matmul_tn(&dh0)?);
    }
    Ok(grads)
}
