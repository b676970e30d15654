//! Graph storage: the augmented, symmetrically normalized adjacency
//! Â = D̂^(−1/2)(A+I)D̂^(−1/2) in CSR form, plus node features, labels and
//! split masks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({src}, {dst}) has an endpoint outside 0..{n}")]
    EndpointOutOfRange { src: usize, dst: usize, n: usize },
    #[error("edge ({src}, {dst}) has invalid weight {weight} (weights must be finite and nonnegative)")]
    InvalidWeight { src: usize, dst: usize, weight: f64 },
    #[error("{edges} edges but {weights} weights")]
    WeightCount { edges: usize, weights: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("node {node} has label {label} but there are only {num_classes} classes")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("node {node} belongs to more than one split")]
    OverlappingMasks { node: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Â in compressed sparse row form.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    /// Coalesced undirected input edges (`src <= dst`) with their weights.
    edges: Vec<(usize, usize, f64)>,
    asymmetric_edges: usize,
}

/// Builds Â from an edge list over `n` nodes.
///
/// Repeated `(src, dst)` entries are summed. Each edge is mirrored; when
/// both directions are given with different weights the mean is used and
/// the pair counts toward [`NormalizedAdjacency::asymmetric_edges`], as does
/// a pair given in one direction only. Self-loops are added here and must
/// not be part of the input (an explicit `(i, i)` entry adds to the diagonal).
pub fn normalize_adjacency(
    edges: &[(usize, usize)],
    n: usize,
    weights: Option<&[f64]>,
) -> Result<NormalizedAdjacency, GraphError> {
    if let Some(w) = weights {
        if w.len() != edges.len() {
            return Err(GraphError::WeightCount {
                edges: edges.len(),
                weights: w.len(),
            });
        }
    }
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (k, &(src, dst)) in edges.iter().enumerate() {
        if src >= n || dst >= n {
            return Err(GraphError::EndpointOutOfRange { src, dst, n });
        }
        let weight = weights.map_or(1.0, |w| w[k]);
        if !weight.is_finite() || weight < 0.0 {
            return Err(GraphError::InvalidWeight { src, dst, weight });
        }
        *directed.entry((src, dst)).or_insert(0.0) += weight;
    }

    let mut undirected: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut asymmetric = 0;
    for (&(src, dst), &w) in &directed {
        if src == dst {
            undirected.insert((src, dst), w);
            continue;
        }
        let key = (src.min(dst), src.max(dst));
        if undirected.contains_key(&key) {
            continue;
        }
        match directed.get(&(dst, src)) {
            Some(&back) if back == w => {
                undirected.insert(key, w);
            }
            Some(&back) => {
                asymmetric += 1;
                undirected.insert(key, 0.5 * (w + back));
            }
            None => {
                asymmetric += 1;
                undirected.insert(key, w);
            }
        }
    }
    if asymmetric > 0 {
        log::warn!("symmetrized {asymmetric} asymmetric edge pairs");
    }

    // A + I, row by row.
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, 1.0)]).collect();
    for (&(u, v), &w) in &undirected {
        if u == v {
            rows[u][0].1 += w;
        } else {
            rows[u].push((v, w));
            rows[v].push((u, w));
        }
    }
    let deg: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|&(_, w)| w).sum::<f64>())
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    for (i, mut r) in rows.into_iter().enumerate() {
        r.sort_by_key(|&(j, _)| j);
        for (j, w) in r {
            cols.push(j);
            vals.push(w / (deg[i] * deg[j]).sqrt());
        }
        offsets.push(cols.len());
    }

    Ok(NormalizedAdjacency {
        n,
        offsets,
        cols,
        vals,
        edges: undirected.into_iter().map(|((u, v), w)| (u, v, w)).collect(),
        asymmetric_edges: asymmetric,
    })
}

impl NormalizedAdjacency {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    /// Number of stored entries, self-loops included.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Coalesced undirected edges as `(src, dst, weight)` with `src <= dst`.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Undirected edges excluding self-loops.
    pub fn undirected_edge_count(&self) -> usize {
        self.edges.iter().filter(|(u, v, _)| u != v).count()
    }

    /// Input edge pairs that had to be symmetrized.
    pub fn asymmetric_edges(&self) -> usize {
        self.asymmetric_edges
    }

    /// Entry Â_ij (0 when not stored).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.offsets[i]..self.offsets[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row_entries(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row_entries(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// ÂH.
    pub fn spmm(&self, h: &DenseMatrix) -> Result<DenseMatrix, GraphError> {
        if h.rows() != self.n {
            return Err(LinalgError::DimensionMismatch {
                op: "spmm",
                left: (self.n, self.n),
                right: h.shape(),
            }
            .into());
        }
        let d = h.cols();
        let mut out = DenseMatrix::zeros(self.n, d);
        if d == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, dst)| {
                for (j, v) in self.row_entries(i) {
                    for (o, x) in dst.iter_mut().zip(h.row(j)) {
                        *o += v * x;
                    }
                }
            });
        Ok(out)
    }

    /// Â^hops · H by repeated [`spmm`](Self::spmm).
    pub fn spmm_power(&self, h: &DenseMatrix, hops: usize) -> Result<DenseMatrix, GraphError> {
        if h.rows() != self.n {
            return self.spmm(h);
        }
        let mut out = h.clone();
        for _ in 0..hops {
            out = self.spmm(&out)?;
        }
        Ok(out)
    }
}

/// A node-classification graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    pub adjacency: NormalizedAdjacency,
    pub features: DenseMatrix,
    /// `None` marks an unknown label.
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl SparseGraph {
    pub fn new(
        adjacency: NormalizedAdjacency,
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self, GraphError> {
        let n = adjacency.n();
        let check = |what, found| {
            if found == n {
                Ok(())
            } else {
                Err(GraphError::Length {
                    what,
                    expected: n,
                    found,
                })
            }
        };
        check("feature rows", features.rows())?;
        check("labels", labels.len())?;
        check("train mask", train_mask.len())?;
        check("val mask", val_mask.len())?;
        check("test mask", test_mask.len())?;
        for (node, l) in labels.iter().enumerate() {
            if let Some(label) = *l {
                if label >= num_classes {
                    return Err(GraphError::LabelOutOfRange {
                        node,
                        label,
                        num_classes,
                    });
                }
            }
        }
        for node in 0..n {
            let hits = [train_mask[node], val_mask[node], test_mask[node]]
                .iter()
                .filter(|&&b| b)
                .count();
            if hits > 1 {
                return Err(GraphError::OverlappingMasks { node });
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            num_classes,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn spmm(&self, h: &DenseMatrix) -> Result<DenseMatrix, GraphError> {
        self.adjacency.spmm(h)
    }

    pub fn spmm_power(&self, h: &DenseMatrix, hops: usize) -> Result<DenseMatrix, GraphError> {
        self.adjacency.spmm_power(h, hops)
    }

    /// Mask selecting every node.
    pub fn all_mask(&self) -> Vec<bool> {
        vec![true; self.n()]
    }
}
