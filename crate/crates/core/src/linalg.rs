//! Dense matrix kernels, one-sided Jacobi singular values, and spectral
//! utilities for the normalized adjacency.

use std::fmt;

use thiserror::Error;

use crate::graph::NormalizedAdjacency;

/// Column-pair orthogonality threshold for the Jacobi sweeps.
pub const JACOBI_TOL: f64 = 1e-12;
/// Sweep budget for [`svd_values`].
pub const JACOBI_MAX_SWEEPS: usize = 60;
/// Rayleigh-quotient stopping threshold for [`spectral_norm_sparse`].
pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITERS: usize = 10_000;
/// Largest node count for which [`min_singular_sparse`] materializes Â.
pub const DEFAULT_DENSE_THRESHOLD: usize = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("buffer of length {len} cannot hold a {rows}x{cols} matrix")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is empty")]
    Empty,
    #[error("Jacobi SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },
    #[error("power iteration did not converge (last Rayleigh quotients {previous:e}, {last:e})")]
    PowerNoConvergence { previous: f64, last: f64 },
}

/// Row-major fp64 matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Wraps a row-major buffer, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::BadLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(LinalgError::DimensionMismatch {
                    op: "from_rows",
                    left: (i, r.len()),
                    right: (rows.len(), cols),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · b`.
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != b.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, b.cols);
        let mut c = DenseMatrix::zeros(m, n);
        // strides: (row stride, column stride) of each operand
        gemm(
            (m, k, n),
            (&self.data, k as isize, 1),
            (&b.data, n as isize, 1),
            &mut c.data,
        );
        Ok(c)
    }

    /// `selfᵀ · b` without materializing the transpose.
    pub fn matmul_tn(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.rows != b.rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let (m, k, n) = (self.cols, self.rows, b.cols);
        let mut c = DenseMatrix::zeros(m, n);
        gemm(
            (m, k, n),
            (&self.data, 1, self.cols as isize),
            (&b.data, n as isize, 1),
            &mut c.data,
        );
        Ok(c)
    }

    /// `self · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if self.cols != b.cols {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: b.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, b.rows);
        let mut c = DenseMatrix::zeros(m, n);
        gemm(
            (m, k, n),
            (&self.data, k as isize, 1),
            (&b.data, 1, b.cols as isize),
            &mut c.data,
        );
        Ok(c)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<(), LinalgError> {
        self.axpy(1.0, other)
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op: "axpy",
                left: self.shape(),
                right: other.shape(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm of every row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|i| norm(self.row(i))).collect()
    }

    /// Rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], isize, isize),
    (b, rsb, csb): (&[f64], isize, isize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the strides describe buffers of exactly m×k, k×n and m×n
    // elements, all of which were length-checked by the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Singular values of a matrix, largest first.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdSummary {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub all_singular_values: Vec<f64>,
    /// Shape of the decomposed matrix.
    pub shape: (usize, usize),
}

impl SvdSummary {
    /// Largest `c` with `c·‖u‖ ≤ ‖uW‖` for every row vector `u`.
    ///
    /// Equals `sigma_min` when W has at most as many rows as columns; a tall
    /// W has a nontrivial left null space, so the gain is 0.
    pub fn min_row_gain(&self) -> f64 {
        if self.shape.0 <= self.shape.1 {
            self.sigma_min
        } else {
            0.0
        }
    }

    /// σ_max / σ_min; infinite when σ_min is 0.
    pub fn condition_number(&self) -> f64 {
        if self.sigma_min > 0.0 {
            self.sigma_max / self.sigma_min
        } else {
            f64::INFINITY
        }
    }
}

/// Singular values by one-sided (Hestenes) Jacobi rotations.
///
/// The shorter dimension is orthogonalized, so `all_singular_values` has
/// `min(rows, cols)` entries.
pub fn svd_values(w: &DenseMatrix) -> Result<SvdSummary, LinalgError> {
    if w.is_empty() {
        return Err(LinalgError::Empty);
    }
    // Vectors to orthogonalize, stored contiguously.
    let mut vecs: Vec<Vec<f64>> = if w.rows >= w.cols {
        let t = w.transpose();
        (0..t.rows).map(|i| t.row(i).to_vec()).collect()
    } else {
        (0..w.rows).map(|i| w.row(i).to_vec()).collect()
    };
    let p = vecs.len();

    let mut converged = p < 2;
    let mut residual = 0.0f64;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        sweeps += 1;
        residual = 0.0;
        let mut rotated = false;
        for i in 0..p - 1 {
            for j in i + 1..p {
                let (head, tail) = vecs.split_at_mut(j);
                let (a, b) = (&mut head[i], &mut tail[0]);
                let alpha = dot(a, a);
                let beta = dot(b, b);
                let gamma = dot(a, b);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let scale = alpha.sqrt() * beta.sqrt();
                let off = gamma.abs() / scale;
                if off < JACOBI_TOL {
                    continue;
                }
                residual = residual.max(off);
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                    let (xv, yv) = (*x, *y);
                    *x = c * xv - s * yv;
                    *y = s * xv + c * yv;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(LinalgError::SvdNoConvergence { sweeps, residual });
    }

    let mut values: Vec<f64> = vecs.iter().map(|v| norm(v)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(SvdSummary {
        sigma_max: values[0],
        sigma_min: *values.last().expect("nonempty"),
        all_singular_values: values,
        shape: w.shape(),
    })
}

/// σ_max(Â) by power iteration on ÂᵀÂ from the normalized all-ones vector.
pub fn spectral_norm_sparse(adj: &NormalizedAdjacency) -> Result<f64, LinalgError> {
    let n = adj.n();
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut previous = f64::NAN;
    let mut last = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        let w = adj.matvec(&v);
        // vᵀÂᵀÂv with ‖v‖ = 1
        let rho = dot(&w, &w);
        let wn = rho.sqrt();
        if wn == 0.0 {
            return Ok(0.0);
        }
        if (rho - last).abs() < POWER_TOL {
            return Ok(wn);
        }
        previous = last;
        last = rho;
        v = w.into_iter().map(|x| x / wn).collect();
    }
    Err(LinalgError::PowerNoConvergence { previous, last })
}

/// σ_min(Â), or `None` ("not computed") above the dense threshold.
pub fn min_singular_sparse(adj: &NormalizedAdjacency, dense_threshold: usize) -> Option<f64> {
    if adj.n() > dense_threshold || adj.n() == 0 {
        return None;
    }
    svd_values(&adj.to_dense()).ok().map(|s| s.sigma_min)
}
