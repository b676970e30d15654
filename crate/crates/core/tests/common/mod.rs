//! Test-side reference implementations. Everything here is written the slow,
//! obvious way and shares no code with the library beyond `DenseMatrix`
//! as a container.
#![allow(dead_code)]

use nalgebra::DMatrix;
use oversmooth::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_scaled(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// (1/N²) Σ_i Σ_j ‖h_i − h_j‖².
pub fn pairwise_mased(h: &DenseMatrix) -> f64 {
    let n = h.rows();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += h
                .row(i)
                .iter()
                .zip(h.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    total / (n * n) as f64
}

/// Singular values from the eigenvalues of WᵀW (or WWᵀ, whichever is
/// smaller), descending.
pub fn singular_values_via_gram(w: &DenseMatrix) -> Vec<f64> {
    let a = to_na(w);
    let gram = if w.rows() >= w.cols() {
        a.transpose() * &a
    } else {
        &a * a.transpose()
    };
    let mut ev: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev
}

/// Eigenpairs of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let e = m.clone().symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

/// D̂^(−1/2)(A+I)D̂^(−1/2) built densely from an undirected unit-weight
/// edge list (either orientation, duplicates ignored).
pub fn dense_normalized(edges: &[(usize, usize)], n: usize) -> DenseMatrix {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in edges {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    DenseMatrix::from_fn(n, n, |i, j| a[i][j] / (deg[i].sqrt() * deg[j].sqrt()))
}

pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| v.max(0.0))
}

/// Dense forward pass for all three families. `hops[k]` aggregations
/// precede weight `k`; `proj` switches on the ResGCN residual.
pub fn dense_forward(
    a: &DenseMatrix,
    x: &DenseMatrix,
    weights: &[DenseMatrix],
    hops: &[usize],
    proj: Option<&DenseMatrix>,
) -> DenseMatrix {
    let h0 = proj.map(|p| naive_matmul(x, p));
    let mut h = h0.clone().unwrap_or_else(|| x.clone());
    for (k, w) in weights.iter().enumerate() {
        for _ in 0..hops[k] {
            h = naive_matmul(a, &h);
        }
        let mut z = naive_matmul(&h, w);
        if k + 1 < weights.len() {
            if let Some(h0) = &h0 {
                z = z.add(h0).unwrap();
            }
            z = relu(&z);
        }
        h = z;
    }
    h
}

/// Mean of −log softmax over masked labelled rows, no stabilisation tricks
/// beyond subtracting the row max.
pub fn naive_cross_entropy(logits: &DenseMatrix, labels: &[Option<usize>], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..logits.rows() {
        if !mask[i] {
            continue;
        }
        let y = labels[i].unwrap();
        let row = logits.row(i);
        let mx = row.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        total += -((row[y] - mx).exp() / z).ln();
        count += 1;
    }
    total / count as f64
}

/// Σ_l (1/rows) Σ_i popstd(W_i).
pub fn naive_greg(weights: &[DenseMatrix]) -> f64 {
    weights
        .iter()
        .map(|w| {
            let mut s = 0.0;
            for i in 0..w.rows() {
                let r = w.row(i);
                let mean = r.iter().sum::<f64>() / r.len() as f64;
                let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
                s += var.sqrt();
            }
            s / w.rows() as f64
        })
        .sum()
}

pub fn naive_row_norms(h: &DenseMatrix) -> Vec<f64> {
    (0..h.rows())
        .map(|i| h.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Mean angle in degrees over unordered pairs of class centroids, skipping
/// pairs where a centroid is (numerically) zero.
pub fn naive_centroid_angle(h: &DenseMatrix, labels: &[Option<usize>], mask: &[bool]) -> f64 {
    let classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![0.0; h.cols()]; classes];
    let mut counts = vec![0usize; classes];
    for i in 0..h.rows() {
        if let (true, Some(c)) = (mask[i], labels[i]) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(h.row(i)) {
                *s += v;
            }
        }
    }
    let cents: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let mut angles = Vec::new();
    for a in 0..cents.len() {
        for b in a + 1..cents.len() {
            let na = cents[a].iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = cents[b].iter().map(|v| v * v).sum::<f64>().sqrt();
            if na < 1e-12 || nb < 1e-12 {
                continue;
            }
            let dot: f64 = cents[a].iter().zip(&cents[b]).map(|(x, y)| x * y).sum();
            angles.push((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    angles.iter().sum::<f64>() / angles.len() as f64
}

/// Central difference of `f` with respect to entry `idx` of `data`.
pub fn central_difference(data: &mut [f64], idx: usize, step: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = data[idx];
    data[idx] = orig + step;
    let plus = f(data);
    data[idx] = orig - step;
    let minus = f(data);
    data[idx] = orig;
    (plus - minus) / (2.0 * step)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
