//! Small dense-matrix helpers shared across modules.

use ndarray::{Array1, Array2};

/// Tensor sum u ⊕ v: the n×n matrix with entries u_i + v_j.
pub fn tensor_sum(u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    let n = u.len();
    let m = v.len();
    Array2::from_shape_fn((n, m), |(i, j)| u[i] + v[j])
}

/// Max-norm of a matrix.
pub fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Max-norm of a vector.
pub fn max_abs_vec(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Frobenius norm.
pub fn fro_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ∞-norms of the marginal residuals (‖X1 − μ‖∞, ‖Xᵀ1 − ν‖∞).
pub fn marginal_residuals(x: &Array2<f64>, mu: &Array1<f64>, nu: &Array1<f64>) -> (f64, f64) {
    let n = x.nrows();
    let mut row = 0.0_f64;
    let mut col = 0.0_f64;
    for i in 0..n {
        row = row.max((x.row(i).sum() - mu[i]).abs());
    }
    for j in 0..x.ncols() {
        col = col.max((x.column(j).sum() - nu[j]).abs());
    }
    (row, col)
}

/// The centering projector J = I − (1/n)·11ᵀ.
pub fn centering_matrix(n: usize) -> Array2<f64> {
    let mut j = Array2::from_elem((n, n), -1.0 / n as f64);
    for i in 0..n {
        j[[i, i]] += 1.0;
    }
    j
}

/// Symmetric eigendecomposition (ascending eigenvalues) via nalgebra.
pub fn sym_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let vals = Array1::from_shape_fn(n, |k| eig.eigenvalues[order[k]]);
    let vecs = Array2::from_shape_fn((n, n), |(i, k)| eig.eigenvectors[(i, order[k])]);
    (vals, vecs)
}

/// Projection onto the PSD cone by eigenvalue clipping. Input must be
/// symmetric; the caller is responsible for symmetrizing.
pub fn psd_projection(a: &Array2<f64>) -> Array2<f64> {
    let (vals, vecs) = sym_eigen(a);
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for k in 0..n {
        let lam = vals[k].max(0.0);
        if lam == 0.0 {
            continue;
        }
        let vk = vecs.column(k);
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += lam * vk[i] * vk[j];
            }
        }
    }
    out
}

/// Orthogonal projector onto the row space of `m` (i.e. M†M), computed by
/// SVD with relative singular-value cutoff.
pub fn row_space_projector(m: &Array2<f64>, cutoff_rel: f64) -> Array2<f64> {
    let (d, n) = m.dim();
    let nm = nalgebra::DMatrix::from_fn(d, n, |i, j| m[[i, j]]);
    let svd = nm.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cut = cutoff_rel * smax;
    let mut p = Array2::zeros((n, n));
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cut {
            continue;
        }
        let row = v_t.row(k);
        for i in 0..n {
            for j in 0..n {
                p[[i, j]] += row[i] * row[j];
            }
        }
    }
    p
}

/// Numerical rank by SVD with relative cutoff.
pub fn rank(m: &Array2<f64>, cutoff_rel: f64) -> usize {
    let (d, n) = m.dim();
    let nm = nalgebra::DMatrix::from_fn(d, n, |i, j| m[[i, j]]);
    let svd = nm.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    svd.singular_values.iter().filter(|&&s| s > cutoff_rel * smax).count()
}
