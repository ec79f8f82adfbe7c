//! Small dense linear-algebra helpers over `nalgebra`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Vector of i.i.d. standard normals.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Matrix of i.i.d. standard normals, filled column by column.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Uniform random unit vector.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, d);
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Thin orthonormal basis of the column span (Householder QR), with column signs fixed
/// so the diagonal of R is nonnegative.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols().min(m.nrows());
    let qr = m.clone().qr();
    let mut q = qr.q().columns(0, k).into_owned();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Eigen-decomposition of a symmetric matrix, sorted by decreasing eigenvalue.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Max-abs deviation of `VᵀV` from the identity.
pub fn gram_deviation(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    let mut dev: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).abs());
        }
    }
    dev
}

/// Spectral norm of `(I − VVᵀ)U` for orthonormal `U`; zero iff span(U) ⊆ span(V).
pub fn subspace_distance(v: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let resid = u - v * (v.transpose() * u);
    spectral_norm(&resid)
}

/// Least-squares solution of `A x ≈ b` via SVD, with the condition number of `A`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let tol = smax * 1e-14 * (a.nrows().max(a.ncols()) as f64);
    let x = svd.solve(b, tol).unwrap_or_else(|_| DVector::zeros(a.ncols()));
    (x, cond)
}

/// Symmetric part `(M + Mᵀ)/2` and the max-abs asymmetry of `M`.
pub fn symmetrize(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let asym = (m - m.transpose()).abs().max() / 2.0;
    ((m + m.transpose()) * 0.5, asym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn orthonormalize_gives_orthonormal_columns() {
        let mut rng = stream(1, "t", 0);
        let m = gaussian_matrix(&mut rng, 7, 3);
        let q = orthonormalize(&m);
        assert!(gram_deviation(&q) < 1e-12);
        assert!(subspace_distance(&q, &orthonormalize(&(m * 2.0))) < 1e-12);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -1.0, 2.0]));
        let (vals, vecs) = sorted_symmetric_eigen(&m);
        assert_eq!(vals.as_slice(), &[2.0, 0.5, -1.0]);
        assert!((vecs[(2, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_exact_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, -3.0, -1.0]);
        let (x, cond) = least_squares(&a, &b);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] + 3.0).abs() < 1e-12);
        assert!((cond - 3f64.sqrt()).abs() < 1e-12);
    }
}
