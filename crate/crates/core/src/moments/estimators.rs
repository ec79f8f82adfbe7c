//! Contracted empirical moments.
//!
//! Each estimator is the sample mean of a closed-form contraction of the Hermite-type
//! integrand `y·H_j(x)` (with `H₂ = xx − I`, `H₃ = x⊗x⊗x − x⊗̃I`, and
//! `H₄ = x^{⊗4} − (xx)⊗̃I + ½ I⊗̃I`, i.e. each of the three index pairings once), never
//! materializing order-4 tensors. With `t = αᵀx`, `a = αᵀα`, `u = Vᵀx`, `β = Vᵀα`:
//!
//! - `M_j(V, V, α, …)`: `H₂ → uuᵀ − I`; `H₃ → t·uuᵀ − t·I − (uβᵀ + βuᵀ)`;
//!   `H₄ → (t² − a)uuᵀ − 2t(uβᵀ + βuᵀ) + (a − t²)I + 2ββᵀ`.
//! - `M_j(V, V, V, α, …)`: `H₃ → u^{⊗3} − u⊗̃I`;
//!   `H₄ → t·u^{⊗3} − sym(u⊗u⊗β) − t·(u⊗̃I) + β⊗̃I`.
//! - `M_j(I, α, …)`: `x`, `t·x − α`, `(t² − a)x − 2tα`, `(t³ − 3at)x + 3(a − t²)α`.
//!
//! Sums run over fixed-size chunks in parallel and merge in chunk order, so results
//! are identical for any thread count.

use nalgebra::{DMatrix, DMatrixView, DVector};
use rayon::prelude::*;

use super::indices::MomentIndices;
use super::tensor::Tensor3;
use crate::error::{Error, Result};
use crate::linalg::gram_deviation;

const CHUNK: usize = 2048;
/// Column-Gram deviation tolerated for `V`.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

fn fold_chunks<A, I, F>(n: usize, init: I, step: F) -> Vec<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                step(&mut acc, i);
            }
            acc
        })
        .collect()
}

fn check_inputs(x: &DMatrixView<f64>, y: &[f64], alpha: &DVector<f64>) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if x.ncols() != y.len() || alpha.len() != x.nrows() {
        return Err(Error::InvalidInput("feature, label and probe shapes disagree".into()));
    }
    Ok(())
}

fn check_orthonormal(v: &DMatrix<f64>, d: usize) -> Result<()> {
    if v.nrows() != d {
        return Err(Error::InvalidInput("subspace has wrong row count".into()));
    }
    let dev = gram_deviation(v);
    if dev > ORTHONORMAL_TOL {
        return Err(Error::NonOrthonormal(dev));
    }
    Ok(())
}

struct MatAcc {
    uu: DMatrix<f64>,
    g: DVector<f64>,
    c: f64,
    e: f64,
}

/// `E[y·H_j(x)](V, V, α, …, α)`; `v = None` means `V = I`.
fn contracted_matrix(
    x: &DMatrixView<f64>,
    y: &[f64],
    alpha: &DVector<f64>,
    v: Option<&DMatrix<f64>>,
    j: usize,
) -> Result<DMatrix<f64>> {
    check_inputs(x, y, alpha)?;
    if !(2..=4).contains(&j) {
        return Err(Error::InvalidInput(format!("matrix moment order {j} unsupported")));
    }
    let k = v.map_or(x.nrows(), |v| v.ncols());
    let beta = v.map_or_else(|| alpha.clone(), |v| v.tr_mul(alpha));
    let aa = alpha.norm_squared();
    let parts = fold_chunks(
        y.len(),
        || MatAcc { uu: DMatrix::zeros(k, k), g: DVector::zeros(k), c: 0.0, e: 0.0 },
        |acc, i| {
            let yi = y[i];
            if yi == 0.0 {
                return;
            }
            let xi = x.column(i);
            let u = v.map_or_else(|| xi.into_owned(), |v| v.tr_mul(&xi));
            let t = alpha.dot(&xi);
            let (w, gcoef, c, e) = match j {
                2 => (yi, 0.0, -yi, 0.0),
                3 => (yi * t, -yi, -yi * t, 0.0),
                _ => (yi * (t * t - aa), -2.0 * yi * t, yi * (aa - t * t), 2.0 * yi),
            };
            acc.uu.ger(w, &u, &u, 1.0);
            if gcoef != 0.0 {
                acc.g.axpy(gcoef, &u, 1.0);
            }
            acc.c += c;
            acc.e += e;
        },
    );
    let mut total = MatAcc { uu: DMatrix::zeros(k, k), g: DVector::zeros(k), c: 0.0, e: 0.0 };
    for p in parts {
        total.uu += p.uu;
        total.g += p.g;
        total.c += p.c;
        total.e += p.e;
    }
    let mut m = total.uu;
    m += &total.g * beta.transpose() + &beta * total.g.transpose();
    for d in 0..k {
        m[(d, d)] += total.c;
    }
    m += total.e * &beta * beta.transpose();
    m /= y.len() as f64;
    Ok((&m + m.transpose()) * 0.5)
}

/// `P̂₂`: sample mean of `M_{j₂}(I, I, α, …, α)`.
pub fn estimate_p2(x: DMatrixView<f64>, y: &[f64], alpha: &DVector<f64>, idx: &MomentIndices) -> Result<DMatrix<f64>> {
    contracted_matrix(&x, y, alpha, None, idx.j2)
}

/// `Q̂₂`: sample mean of `M_{l₂}(V, V, α, …, α)`.
pub fn estimate_q2(
    x: DMatrixView<f64>,
    y: &[f64],
    alpha: &DVector<f64>,
    v: Option<&DMatrix<f64>>,
    idx: &MomentIndices,
) -> Result<DMatrix<f64>> {
    let v = v.ok_or(Error::MissingSubspace)?;
    check_orthonormal(v, x.nrows())?;
    contracted_matrix(&x, y, alpha, Some(v), idx.l2)
}

/// `Q̂₁`: sample mean of `M_{l₁}(I, α, …, α)`.
pub fn estimate_q1(x: DMatrixView<f64>, y: &[f64], alpha: &DVector<f64>, idx: &MomentIndices) -> Result<DVector<f64>> {
    check_inputs(&x, y, alpha)?;
    let (d, l) = (x.nrows(), idx.l1);
    if !(1..=4).contains(&l) {
        return Err(Error::InvalidInput(format!("vector moment order {l} unsupported")));
    }
    let aa = alpha.norm_squared();
    let parts = fold_chunks(
        y.len(),
        || (DVector::<f64>::zeros(d), 0.0f64),
        |acc, i| {
            let yi = y[i];
            if yi == 0.0 {
                return;
            }
            let xi = x.column(i);
            let t = alpha.dot(&xi);
            let (gx, ga) = match l {
                1 => (yi, 0.0),
                2 => (yi * t, -yi),
                3 => (yi * (t * t - aa), -2.0 * yi * t),
                _ => (yi * (t * t * t - 3.0 * aa * t), 3.0 * yi * (aa - t * t)),
            };
            acc.0.axpy(gx, &xi, 1.0);
            acc.1 += ga;
        },
    );
    let (mut g, mut a) = (DVector::zeros(d), 0.0);
    for (pg, pa) in parts {
        g += pg;
        a += pa;
    }
    Ok((g + alpha * a) / y.len() as f64)
}

/// `R̂₃` with the per-entry sample variance of its integrand.
#[derive(Clone, Debug, PartialEq)]
pub struct R3Estimate {
    pub tensor: Tensor3,
    pub variance: Tensor3,
    pub n: usize,
}

impl R3Estimate {
    /// Frobenius norm of the standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        (self.variance.as_slice().iter().sum::<f64>() / self.n as f64).sqrt()
    }
}

/// `R̂₃`: sample mean of `M_{j₃}(V, V, V, α, …, α)`, symmetrized over index permutations.
pub fn estimate_r3(
    x: DMatrixView<f64>,
    y: &[f64],
    alpha: &DVector<f64>,
    v: &DMatrix<f64>,
    idx: &MomentIndices,
) -> Result<R3Estimate> {
    check_inputs(&x, y, alpha)?;
    check_orthonormal(v, x.nrows())?;
    let (k, j) = (v.ncols(), idx.j3);
    if !(3..=4).contains(&j) {
        return Err(Error::InvalidInput(format!("tensor moment order {j} unsupported")));
    }
    let beta = v.tr_mul(alpha);
    let parts = fold_chunks(
        y.len(),
        || (Tensor3::zeros(k), Tensor3::zeros(k)),
        |acc, i| {
            let yi = y[i];
            if yi == 0.0 {
                return;
            }
            let xi = x.column(i);
            let u = v.tr_mul(&xi);
            let t = alpha.dot(&xi);
            let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            for a in 0..k {
                for b in 0..k {
                    for c in 0..k {
                        let cube = u[a] * u[b] * u[c];
                        let pad = u[a] * delta(b, c) + u[b] * delta(a, c) + u[c] * delta(a, b);
                        let val = if j == 3 {
                            cube - pad
                        } else {
                            let mixed = u[a] * u[b] * beta[c] + u[a] * u[c] * beta[b] + u[b] * u[c] * beta[a];
                            let bpad = beta[a] * delta(b, c) + beta[b] * delta(a, c) + beta[c] * delta(a, b);
                            t * cube - mixed - t * pad + bpad
                        };
                        let s = yi * val;
                        acc.0.add_at(a, b, c, s);
                        acc.1.add_at(a, b, c, s * s);
                    }
                }
            }
        },
    );
    let (mut sum, mut sq) = (Tensor3::zeros(k), Tensor3::zeros(k));
    for (ps, pq) in parts {
        sum.add_assign(&ps);
        sq.add_assign(&pq);
    }
    let n = y.len() as f64;
    sum.scale(1.0 / n);
    let mut variance = Tensor3::zeros(k);
    for (dst, (m2, m1)) in variance.as_mut_slice().iter_mut().zip(sq.as_slice().iter().zip(sum.as_slice())) {
        *dst = (m2 / n - m1 * m1).max(0.0) * n / (n - 1.0).max(1.0);
    }
    Ok(R3Estimate { tensor: sum.symmetrized(), variance, n: y.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{Activation, DEFAULT_ZERO_TOL};
    use crate::rng::stream;

    fn relu_idx() -> MomentIndices {
        MomentIndices::select(&Activation::Relu, DEFAULT_ZERO_TOL).unwrap()
    }

    #[test]
    fn zero_labels_give_zero() {
        let mut rng = stream(5, "est", 0);
        let x = crate::linalg::gaussian_matrix(&mut rng, 4, 50);
        let y = vec![0.0; 50];
        let alpha = crate::linalg::random_unit(&mut rng, 4);
        let v = DMatrix::identity(4, 2);
        let idx = relu_idx();
        assert_eq!(estimate_p2(x.columns(0, 50), &y, &alpha, &idx).unwrap().max(), 0.0);
        assert_eq!(estimate_r3(x.columns(0, 50), &y, &alpha, &v, &idx).unwrap().tensor.max_abs(), 0.0);
        assert_eq!(estimate_q1(x.columns(0, 50), &y, &alpha, &idx).unwrap().amax(), 0.0);
        assert_eq!(estimate_q2(x.columns(0, 50), &y, &alpha, Some(&v), &idx).unwrap().amax(), 0.0);
    }

    #[test]
    fn errors() {
        let x = DMatrix::<f64>::zeros(3, 0);
        let alpha = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(estimate_p2(x.columns(0, 0), &[], &alpha, &relu_idx()).unwrap_err(), Error::EmptyBatch);
        let x = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(
            estimate_q2(x.columns(0, 2), &[1.0, 1.0], &alpha, None, &relu_idx()).unwrap_err(),
            Error::MissingSubspace
        );
        let v = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(
            estimate_r3(x.columns(0, 2), &[1.0, 1.0], &alpha, &v, &relu_idx()),
            Err(Error::NonOrthonormal(_))
        ));
    }
}
