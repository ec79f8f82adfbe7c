//! Dense reference moments for small `d`.
//!
//! `H_j(x)` is materialized as a full order-`j` tensor by summing over partial
//! matchings `M` of the index positions: `Σ_M (−1)^{|M|} Π_{(a,b)∈M} δ_{i_a i_b}
//! Π_{c∉M} x_{i_c}`. The sample mean of `y·H_j(x)` is then contracted mode by mode.
//! Cost is `O(n·d^j)`; intended as an independent check of the contracted estimators.

use nalgebra::{DMatrix, DMatrixView, DVector};

use super::indices::MomentIndices;
use super::tensor::Tensor3;
use crate::error::{Error, Result};

/// Largest `d^j` the reference will materialize.
pub const REFERENCE_CAP: usize = 1 << 16;

fn matchings(positions: &[usize]) -> Vec<Vec<(usize, usize)>> {
    let Some((&first, rest)) = positions.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = matchings(rest);
    for (i, &other) in rest.iter().enumerate() {
        let remaining: Vec<usize> = rest.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &p)| p).collect();
        for mut m in matchings(&remaining) {
            m.push((first, other));
            out.push(m);
        }
    }
    out
}

/// Row-major `H_j(x)`.
pub fn hermite_tensor(x: &[f64], j: usize) -> Result<Vec<f64>> {
    let d = x.len();
    let size = d
        .checked_pow(j as u32)
        .filter(|&s| s <= REFERENCE_CAP)
        .ok_or_else(|| Error::SizeCap(format!("dense Hermite tensor of order {j} in dimension {d}")))?;
    let terms = matchings(&(0..j).collect::<Vec<_>>());
    let mut out = vec![0.0; size];
    let mut idx = vec![0usize; j];
    for (flat, slot) in out.iter_mut().enumerate() {
        let mut rem = flat;
        for pos in (0..j).rev() {
            idx[pos] = rem % d;
            rem /= d;
        }
        let mut total = 0.0;
        for m in &terms {
            if m.iter().any(|&(a, b)| idx[a] != idx[b]) {
                continue;
            }
            let mut term = if m.len() % 2 == 0 { 1.0 } else { -1.0 };
            for (pos, &i) in idx.iter().enumerate() {
                if !m.iter().any(|&(a, b)| a == pos || b == pos) {
                    term *= x[i];
                }
            }
            total += term;
        }
        *slot = total;
    }
    Ok(out)
}

/// Sample mean of `y·H_j(x)` contracted with `modes[m]` (`d × r_m`) on mode `m`; the
/// result is row-major over `r_1 × … × r_j`.
pub fn reference_moment(x: DMatrixView<f64>, y: &[f64], modes: &[&DMatrix<f64>]) -> Result<Vec<f64>> {
    let d = x.nrows();
    let j = modes.len();
    if y.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if x.ncols() != y.len() || modes.iter().any(|m| m.nrows() != d) {
        return Err(Error::InvalidInput("feature, label and mode shapes disagree".into()));
    }
    let mut mean = vec![0.0; d.pow(j as u32)];
    for (i, yi) in y.iter().enumerate() {
        let xi: Vec<f64> = x.column(i).iter().copied().collect();
        for (m, h) in mean.iter_mut().zip(hermite_tensor(&xi, j)?) {
            *m += yi * h;
        }
    }
    for m in mean.iter_mut() {
        *m /= y.len() as f64;
    }
    // Contract the leading mode each pass; the result rotates it to the back.
    let mut shape: Vec<usize> = vec![d; j];
    let mut data = mean;
    for mode in modes {
        let lead = shape[0];
        let tail: usize = shape[1..].iter().product();
        let r = mode.ncols();
        let mut next = vec![0.0; tail * r];
        for t in 0..tail {
            for c in 0..r {
                let mut s = 0.0;
                for a in 0..lead {
                    s += mode[(a, c)] * data[a * tail + t];
                }
                next[t * r + c] = s;
            }
        }
        shape.remove(0);
        shape.push(r);
        data = next;
    }
    Ok(data)
}

fn alpha_modes<'a>(fixed: &[&'a DMatrix<f64>], alpha: &'a DMatrix<f64>, order: usize) -> Vec<&'a DMatrix<f64>> {
    let mut modes = fixed.to_vec();
    modes.resize(order, alpha);
    modes
}

/// Reference counterparts of `P̂₂`, `R̂₃` (symmetrized), `Q̂₁` and `Q̂₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMoments {
    pub p2: DMatrix<f64>,
    pub r3: Tensor3,
    pub q1: DVector<f64>,
    pub q2: DMatrix<f64>,
}

pub fn reference_moments(
    x: DMatrixView<f64>,
    y: &[f64],
    alpha: &DVector<f64>,
    v: &DMatrix<f64>,
    idx: &MomentIndices,
) -> Result<ReferenceMoments> {
    let d = x.nrows();
    let k = v.ncols();
    let eye = DMatrix::identity(d, d);
    let a = DMatrix::from_column_slice(d, 1, alpha.as_slice());
    let p2 = reference_moment(x, y, &alpha_modes(&[&eye, &eye], &a, idx.j2))?;
    let r3 = reference_moment(x, y, &alpha_modes(&[v, v, v], &a, idx.j3))?;
    let q1 = reference_moment(x, y, &alpha_modes(&[&eye], &a, idx.l1))?;
    let q2 = reference_moment(x, y, &alpha_modes(&[v, v], &a, idx.l2))?;
    let p2 = DMatrix::from_row_slice(d, d, &p2);
    let q2 = DMatrix::from_row_slice(k, k, &q2);
    let r3 = Tensor3::from_fn(k, |i, j, l| r3[(i * k + j) * k + l]).symmetrized();
    Ok(ReferenceMoments {
        p2: (&p2 + p2.transpose()) * 0.5,
        r3,
        q1: DVector::from_vec(q1),
        q2: (&q2 + q2.transpose()) * 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_low_orders() {
        let x = [0.5, -2.0];
        assert_eq!(hermite_tensor(&x, 1).unwrap(), vec![0.5, -2.0]);
        let h2 = hermite_tensor(&x, 2).unwrap();
        assert_eq!(h2, vec![0.25 - 1.0, -1.0, -1.0, 4.0 - 1.0]);
        let h4 = hermite_tensor(&[0.7], 4).unwrap();
        let t = 0.7f64;
        assert!((h4[0] - (t.powi(4) - 6.0 * t * t + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn agrees_with_contracted_estimators() {
        use crate::linalg::{gaussian_matrix, gaussian_vector, orthonormalize};
        use crate::moments::{estimate_p2, estimate_q1, estimate_q2, estimate_r3, Activation, DEFAULT_ZERO_TOL};
        use crate::rng::stream;
        let mut rng = stream(41, "ref", 0);
        for act in [Activation::Relu, Activation::SquaredRelu, Activation::Power { degree: 3 }] {
            let idx = MomentIndices::select(&act, DEFAULT_ZERO_TOL).unwrap();
            let x = gaussian_matrix(&mut rng, 3, 64);
            let y: Vec<f64> = gaussian_vector(&mut rng, 64).iter().copied().collect();
            let alpha = gaussian_vector(&mut rng, 3);
            let v = orthonormalize(&gaussian_matrix(&mut rng, 3, 2));
            let r = reference_moments(x.as_view(), &y, &alpha, &v, &idx).unwrap();
            let p2 = estimate_p2(x.as_view(), &y, &alpha, &idx).unwrap();
            let q1 = estimate_q1(x.as_view(), &y, &alpha, &idx).unwrap();
            let q2 = estimate_q2(x.as_view(), &y, &alpha, Some(&v), &idx).unwrap();
            let r3 = estimate_r3(x.as_view(), &y, &alpha, &v, &idx).unwrap();
            assert!((p2 - r.p2).amax() < 1e-10);
            assert!((q1 - r.q1).amax() < 1e-10);
            assert!((q2 - r.q2).amax() < 1e-10);
            assert!(r3.tensor.sub(&r.r3).max_abs() < 1e-10);
        }
    }

    #[test]
    fn matching_counts() {
        assert_eq!(matchings(&[0, 1, 2, 3]).len(), 10);
        assert_eq!(matchings(&[0, 1, 2]).len(), 4);
    }
}
