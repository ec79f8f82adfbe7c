//! The identity-padding outer products `v ⊗̃ I` and `M ⊗̃ I`.

use nalgebra::{DMatrix, DVector};

use super::tensor::{Tensor3, Tensor4};
use crate::linalg::symmetrize;

/// Asymmetry above which `outer_tilde_matrix` reports a warning.
pub const ASYMMETRY_WARN: f64 = 1e-8;

/// `Σ_j (v⊗e_j⊗e_j + e_j⊗v⊗e_j + e_j⊗e_j⊗v)`.
pub fn outer_tilde_vector(v: &DVector<f64>) -> Tensor3 {
    let d = v.len();
    let mut t = Tensor3::zeros(d);
    for j in 0..d {
        for a in 0..d {
            t.add_at(a, j, j, v[a]);
            t.add_at(j, a, j, v[a]);
            t.add_at(j, j, a, v[a]);
        }
    }
    t
}

/// `M ⊗̃ I = Σ_i s_i Σ_j Σ_{l=1..6} A_{l,i,j}`, where `M = Σ_i s_i u_i u_iᵀ` and the six
/// terms place `(u_i, u_i)` in two of the four slots and `(e_j, e_j)` in the others.
///
/// Asymmetric input is symmetrized; the returned warning carries the asymmetry when it
/// exceeds [`ASYMMETRY_WARN`].
pub fn outer_tilde_matrix(m: &DMatrix<f64>) -> (Tensor4, Option<String>) {
    let (sym, asym) = symmetrize(m);
    let warning = (asym > ASYMMETRY_WARN).then(|| format!("input asymmetric by {asym:e}; symmetrized"));
    let d = sym.nrows();
    let eig = sym.symmetric_eigen();
    let mut t = Tensor4::zeros(d);
    for i in 0..d {
        let s = eig.eigenvalues[i];
        if s == 0.0 {
            continue;
        }
        let u = eig.eigenvectors.column(i);
        for j in 0..d {
            for p in 0..d {
                for q in 0..d {
                    let uu = s * u[p] * u[q];
                    if uu == 0.0 {
                        continue;
                    }
                    t.add_at(p, q, j, j, uu);
                    t.add_at(p, j, q, j, uu);
                    t.add_at(p, j, j, q, uu);
                    t.add_at(j, p, q, j, uu);
                    t.add_at(j, p, j, q, uu);
                    t.add_at(j, j, p, q, uu);
                }
            }
        }
    }
    (t, warning)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_cases() {
        let t = outer_tilde_vector(&DVector::from_vec(vec![2.5]));
        assert_eq!(t.get(0, 0, 0), 7.5);
        let (t, w) = outer_tilde_matrix(&DMatrix::identity(1, 1));
        assert!((t.get(0, 0, 0, 0) - 6.0).abs() < 1e-14);
        assert!(w.is_none());
    }

    #[test]
    fn zero_inputs() {
        assert_eq!(outer_tilde_vector(&DVector::zeros(3)).max_abs(), 0.0);
        assert_eq!(outer_tilde_matrix(&DMatrix::zeros(3, 3)).0.max_abs(), 0.0);
    }

    #[test]
    fn asymmetric_input_warns() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(outer_tilde_matrix(&m).1.is_some());
    }
}
