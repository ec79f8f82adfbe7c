use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::net::TwoLayerNet;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::moments::{Activation, MomentIndices};

/// Smallest admissible Gram determinant of the recovered directions.
pub const GRAM_DET_MIN: f64 = 1e-10;
/// Smallest admissible `|αᵀVû_i|`.
pub const ALIGNMENT_MIN: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub z_residual: f64,
    pub r_residual: f64,
    pub z_condition: f64,
    pub r_condition: f64,
    pub gram_determinant: f64,
}

/// `ẑ = argmin ‖Σ z_i Vû_i − Q̂₁‖` and `r̂ = argmin ‖Σ r_i û_iû_iᵀ − Q̂₂‖_F`.
pub fn solve_linear_systems(
    u: &[DVector<f64>],
    v: &DMatrix<f64>,
    q1: &DVector<f64>,
    q2: &DMatrix<f64>,
) -> Result<LinearSolution> {
    let k = u.len();
    if k == 0 || v.ncols() != u[0].len() || q1.len() != v.nrows() || q2.shape() != (v.ncols(), v.ncols()) {
        return Err(Error::InvalidInput("linear system shapes disagree".into()));
    }
    let um = DMatrix::from_columns(u);
    let gram_determinant = (um.transpose() * &um).determinant();
    if !(gram_determinant > GRAM_DET_MIN) {
        return Err(Error::Recovery {
            level: None,
            reason: format!("recovered directions are dependent (Gram determinant {gram_determinant:.3e})"),
        });
    }
    let dz = v * &um;
    let (z, z_condition) = least_squares(&dz, q1);
    let kk = v.ncols();
    let dr = DMatrix::from_fn(kk * kk, k, |row, i| u[i][row / kk] * u[i][row % kk]);
    let q2v = DVector::from_iterator(kk * kk, (0..kk * kk).map(|row| q2[(row / kk, row % kk)]));
    let (r, r_condition) = least_squares(&dr, &q2v);
    Ok(LinearSolution {
        z_residual: (&dz * &z - q1).norm(),
        r_residual: (&dr * &r - q2v).norm(),
        z: z.iter().copied().collect(),
        r: r.iter().copied().collect(),
        z_condition,
        r_condition,
        gram_determinant,
    })
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Signs and rows from the linear-system solutions:
/// `v̂_i = sign(r̂_i c_{l₂} a_i^{l₂−2})`, `ŝ_i = sign(v̂_i ẑ_i c_{l₁} a_i^{l₁−1})` and
/// `ŵ_i = ŝ_i |ẑ_i / (c_{l₁} a_i^{l₁−1})|^{1/(p+1)} Vû_i` with `a_i = αᵀVû_i`.
/// For odd activations only the product `v̂_i ŝ_i` is identified.
pub fn assemble_network(
    sol: &LinearSolution,
    u: &[DVector<f64>],
    v: &DMatrix<f64>,
    alpha: &DVector<f64>,
    idx: &MomentIndices,
    activation: Activation,
) -> Result<TwoLayerNet> {
    let (c1, c2) = (idx.c(idx.l1), idx.c(idx.l2));
    if c1.abs() <= idx.zero_tol || c2.abs() <= idx.zero_tol {
        return Err(Error::InvalidInput("selected moment coefficient vanishes".into()));
    }
    let k = u.len();
    let mut w = DMatrix::zeros(k, v.nrows());
    let mut signs = Vec::with_capacity(k);
    for i in 0..k {
        let dir = v * &u[i];
        let a = alpha.dot(&dir);
        if a.abs() <= ALIGNMENT_MIN {
            return Err(Error::Recovery { level: None, reason: format!("probe orthogonal to neuron {}", i + 1) });
        }
        let vi = sign(sol.r[i] * c2 * a.powi(idx.l2 as i32 - 2));
        let denom = c1 * a.powi(idx.l1 as i32 - 1);
        let si = sign(vi * sol.z[i] * denom);
        let mag = (sol.z[i] / denom).abs().powf(1.0 / (idx.p as f64 + 1.0));
        w.set_row(i, &(dir * (si * mag)).transpose());
        signs.push(vi);
    }
    TwoLayerNet::new(signs, w, activation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::DEFAULT_ZERO_TOL;

    fn e(d: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn one_dimensional_projection() {
        let v = DMatrix::from_columns(&[e(3, 0)]);
        let sol = solve_linear_systems(&[e(1, 0)], &v, &(e(3, 0) * 0.5), &DMatrix::identity(1, 1)).unwrap();
        assert!((sol.z[0] - 0.5).abs() < 1e-15);
        assert!(sol.z_residual < 1e-15);
    }

    #[test]
    fn orthogonal_design() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = [DVector::from_vec(vec![s, s]), DVector::from_vec(vec![s, -s])];
        let q2 = &u[0] * u[0].transpose() * 2.0 - &u[1] * u[1].transpose() * 3.0;
        let v = DMatrix::from_columns(&[e(4, 0), e(4, 1)]);
        let sol = solve_linear_systems(&u, &v, &e(4, 0), &q2).unwrap();
        assert!((sol.r[0] - 2.0).abs() < 1e-12 && (sol.r[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_against_normal_equations() {
        let v = DMatrix::from_columns(&[e(5, 0), e(5, 1), e(5, 2)]);
        let u = [DVector::from_vec(vec![0.8, 0.6, 0.0]), DVector::from_vec(vec![0.0, 0.6, 0.8])];
        let z = [1.5, -0.7];
        let mut q1 = &v * &u[0] * z[0] + &v * &u[1] * z[1];
        let delta = DVector::from_vec(vec![3.0, -4.0, 0.0, 0.0, 12.0]) / 13.0 * 1e-3;
        q1 += &delta;
        let sol = solve_linear_systems(&u, &v, &q1, &DMatrix::identity(3, 3)).unwrap();
        let d = &v * DMatrix::from_columns(&u);
        let normal = (d.transpose() * &d).try_inverse().unwrap() * d.transpose() * &q1;
        assert!((DVector::from_vec(sol.z.clone()) - &normal).norm() < 1e-12);
        assert!(((sol.z[0] - z[0]).powi(2) + (sol.z[1] - z[1]).powi(2)).sqrt() <= 1e-2);
    }

    #[test]
    fn dependent_directions_rejected() {
        let v = DMatrix::from_columns(&[e(3, 0), e(3, 1)]);
        let u = [e(2, 0), e(2, 0)];
        assert!(solve_linear_systems(&u, &v, &e(3, 0), &DMatrix::identity(2, 2)).is_err());
    }

    fn relu_inputs(label_sign: f64, norm: f64) -> (LinearSolution, MomentIndices) {
        let idx = MomentIndices::select(&Activation::Relu, DEFAULT_ZERO_TOL).unwrap();
        let scale = label_sign * norm.powi(idx.p as i32 + 1);
        let sol = LinearSolution {
            z: vec![scale * idx.c(1)],
            r: vec![scale * idx.c(2)],
            z_residual: 0.0,
            r_residual: 0.0,
            z_condition: 1.0,
            r_condition: 1.0,
            gram_determinant: 1.0,
        };
        (sol, idx)
    }

    #[test]
    fn relu_single_neuron_inverse() {
        let v = DMatrix::from_columns(&[e(3, 0)]);
        let alpha = e(3, 0);
        for (sgn, norm) in [(1.0, 1.0), (-1.0, 1.0), (1.0, 2.0)] {
            let (sol, idx) = relu_inputs(sgn, norm);
            let net = assemble_network(&sol, &[e(1, 0)], &v, &alpha, &idx, Activation::Relu).unwrap();
            assert_eq!(net.v, vec![sgn]);
            assert!((net.row(0) - e(3, 0) * norm).norm() < 1e-12);
        }
    }
}
