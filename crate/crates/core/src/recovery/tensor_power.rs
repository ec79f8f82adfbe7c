use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::random_unit;
use crate::moments::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorPowerOptions {
    /// Restarts per component; `None` means `ceil(100·k·ln(k+1))`.
    pub restarts: Option<usize>,
    pub iterations: usize,
    pub tol: f64,
    /// Weights at or below `min_weight·‖T‖_F` count as vanished.
    pub min_weight: f64,
}

impl Default for TensorPowerOptions {
    fn default() -> Self {
        Self { restarts: None, iterations: 100, tol: 1e-10, min_weight: 1e-8 }
    }
}

impl TensorPowerOptions {
    pub fn restarts_for(&self, k: usize) -> usize {
        self.restarts.unwrap_or_else(|| (100.0 * k as f64 * ((k + 1) as f64).ln()).ceil() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorComponent {
    /// Unit vector.
    pub vector: DVector<f64>,
    /// `T(u, u, u)` of the deflated tensor at selection time.
    pub weight: f64,
    /// Restarts that converged to `±vector` (cosine above `1 − 1e-6`).
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorDecomposition {
    pub components: Vec<TensorComponent>,
    /// `‖T − Σ λ_i u_i^{⊗3}‖_F`.
    pub residual: f64,
    pub relative_residual: f64,
}

fn power_iterate(t: &Tensor3, start: DVector<f64>, iterations: usize, tol: f64) -> (DVector<f64>, f64) {
    let mut u = start;
    for _ in 0..iterations {
        let next = t.apply_vv(&u);
        let n = next.norm();
        if n == 0.0 {
            break;
        }
        let next = next / n;
        let moved = (&next - &u).norm();
        u = next;
        if moved <= tol {
            break;
        }
    }
    let w = t.apply_vvv(&u);
    (u, w)
}

/// Robust tensor power method with greedy deflation. Starts are drawn sequentially
/// from `rng`; restarts run concurrently and the largest weight wins (ties: lower
/// restart index). The winner is polished with a further `iterations` steps.
pub fn tensor_decompose<R: Rng + ?Sized>(
    t: &Tensor3,
    k: usize,
    opts: &TensorPowerOptions,
    rng: &mut R,
) -> Result<TensorDecomposition> {
    let dim = t.dim();
    if k == 0 || k > dim {
        return Err(Error::InvalidInput(format!("{k} components from a tensor of dimension {dim}")));
    }
    let scale = t.frobenius();
    if scale == 0.0 {
        return Err(Error::Recovery { level: None, reason: "tensor is zero".into() });
    }
    let restarts = opts.restarts_for(k);
    let mut deflated = t.clone();
    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let starts: Vec<DVector<f64>> = (0..restarts).map(|_| random_unit(rng, dim)).collect();
        let runs: Vec<(DVector<f64>, f64)> =
            starts.into_par_iter().map(|s| power_iterate(&deflated, s, opts.iterations, opts.tol)).collect();
        let best = runs.iter().enumerate().fold(0usize, |b, (i, r)| if r.1 > runs[b].1 { i } else { b });
        let (u, weight) = power_iterate(&deflated, runs[best].0.clone(), opts.iterations, opts.tol);
        if !(weight > opts.min_weight * scale) {
            return Err(Error::Recovery {
                level: None,
                reason: format!("tensor component {} vanished (weight {weight:.3e})", c + 1),
            });
        }
        let support = runs.iter().filter(|r| r.0.dot(&u).abs() > 1.0 - 1e-6).count();
        let rank1 = Tensor3::from_components(&[weight], std::slice::from_ref(&u));
        deflated = deflated.sub(&rank1);
        components.push(TensorComponent { vector: u, weight, support });
    }
    let residual = deflated.frobenius();
    Ok(TensorDecomposition { components, residual, relative_residual: residual / scale })
}
