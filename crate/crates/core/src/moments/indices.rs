use serde::{Deserialize, Serialize};

use super::activation::{activation_moment_coefficients, Activation};
use crate::error::{Error, Result};

/// Default threshold below which a moment coefficient counts as zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Moment orders used by the recovery pipeline and the per-order coefficients
/// `c_j = m_j(1)`, so that `m_{j,i} = c_j‖w_i‖^{p+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentIndices {
    pub j2: usize,
    pub j3: usize,
    pub l1: usize,
    pub l2: usize,
    /// `c[j-1] = c_j`.
    pub c: [f64; 4],
    pub p: u32,
    pub zero_tol: f64,
}

impl MomentIndices {
    pub fn select(act: &Activation, zero_tol: f64) -> Result<Self> {
        let coeffs = activation_moment_coefficients(act, 1.0)?;
        Self::from_coefficients(coeffs.m, act.p(), zero_tol)
    }

    /// Selection rules:
    /// `j₂ = min{j ≥ 2 : M_j ≠ 0}`, `j₃ = min{j ≥ 3 : M_j ≠ 0}`, and
    /// - if `M₁ = M₃ = 0`: `l₁ = l₂ = min{j ∈ {2,4} : M_j ≠ 0}`;
    /// - else if `M₂ = M₄ = 0`: `l₁ = min{j ∈ {1,3} : M_j ≠ 0}`, `l₂ = 3`;
    /// - else `l₁ = min{j ∈ {1,3} : M_j ≠ 0}`, `l₂ = min{j ∈ {2,4} : M_j ≠ 0}`.
    pub fn from_coefficients(c: [f64; 4], p: u32, zero_tol: f64) -> Result<Self> {
        let nz = |j: usize| c[j - 1].abs() > zero_tol;
        let first = |js: &[usize]| js.iter().copied().find(|&j| nz(j));
        let fail = |m: &str| Error::InvalidInput(format!("activation moments: {m}"));
        if !nz(3) && !nz(4) {
            return Err(fail("M3 and M4 both vanish"));
        }
        let j2 = first(&[2, 3, 4]).ok_or_else(|| fail("no nonzero moment of order >= 2"))?;
        let j3 = first(&[3, 4]).ok_or_else(|| fail("no nonzero moment of order >= 3"))?;
        let (l1, l2) = if !nz(1) && !nz(3) {
            let l = first(&[2, 4]).ok_or_else(|| fail("no nonzero even moment"))?;
            (l, l)
        } else if !nz(2) && !nz(4) {
            (first(&[1, 3]).ok_or_else(|| fail("no nonzero odd moment"))?, 3)
        } else {
            (
                first(&[1, 3]).ok_or_else(|| fail("no nonzero odd moment"))?,
                first(&[2, 4]).ok_or_else(|| fail("no nonzero even moment"))?,
            )
        };
        Ok(Self { j2, j3, l1, l2, c, p, zero_tol })
    }

    pub fn c(&self, j: usize) -> f64 {
        self.c[j - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_orders() {
        let idx = MomentIndices::select(&Activation::Relu, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!((idx.j2, idx.j3, idx.l1, idx.l2), (2, 4, 1, 2));
    }

    #[test]
    fn squared_relu_orders() {
        let idx = MomentIndices::select(&Activation::SquaredRelu, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!((idx.j2, idx.j3, idx.l1, idx.l2, idx.p), (2, 3, 1, 2, 1));
    }

    #[test]
    fn cube_orders() {
        let idx = MomentIndices::select(&Activation::Power { degree: 3 }, DEFAULT_ZERO_TOL).unwrap();
        assert_eq!((idx.j2, idx.j3, idx.l1, idx.l2), (3, 3, 1, 3));
    }

    #[test]
    fn branches() {
        let even = MomentIndices::from_coefficients([0.0, 0.0, 0.0, 2.0], 0, 1e-8).unwrap();
        assert_eq!((even.j2, even.j3, even.l1, even.l2), (4, 4, 4, 4));
        let mixed = MomentIndices::from_coefficients([0.0, 1.0, 1.0, 0.0], 0, 1e-8).unwrap();
        assert_eq!((mixed.l1, mixed.l2), (3, 2));
        assert!(MomentIndices::from_coefficients([1.0, 1.0, 0.0, 0.0], 0, 1e-8).is_err());
    }
}
