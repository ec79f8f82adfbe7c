use serde::{Deserialize, Serialize};

use super::quadrature::gaussian_expectation;
use crate::error::{Error, Result};

const QUAD_TOL: f64 = 1e-12;

/// Activation with nonnegative derivative bounded by `L₁|x|^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `max(x, slope·x)` with `0 ≤ slope < 1`.
    LeakyRelu {
        slope: f64,
    },
    /// `max(x, 0)²`.
    SquaredRelu,
    /// `x^degree` for odd `degree`.
    Power {
        degree: u32,
    },
}

/// `γ₀..γ₄` and `m₁..m₄` at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCoefficients {
    pub gamma: [f64; 5],
    /// `m[j-1] = m_j`.
    pub m: [f64; 4],
}

impl MomentCoefficients {
    pub fn m(&self, j: usize) -> f64 {
        self.m[j - 1]
    }
}

impl Activation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(0.0..1.0).contains(&slope) => {
                Err(Error::InvalidInput(format!("leaky slope {slope} outside [0, 1)")))
            }
            Activation::Power { degree } if degree % 2 == 0 => {
                Err(Error::InvalidInput(format!("power degree {degree} must be odd")))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => x.max(slope * x),
            Activation::SquaredRelu => {
                let r = x.max(0.0);
                r * r
            }
            Activation::Power { degree } => x.powi(degree as i32),
        }
    }

    /// Derivative, taking 0 at the ReLU kink (slope at the leaky kink).
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::SquaredRelu => 2.0 * x.max(0.0),
            Activation::Power { degree } => degree as f64 * x.powi(degree as i32 - 1),
        }
    }

    /// Growth exponent `p` of the derivative bound; `σ(cx) = c^{p+1}σ(x)` for `c > 0`.
    pub fn p(&self) -> u32 {
        match *self {
            Activation::Relu | Activation::LeakyRelu { .. } => 0,
            Activation::SquaredRelu => 1,
            Activation::Power { degree } => degree - 1,
        }
    }

    /// Constant `L₁` in `σ′(x) ≤ L₁|x|^p`.
    pub fn l1(&self) -> f64 {
        match *self {
            Activation::Relu | Activation::LeakyRelu { .. } => 1.0,
            Activation::SquaredRelu => 2.0,
            Activation::Power { degree } => degree as f64,
        }
    }

    /// `γ_j(s) = E[σ(s z) z^j]`, `z ∼ N(0,1)`.
    pub fn gamma(&self, j: u32, s: f64) -> f64 {
        gaussian_expectation(|z| self.eval(s * z) * z.powi(j as i32), QUAD_TOL)
    }

    /// `α_q(z) = E[σ′(z x) x^q]`.
    pub fn alpha_q(&self, q: u32, z: f64) -> f64 {
        gaussian_expectation(|x| self.derivative(z * x) * x.powi(q as i32), QUAD_TOL)
    }

    /// `β_q(z) = E[σ′(z x)² x^q]`.
    pub fn beta_q(&self, q: u32, z: f64) -> f64 {
        gaussian_expectation(
            |x| {
                let d = self.derivative(z * x);
                d * d * x.powi(q as i32)
            },
            QUAD_TOL,
        )
    }

    /// `ρ(z) = min{β₀ − α₀² − α₁², β₂ − α₁² − α₂², α₀α₂ − α₁²}`.
    pub fn rho(&self, z: f64) -> f64 {
        let (a0, a1, a2) = (self.alpha_q(0, z), self.alpha_q(1, z), self.alpha_q(2, z));
        let (b0, b2) = (self.beta_q(0, z), self.beta_q(2, z));
        (b0 - a0 * a0 - a1 * a1).min(b2 - a1 * a1 - a2 * a2).min(a0 * a2 - a1 * a1)
    }
}

/// `γ₀..γ₄(s)` by quadrature and `m₁ = γ₁`, `m₂ = γ₂ − γ₀`, `m₃ = γ₃ − 3γ₁`,
/// `m₄ = γ₄ + 3γ₀ − 6γ₂`.
pub fn activation_moment_coefficients(act: &Activation, s: f64) -> Result<MomentCoefficients> {
    if !(s > 0.0) {
        return Err(Error::NonPositiveScale(s));
    }
    act.validate()?;
    let mut gamma = [0.0; 5];
    for (j, g) in gamma.iter_mut().enumerate() {
        *g = act.gamma(j as u32, s);
    }
    let m = [gamma[1], gamma[2] - gamma[0], gamma[3] - 3.0 * gamma[1], gamma[4] + 3.0 * gamma[0] - 6.0 * gamma[2]];
    Ok(MomentCoefficients { gamma, m })
}

#[cfg(test)]
mod tests {
    use super::*;

    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    #[test]
    fn relu_closed_forms() {
        let c = activation_moment_coefficients(&Activation::Relu, 1.0).unwrap();
        let expect_gamma = [INV_SQRT_2PI, 0.5, 2.0 * INV_SQRT_2PI, 1.5, 8.0 * INV_SQRT_2PI];
        for (g, e) in c.gamma.iter().zip(expect_gamma) {
            assert!((g - e).abs() < 1e-10, "{g} vs {e}");
        }
        assert!((c.m(1) - 0.5).abs() < 1e-10);
        assert!((c.m(2) - INV_SQRT_2PI).abs() < 1e-10);
        assert!(c.m(3).abs() < 1e-10);
        assert!((c.m(4) + INV_SQRT_2PI).abs() < 1e-10);
    }

    #[test]
    fn cube_closed_forms() {
        let c = activation_moment_coefficients(&Activation::Power { degree: 3 }, 1.0).unwrap();
        for (m, e) in c.m.iter().zip([3.0, 0.0, 6.0, 0.0]) {
            assert!((m - e).abs() < 1e-9, "{m} vs {e}");
        }
    }

    #[test]
    fn relu_rho() {
        let r = Activation::Relu.rho(1.0);
        assert!((r - (0.25 - 1.0 / (2.0 * std::f64::consts::PI))).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_scale_rejected() {
        assert_eq!(activation_moment_coefficients(&Activation::Relu, 0.0).unwrap_err(), Error::NonPositiveScale(0.0));
    }

    #[test]
    fn derivative_bound_on_grid() {
        for act in [
            Activation::Relu,
            Activation::LeakyRelu { slope: 0.1 },
            Activation::SquaredRelu,
            Activation::Power { degree: 3 },
        ] {
            for i in -200..=200 {
                let x = i as f64 * 0.05;
                let d = act.derivative(x);
                assert!(d >= 0.0);
                if x != 0.0 {
                    assert!(d <= act.l1() * x.abs().powi(act.p() as i32) + 1e-12, "{act:?} at {x}");
                }
            }
        }
    }
}
