//! Adaptive composite Gauss–Legendre quadrature.

use std::sync::OnceLock;

const ORDER: usize = 20;

/// Nodes and weights of the `ORDER`-point rule on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
fn rule() -> &'static ([f64; ORDER], [f64; ORDER]) {
    static RULE: OnceLock<([f64; ORDER], [f64; ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule();
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    half * nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let (left, right) = (fixed(f, a, m), fixed(f, m, b));
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
}

/// `∫_a^b f` to absolute tolerance `tol` (bisection on disagreement with the halves).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let whole = fixed(&f, a, b);
    adaptive(&f, a, b, whole, tol, 40)
}

/// Half-width of the standard-normal integration window.
pub const GAUSS_WINDOW: f64 = 12.0;

/// `E_{z∼N(0,1)}[g(z)]` with the window split at 0 so a kink there is a breakpoint.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(g: F, tol: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let h = |z: f64| g(z) * phi(z);
    integrate(&h, -GAUSS_WINDOW, 0.0, tol / 2.0) + integrate(&h, 0.0, GAUSS_WINDOW, tol / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let (_, w) = rule();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 1e-14);
        assert!((v - (255.0 / 8.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn normal_moments() {
        assert!((gaussian_expectation(|_| 1.0, 1e-13) - 1.0).abs() < 1e-12);
        assert!((gaussian_expectation(|z| z.powi(4), 1e-13) - 3.0).abs() < 1e-11);
        let relu_mean = gaussian_expectation(|z| z.max(0.0), 1e-13);
        assert!((relu_mean - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
