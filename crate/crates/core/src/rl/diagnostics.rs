use nalgebra::DVector;
use rand::Rng;

use crate::error::Result;
use crate::linalg::gaussian_vector;
use crate::mdp::{exact_dp_solve, policy_values, Mdp, Policy, DEFAULT_DP_CAP};

/// Values within this of the maximum count as ties when measuring the gap.
pub const GAP_TIE_TOL: f64 = 1e-12;

/// `min_{h,s} V*_h(s) − max{Q*_h(s,a) : Q*_h(s,a) < V*_h(s)}`; `+∞` when no action is
/// strictly suboptimal.
pub fn measure_gap(mdp: &dyn Mdp) -> Result<f64> {
    let sol = exact_dp_solve(mdp, DEFAULT_DP_CAP)?;
    let mut gap = f64::INFINITY;
    for (h, level) in sol.q.iter().enumerate() {
        for (s, row) in level.iter().enumerate() {
            let best = sol.v[h][s];
            for &q in row {
                if q < best - GAP_TIE_TOL {
                    gap = gap.min(best - q);
                }
            }
        }
    }
    Ok(gap)
}

/// `count` standard Gaussian feature points with norm at most `radius`.
pub fn probe_features<R: Rng + ?Sized>(d: usize, count: usize, radius: f64, rng: &mut R) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = gaussian_vector(rng, d);
        if x.norm() <= radius {
            out.push(x);
        }
    }
    out
}

/// Max over the probes (every preimage) and every candidate pair at level `h` of
/// `|q_hat(x) − E[r_h + next(s')]|`, where `next` holds a value per state at level
/// `h + 1` (ignored at `h = H`).
pub fn probed_q_error<F>(mdp: &dyn Mdp, h: usize, q_hat: F, next: &[f64], probes: &[DVector<f64>]) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let last = h == mdp.horizon();
    let target = |s, a: &DVector<f64>| -> Result<f64> {
        Ok(mdp
            .outcomes(h, s, a)?
            .iter()
            .map(|o| o.prob * (o.reward + if last { 0.0 } else { next[o.next_state] }))
            .sum())
    };
    let mut worst: f64 = 0.0;
    for x in probes {
        let qx = q_hat(x);
        for (s, a) in mdp.preimages(h, x)? {
            worst = worst.max((qx - target(s, &a)?).abs());
        }
    }
    for s in 0..mdp.num_states() {
        for a in mdp.candidates(h, s)? {
            let x = mdp.feature(h, s, a)?;
            worst = worst.max((q_hat(&x) - target(s, a)?).abs());
        }
    }
    Ok(worst)
}

/// `max_s V*_h(s) − V^π_h(s)` for each level, by enumeration; index `h-1`.
pub fn suboptimality_by_level(mdp: &dyn Mdp, policy: &Policy) -> Result<Vec<f64>> {
    let sol = exact_dp_solve(mdp, DEFAULT_DP_CAP)?;
    let pv = policy_values(mdp, policy, DEFAULT_DP_CAP)?;
    Ok(sol
        .v
        .iter()
        .zip(&pv.v)
        .map(|(vs, ps)| vs.iter().zip(ps).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// `(H − h + 1)·ε/H + Σ_{t ≥ h} max(0, 2e_t − ε/H)` per level for per-level recovery
/// errors `e_t`; index `h-1`.
pub fn telescoping_bounds(errors: &[f64], epsilon: f64) -> Vec<f64> {
    let horizon = errors.len();
    let per = epsilon / horizon as f64;
    (1..=horizon)
        .map(|h| {
            let slack: f64 = errors[h - 1..].iter().map(|e| (2.0 * e - per).max(0.0)).sum();
            (horizon - h + 1) as f64 * per + slack
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::TabularMdp;

    #[test]
    fn gap_of_two_action_instance() {
        let mdp = TabularMdp::deterministic_scalar(1, 2, |_, _, i| Some((0, [1.0, 0.3][i])), 2).unwrap();
        assert!((measure_gap(&mdp).unwrap() - 0.7).abs() < 1e-12);
        let flat = TabularMdp::deterministic_scalar(1, 1, |_, _, _| Some((0, 0.4)), 3).unwrap();
        assert_eq!(measure_gap(&flat).unwrap(), f64::INFINITY);
    }

    #[test]
    fn telescoping_without_slack() {
        let b = telescoping_bounds(&[0.0, 0.05], 0.2);
        assert!((b[0] - 0.2).abs() < 1e-15 && (b[1] - 0.1).abs() < 1e-15);
        let b = telescoping_bounds(&[0.1, 0.0], 0.2);
        assert!((b[0] - 0.3).abs() < 1e-15);
    }
}
