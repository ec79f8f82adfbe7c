use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AccessMode, Action, Mdp, Policy, SimulatorAccess, StateId};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Default cap on `|S|·|A|·H` for enumeration.
pub const DEFAULT_DP_CAP: u64 = 1_000_000;

/// Optimal values and a greedy optimal policy; indices are `[h-1][s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub q: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
    pub policy: Policy,
}

impl DpSolution {
    pub fn value(&self, h: usize, s: StateId) -> f64 {
        self.v[h - 1][s]
    }
}

/// Values of a fixed policy; indices are `[h-1][s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValues {
    pub q: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// True when computed by enumeration rather than sampling.
    pub exact: bool,
}

fn enumeration_size(mdp: &dyn Mdp) -> u64 {
    (mdp.num_states() as u64) * (mdp.max_candidates() as u64) * (mdp.horizon() as u64)
}

fn check_cap(mdp: &dyn Mdp, cap: u64) -> Result<()> {
    let size = enumeration_size(mdp);
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    Ok(())
}

/// `E[r + next[s']]` under the transition law at `(h, s, a)`.
fn backup(mdp: &dyn Mdp, h: usize, s: StateId, a: &Action, next: &[f64]) -> Result<f64> {
    Ok(mdp.outcomes(h, s, a)?.iter().map(|o| o.prob * (o.reward + next[o.next_state])).sum())
}

/// First index of the maximum; strict comparison keeps the lowest index on ties.
fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Backward induction over all states and candidates with `V_{H+1} ≡ 0`.
pub fn exact_dp_solve(mdp: &dyn Mdp, cap: u64) -> Result<DpSolution> {
    check_cap(mdp, cap)?;
    let (horizon, ns) = (mdp.horizon(), mdp.num_states());
    let mut q = vec![Vec::new(); horizon];
    let mut v = vec![vec![0.0; ns]; horizon];
    let mut policy = Policy::first_action(horizon, ns);
    let mut next = vec![0.0; ns];
    for h in (1..=horizon).rev() {
        let mut qh = Vec::with_capacity(ns);
        for s in 0..ns {
            let cands = mdp.candidates(h, s)?;
            if cands.is_empty() {
                return Err(Error::EmptyActionSet { level: h, state: s });
            }
            let row = cands.iter().map(|a| backup(mdp, h, s, a, &next)).collect::<Result<Vec<_>>>()?;
            let best = argmax_lowest(&row);
            policy.set(h, s, best);
            v[h - 1][s] = row[best];
            qh.push(row);
        }
        q[h - 1] = qh;
        next = v[h - 1].clone();
    }
    Ok(DpSolution { q, v, policy })
}

/// Exact `Q^π` and `V^π` by backward enumeration.
pub fn policy_values(mdp: &dyn Mdp, policy: &Policy, cap: u64) -> Result<PolicyValues> {
    check_cap(mdp, cap)?;
    policy.validate(mdp)?;
    let (horizon, ns) = (mdp.horizon(), mdp.num_states());
    let mut q = vec![Vec::new(); horizon];
    let mut v = vec![vec![0.0; ns]; horizon];
    let mut next = vec![0.0; ns];
    for h in (1..=horizon).rev() {
        let mut qh = Vec::with_capacity(ns);
        for s in 0..ns {
            let row = mdp.candidates(h, s)?.iter().map(|a| backup(mdp, h, s, a, &next)).collect::<Result<Vec<_>>>()?;
            v[h - 1][s] = row[policy.index(h, s)];
            qh.push(row);
        }
        q[h - 1] = qh;
        next = v[h - 1].clone();
    }
    Ok(PolicyValues { q, v })
}

/// Max-abs Bellman optimality residual of a DP solution.
pub fn bellman_residual(mdp: &dyn Mdp, sol: &DpSolution) -> Result<f64> {
    let (horizon, ns) = (mdp.horizon(), mdp.num_states());
    let zeros = vec![0.0; ns];
    let mut worst: f64 = 0.0;
    for h in 1..=horizon {
        let next = if h == horizon { &zeros } else { &sol.v[h] };
        for s in 0..ns {
            for (i, a) in mdp.candidates(h, s)?.iter().enumerate() {
                worst = worst.max((sol.q[h - 1][s][i] - backup(mdp, h, s, a, next)?).abs());
            }
            let vmax = sol.q[h - 1][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((sol.v[h - 1][s] - vmax).abs());
        }
    }
    Ok(worst)
}

/// Greedy policy over candidates for `q(h, s, index, action)`; ties go to the lowest index.
pub fn greedy_policy<F>(mdp: &dyn Mdp, q: F) -> Result<Policy>
where
    F: Fn(usize, StateId, usize, &Action) -> f64,
{
    let mut policy = Policy::first_action(mdp.horizon(), mdp.num_states());
    for h in 1..=mdp.horizon() {
        for s in 0..mdp.num_states() {
            let cands = mdp.candidates(h, s)?;
            if cands.is_empty() {
                return Err(Error::EmptyActionSet { level: h, state: s });
            }
            let row: Vec<f64> = cands.iter().enumerate().map(|(i, a)| q(h, s, i, a)).collect();
            policy.set(h, s, argmax_lowest(&row));
        }
    }
    Ok(policy)
}

/// Monte Carlo value from the initial state; episode `i` uses its own stream so the
/// estimate does not depend on scheduling.
pub fn monte_carlo_value<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    policy: &Policy,
    n_episodes: usize,
    rng: &mut R,
) -> Result<ValueEstimate> {
    if n_episodes == 0 {
        return Err(Error::InvalidInput("n_episodes must be positive".into()));
    }
    policy.validate(mdp)?;
    let base: u64 = rng.random();
    let s1 = mdp.initial_state();
    let a1 = policy.action(mdp, 1, s1)?.clone();
    let returns = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let access = SimulatorAccess::new(mdp, AccessMode::Online);
            let mut r = stream(base, "episode", i as u64);
            access.rollout(1, s1, &a1, policy, &mut r).map(|t| t.total_reward())
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var =
        if returns.len() > 1 { returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(ValueEstimate { mean, std_err: (var / n).sqrt(), exact: false })
}

/// Value of `policy` from the initial state: exact below the enumeration cap, Monte
/// Carlo otherwise.
pub fn evaluate_policy<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    policy: &Policy,
    n_episodes: usize,
    rng: &mut R,
) -> Result<ValueEstimate> {
    if n_episodes == 0 {
        return Err(Error::InvalidInput("n_episodes must be positive".into()));
    }
    if enumeration_size(mdp) <= DEFAULT_DP_CAP {
        let pv = policy_values(mdp, policy, DEFAULT_DP_CAP)?;
        return Ok(ValueEstimate { mean: pv.v[0][mdp.initial_state()], std_err: 0.0, exact: true });
    }
    monte_carlo_value(mdp, policy, n_episodes, rng)
}
