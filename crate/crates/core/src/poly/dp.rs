use nalgebra::DVector;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::family::{FamilySpec, PolynomialFamily};
use super::fit::{fit_family, FitOptions, FitOutcome, FitResult};
use super::measure::{check_positive_measure, sample_positive_measure, PositiveMeasureSet};
use crate::error::{Error, Result};
use crate::mdp::{AccessMode, Action, Mdp, Policy, SimulatorAccess, StateId};

/// A state-action pair realizing a sampled feature point.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub state: StateId,
    pub action: Action,
    /// The label at the sampled point is `reward_scale · r + V_{h+1}(s')`.
    pub reward_scale: f64,
}

/// A deterministic MDP whose feature images are described by explicit sets.
pub trait PolyMdp: Mdp {
    /// Region the generative learner samples feature points from at level `h`.
    fn sampling_set(&self, h: usize) -> PositiveMeasureSet;
    /// `{φ_h(s, a) : a ∈ 𝒜}`.
    fn state_action_set(&self, h: usize, s: StateId) -> PositiveMeasureSet;
    /// A pair whose query yields the label at `x ∈ sampling_set(h)`.
    fn realize(&self, h: usize, x: &DVector<f64>, rng: &mut dyn RngCore) -> Result<Realization>;
    /// An action `a` with `φ_h(s, a) = x` for `x ∈ state_action_set(h, s)`.
    fn realize_in_state(&self, h: usize, s: StateId, x: &DVector<f64>) -> Result<Action>;
}

/// Output of a polynomial DP learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyDpReport {
    pub policy: Policy,
    /// Index `h-1`.
    pub fits: Vec<FitResult>,
    /// `V̂_h(s)` over candidates; index `h-1`.
    pub values: Vec<Vec<f64>>,
    /// Simulator steps per level.
    pub queries: Vec<u64>,
    pub episodes: u64,
    /// Gaussian proposals spent on sampling and measure checks.
    pub measure_proposals: u64,
}

impl PolyDpReport {
    /// Fitted `Q̂_h` as a function of the feature.
    pub fn q_hat(&self, h: usize) -> &PolynomialFamily {
        &self.fits[h - 1].family
    }

    pub fn total_queries(&self) -> u64 {
        self.queries.iter().sum()
    }
}

fn check_inputs(mdp: &dyn PolyMdp, specs: &[FamilySpec]) -> Result<()> {
    if !mdp.is_deterministic() {
        return Err(Error::InvalidMdp("polynomial DP needs deterministic transitions".into()));
    }
    if specs.len() != mdp.horizon() {
        return Err(Error::InvalidInput(format!("{} family specs for horizon {}", specs.len(), mdp.horizon())));
    }
    for spec in specs {
        spec.validate()?;
        if spec.dim() != mdp.feature_dim() {
            return Err(Error::InvalidInput(format!(
                "family dimension {} differs from feature dimension {}",
                spec.dim(),
                mdp.feature_dim()
            )));
        }
    }
    Ok(())
}

fn fit_level<R: Rng + ?Sized>(
    h: usize,
    xs: &[DVector<f64>],
    ys: &[f64],
    spec: &FamilySpec,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<FitResult> {
    match fit_family(xs, ys, spec, opts, rng)? {
        FitOutcome::Fitted(r) => Ok(r),
        FitOutcome::NoSolution { .. } => Err(Error::NoSolution { level: h }),
    }
}

/// Greedy values and actions of `q` over candidates at level `h`.
fn plan_level(mdp: &dyn Mdp, h: usize, q: &PolynomialFamily, policy: &mut Policy) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(mdp.num_states());
    for s in 0..mdp.num_states() {
        let cands = mdp.candidates(h, s)?;
        if cands.is_empty() {
            return Err(Error::EmptyActionSet { level: h, state: s });
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, a) in cands.iter().enumerate() {
            let v = q.eval(&mdp.feature(h, s, a)?)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        policy.set(h, s, best.0);
        values.push(best.1);
    }
    Ok(values)
}

fn next_value(values: &[Vec<f64>], h: usize, horizon: usize, s: StateId) -> f64 {
    if h < horizon {
        values[h][s]
    } else {
        0.0
    }
}

/// Backward polynomial DP with the generative model: `2D_h` points from the level's
/// sampling set, one query each, labels `r + V̂_{h+1}(s')`, then fit and plan.
pub fn dp_generative<R: Rng>(
    mdp: &dyn PolyMdp,
    specs: &[FamilySpec],
    opts: &FitOptions,
    rng: &mut R,
) -> Result<PolyDpReport> {
    check_inputs(mdp, specs)?;
    let horizon = mdp.horizon();
    let d = mdp.feature_dim();
    let access = SimulatorAccess::new(mdp, AccessMode::Generative);
    let mut policy = Policy::first_action(horizon, mdp.num_states());
    let mut values = vec![Vec::new(); horizon];
    let mut fits: Vec<Option<FitResult>> = vec![None; horizon];
    let mut proposals = 0;
    for h in (1..=horizon).rev() {
        let spec = &specs[h - 1];
        let sample = sample_positive_measure(&mdp.sampling_set(h), d, spec.required_samples(), rng)?;
        proposals += sample.proposals;
        let mut ys = Vec::with_capacity(sample.points.len());
        for x in &sample.points {
            let real = mdp.realize(h, x, rng)?;
            let (r, next) = access.generative_query(h, real.state, &real.action, rng)?;
            ys.push(real.reward_scale * r + next_value(&values, h, horizon, next));
        }
        let fit = fit_level(h, &sample.points, &ys, spec, opts, rng)?;
        values[h - 1] = plan_level(mdp, h, &fit.family, &mut policy)?;
        fits[h - 1] = Some(fit);
    }
    Ok(PolyDpReport {
        policy,
        fits: fits.into_iter().map(|f| f.expect("every level fitted")).collect(),
        values,
        queries: access.counts(),
        episodes: access.episodes(),
        measure_proposals: proposals,
    })
}

/// Backward polynomial DP from episodes only. Every `(h, s)` image is first checked for
/// positive measure. At level `h`, candidate 0 on levels `< h` reaches `s_h`; each of
/// `2D_h` episodes plays a fresh point of `s_h`'s image, then the learned policy.
pub fn dp_online<R: Rng>(
    mdp: &dyn PolyMdp,
    specs: &[FamilySpec],
    opts: &FitOptions,
    rng: &mut R,
) -> Result<PolyDpReport> {
    check_inputs(mdp, specs)?;
    let horizon = mdp.horizon();
    let d = mdp.feature_dim();
    let mut proposals = 0;
    for h in 1..=horizon {
        for s in 0..mdp.num_states() {
            proposals += check_positive_measure(&mdp.state_action_set(h, s), d, rng)?.proposals;
        }
    }
    let access = SimulatorAccess::new(mdp, AccessMode::Online);
    let mut policy = Policy::first_action(horizon, mdp.num_states());
    let mut values = vec![Vec::new(); horizon];
    let mut fits: Vec<Option<FitResult>> = vec![None; horizon];
    for h in (1..=horizon).rev() {
        let spec = &specs[h - 1];
        let n = spec.required_samples();
        let mut pool: Vec<DVector<f64>> = Vec::new();
        let mut target: Option<StateId> = None;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let mut played: Option<DVector<f64>> = None;
            let traj = access.episode(
                |t, s, r: &mut R| {
                    if t < h {
                        return Ok((mdp.candidates(t, s)?[0].clone(), Some(0)));
                    }
                    if t > h {
                        return Ok((policy.action(mdp, t, s)?.clone(), Some(policy.index(t, s))));
                    }
                    match target {
                        None => {
                            let sample = sample_positive_measure(&mdp.state_action_set(h, s), d, n, r)?;
                            proposals += sample.proposals;
                            pool = sample.points;
                            pool.reverse();
                            target = Some(s);
                        }
                        Some(expected) if expected != s => {
                            return Err(Error::InvalidMdp(format!(
                                "prefix reached state {s} then {expected} at level {h}"
                            )));
                        }
                        Some(_) => {}
                    }
                    let x = pool.pop().expect("one point per episode");
                    let a = mdp.realize_in_state(h, s, &x)?;
                    played = Some(x);
                    Ok((a, None))
                },
                rng,
            )?;
            let step = &traj.steps[h - 1];
            let next = if h < horizon { traj.steps[h].state } else { 0 };
            xs.push(played.expect("level h played"));
            ys.push(step.reward + next_value(&values, h, horizon, next));
        }
        let fit = fit_level(h, &xs, &ys, spec, opts, rng)?;
        values[h - 1] = plan_level(mdp, h, &fit.family, &mut policy)?;
        fits[h - 1] = Some(fit);
    }
    Ok(PolyDpReport {
        policy,
        fits: fits.into_iter().map(|f| f.expect("every level fitted")).collect(),
        values,
        queries: access.counts(),
        episodes: access.episodes(),
        measure_proposals: proposals,
    })
}
