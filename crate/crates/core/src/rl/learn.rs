use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::diagnostics::measure_gap;
use super::explore::{explore_level, LabelMode};
use crate::error::{Error, Result};
use crate::mdp::{greedy_policy, AccessMode, Action, Mdp, Policy, SimulatorAccess, StateId};
use crate::moments::{default_radius, SampleBatch};
use crate::recovery::{exact_recover, noisy_recover, RecoveryConfig, RecoveryReport, RecoveryStatus, TwoLayerNet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralRlConfig {
    /// Samples per level.
    pub n: usize,
    /// Known width of every level's net.
    pub width: usize,
    pub epsilon: f64,
    /// Gap `ρ` for the gap variant.
    pub rho: Option<f64>,
    /// Exploration radius `δ_φ`; `None` means `max(10√d, d)`.
    pub radius: Option<f64>,
    pub recovery: RecoveryConfig,
    /// Use exact recovery (gradient refinement) instead of moment recovery alone.
    pub noiseless: bool,
    /// Continue past degraded recoveries instead of failing the level.
    pub accept_degraded: bool,
}

impl Default for NeuralRlConfig {
    fn default() -> Self {
        Self {
            n: 200_000,
            width: 2,
            epsilon: 0.2,
            rho: None,
            radius: None,
            recovery: RecoveryConfig::default(),
            noiseless: false,
            accept_degraded: false,
        }
    }
}

impl NeuralRlConfig {
    pub fn radius_for(&self, d: usize) -> f64 {
        self.radius.unwrap_or_else(|| default_radius(d))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n == 0 || self.width == 0 {
            return Err(Error::InvalidInput("sample count and width must be positive".into()));
        }
        let radius = self.radius_for(d);
        if !(radius > 0.0) || radius > self.recovery.truncation_for(d) {
            return Err(Error::InvalidInput(format!("exploration radius {radius} outside (0, B]")));
        }
        self.recovery.validate()
    }
}

/// Recovered `Q̂_h(x) = f̂_h(x) + c_h` at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelModel {
    pub level: usize,
    pub net: TwoLayerNet,
    /// Constant re-estimated as the mean of `y − f̂(x)`.
    pub offset: f64,
    pub report: RecoveryReport,
    /// `V̂_h(s) = max_a Q̂_h(s, a)` over candidates.
    pub values: Vec<f64>,
    /// Non-truncated labels collected at this level.
    pub labels: usize,
    /// Candidate features outside the exploration radius.
    pub extrapolated: usize,
}

impl LevelModel {
    pub fn q_feature(&self, x: &DVector<f64>) -> f64 {
        self.net.eval(x) + self.offset
    }
}

/// Output of a level-wise learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedValueStack {
    /// Index `h-1`; populated from `H` down to 1.
    pub levels: Vec<LevelModel>,
    pub policy: Policy,
    /// Simulator steps per level.
    pub queries: Vec<u64>,
    pub radius: f64,
    /// Measured gap when it is below the configured `ρ`.
    pub gap_violation: Option<f64>,
}

impl LearnedValueStack {
    pub fn level(&self, h: usize) -> &LevelModel {
        &self.levels[h - 1]
    }

    pub fn q_hat(&self, mdp: &dyn Mdp, h: usize, s: StateId, a: &Action) -> Result<f64> {
        Ok(self.level(h).q_feature(&mdp.feature(h, s, a)?))
    }

    /// Total non-truncated labels over all levels.
    pub fn total_labels(&self) -> usize {
        self.levels.iter().map(|l| l.labels).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Labels {
    Rollout,
    Backup,
}

fn run_backward<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    cfg: &NeuralRlConfig,
    labels: Labels,
    precision: Option<f64>,
    rng: &mut R,
) -> Result<LearnedValueStack> {
    let d = mdp.feature_dim();
    cfg.validate(d)?;
    let mut rcfg = cfg.recovery.clone();
    if let Some(p) = precision {
        rcfg.epsilon = p.min(rcfg.epsilon);
    }
    let radius = cfg.radius_for(d);
    let horizon = mdp.horizon();
    let access = SimulatorAccess::new(mdp, AccessMode::Generative);
    let mut policy = Policy::first_action(horizon, mdp.num_states());
    let mut levels: Vec<Option<LevelModel>> = vec![None; horizon];
    let mut next_values = vec![0.0; mdp.num_states()];
    for h in (1..=horizon).rev() {
        let mode = match labels {
            Labels::Rollout => LabelMode::Rollout(&policy),
            Labels::Backup => LabelMode::Backup(&next_values),
        };
        let batch = explore_level(&access, h, mode, cfg.n, radius, rng)?;
        let model = fit_level(mdp, h, &batch, cfg, &rcfg, radius, rng)?;
        let level_policy = greedy_policy(mdp, |lh, s, _, a| {
            if lh == h {
                mdp.feature(h, s, a).map(|x| model.q_feature(&x)).unwrap_or(f64::NEG_INFINITY)
            } else {
                0.0
            }
        })?;
        for s in 0..mdp.num_states() {
            policy.set(h, s, level_policy.index(h, s));
        }
        next_values = model.values.clone();
        levels[h - 1] = Some(model);
    }
    Ok(LearnedValueStack {
        levels: levels.into_iter().map(|l| l.expect("every level fitted")).collect(),
        policy,
        queries: access.counts(),
        radius,
        gap_violation: None,
    })
}

fn fit_level<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    h: usize,
    batch: &SampleBatch,
    cfg: &NeuralRlConfig,
    rcfg: &RecoveryConfig,
    radius: f64,
    rng: &mut R,
) -> Result<LevelModel> {
    let kept: Vec<usize> = (0..batch.len()).filter(|&i| !batch.truncated[i]).collect();
    if kept.is_empty() {
        return Err(Error::Recovery { level: Some(h), reason: "every sample truncated".into() });
    }
    let (report, offset) = if cfg.noiseless {
        (exact_recover(batch, cfg.width, rcfg, rng)?, 0.0)
    } else {
        let mean = kept.iter().map(|&i| batch.y[i]).sum::<f64>() / kept.len() as f64;
        let y: Vec<f64> = (0..batch.len()).map(|i| if batch.truncated[i] { 0.0 } else { batch.y[i] - mean }).collect();
        let centered = SampleBatch::new(batch.x.clone(), y, batch.truncated.clone(), batch.radius, batch.noise)?;
        let report = noisy_recover(&centered, cfg.width, rcfg, rng)?;
        let offset = match &report.net {
            Some(net) => {
                kept.iter().map(|&i| batch.y[i] - net.eval_view(batch.x.column(i))).sum::<f64>() / kept.len() as f64
            }
            None => 0.0,
        };
        (report, offset)
    };
    let acceptable = match report.status {
        RecoveryStatus::Success => true,
        RecoveryStatus::Degraded => cfg.accept_degraded,
        RecoveryStatus::Failed => false,
    };
    if !acceptable {
        return Err(Error::Recovery { level: Some(h), reason: report.reasons.join("; ") });
    }
    let net = report.net.clone().ok_or(Error::Recovery { level: Some(h), reason: "no network".into() })?;
    let mut values = Vec::with_capacity(mdp.num_states());
    let mut extrapolated = 0;
    for s in 0..mdp.num_states() {
        let mut best = f64::NEG_INFINITY;
        for a in mdp.candidates(h, s)? {
            let x = mdp.feature(h, s, a)?;
            if x.norm() > radius {
                extrapolated += 1;
            }
            best = best.max(net.eval(&x) + offset);
        }
        values.push(best);
    }
    Ok(LevelModel { level: h, net, offset, report, values, labels: kept.len(), extrapolated })
}

/// Rollout labels with exact recovery at every level; requires deterministic
/// transitions.
pub fn learn_deterministic<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    cfg: &NeuralRlConfig,
    rng: &mut R,
) -> Result<LearnedValueStack> {
    if !mdp.is_deterministic() {
        return Err(Error::InvalidMdp("deterministic learner needs deterministic transitions".into()));
    }
    let cfg = NeuralRlConfig { noiseless: true, ..cfg.clone() };
    run_backward(mdp, &cfg, Labels::Rollout, None, rng)
}

/// Rollout labels with moment recovery at per-level precision `ε/(2H)`.
pub fn learn_policy_complete<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    cfg: &NeuralRlConfig,
    rng: &mut R,
) -> Result<LearnedValueStack> {
    let precision = cfg.epsilon / (2.0 * mdp.horizon() as f64);
    run_backward(mdp, cfg, Labels::Rollout, Some(precision), rng)
}

/// Backup labels `r_h + V̂_{h+1}(s')` with moment recovery at precision `ε/(2H)`.
pub fn learn_bellman_complete<R: Rng + ?Sized>(
    mdp: &dyn Mdp,
    cfg: &NeuralRlConfig,
    rng: &mut R,
) -> Result<LearnedValueStack> {
    let precision = cfg.epsilon / (2.0 * mdp.horizon() as f64);
    run_backward(mdp, cfg, Labels::Backup, Some(precision), rng)
}

/// Rollout labels at per-level precision `ρ/4`; flags a gap violation when the
/// instance is enumerable and its measured gap is below `ρ`.
pub fn learn_with_gap<R: Rng + ?Sized>(mdp: &dyn Mdp, cfg: &NeuralRlConfig, rng: &mut R) -> Result<LearnedValueStack> {
    let rho = cfg.rho.ok_or_else(|| Error::InvalidInput("gap variant needs ρ".into()))?;
    if !(rho > 0.0) {
        return Err(Error::NonPositiveScale(rho));
    }
    let mut stack = run_backward(mdp, cfg, Labels::Rollout, Some(rho / 4.0), rng)?;
    if let Ok(gap) = measure_gap(mdp) {
        if gap < rho {
            stack.gap_violation = Some(gap);
        }
    }
    Ok(stack)
}
