use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linsys::{assemble_network, solve_linear_systems, LinearSolution};
use super::loss::empirical_loss_and_gradient;
use super::net::{match_networks, NetworkMatch, TwoLayerNet};
use super::residual::residualize;
use super::subspace::{estimate_subspace, SubspaceOptions};
use super::tensor_power::{tensor_decompose, TensorPowerOptions};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, random_unit};
use crate::moments::{
    default_radius, estimate_p2, estimate_q1, estimate_q2, estimate_r3, Activation, MomentIndices, SampleBatch,
    Tensor3, DEFAULT_ZERO_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryConfig {
    pub activation: Activation,
    /// Power-iteration count `T`; at least `ceil(ln(1/ε))` is used.
    pub power_iterations: usize,
    pub subspace_tol: f64,
    pub subspace_max_factor: usize,
    /// `None`: `ceil(100·k·ln(k+1))`.
    pub tensor_restarts: Option<usize>,
    pub tensor_iterations: usize,
    pub tensor_tol: f64,
    /// Target precision `ε ∈ (0, 1)`.
    pub epsilon: f64,
    /// Failure budget `t ∈ (0, 1)`.
    pub failure_probability: f64,
    /// Truncation radius `B` of the sampling model; `None` means `max(10√d, d)`.
    pub truncation: Option<f64>,
    pub zero_tol: f64,
    /// Minimum relative spectral gap `(s_k − s_{k+1}) / s_1` of the subspace scores.
    pub gap_tol: f64,
    /// Maximum relative tensor-deflation residual.
    pub tensor_residual_tol: f64,
    /// Maximum condition number of either linear system.
    pub condition_max: f64,
    pub alpha_draws: usize,
    /// Re-draw `α` while `min_i |λ_i| / se(R̂₃)` is below this.
    pub snr_target: f64,
    /// Replace labels by residuals on low-degree polynomials per stage.
    pub control_variates: bool,
    pub max_cv_degree: usize,
    pub gd_step: f64,
    pub gd_shrink: f64,
    pub gd_slope: f64,
    pub gd_max_iterations: usize,
    pub gd_stop: f64,
    /// Loss at or below which exact recovery succeeds.
    pub exact_tol: f64,
    /// Maximum relative Frobenius error against a reference for success.
    pub reference_tol: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            activation: Activation::Relu,
            power_iterations: 50,
            subspace_tol: 1e-14,
            subspace_max_factor: 50,
            tensor_restarts: None,
            tensor_iterations: 100,
            tensor_tol: 1e-10,
            epsilon: 0.1,
            failure_probability: 0.05,
            truncation: None,
            zero_tol: DEFAULT_ZERO_TOL,
            gap_tol: 0.05,
            tensor_residual_tol: 0.5,
            condition_max: 1e6,
            alpha_draws: 5,
            snr_target: 8.0,
            control_variates: true,
            max_cv_degree: 2,
            gd_step: 1.0,
            gd_shrink: 0.5,
            gd_slope: 1e-4,
            gd_max_iterations: 10_000,
            gd_stop: 1e-16,
            exact_tol: 1e-12,
            reference_tol: 0.1,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        self.activation.validate()?;
        let counts = [self.power_iterations, self.tensor_iterations, self.alpha_draws, self.gd_max_iterations];
        if counts.contains(&0) || self.tensor_restarts == Some(0) {
            return Err(Error::InvalidInput("recovery counts must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!("precision {} outside (0, 1)", self.epsilon)));
        }
        if !(self.failure_probability > 0.0 && self.failure_probability < 1.0) {
            return Err(Error::InvalidInput("failure budget outside (0, 1)".into()));
        }
        if !(self.gd_shrink > 0.0 && self.gd_shrink < 1.0 && self.gd_step > 0.0) {
            return Err(Error::InvalidInput("line-search parameters out of range".into()));
        }
        if self.truncation.is_some_and(|b| !(b > 0.0)) {
            return Err(Error::NonPositiveScale(self.truncation.unwrap_or(0.0)));
        }
        Ok(())
    }

    pub fn truncation_for(&self, d: usize) -> f64 {
        self.truncation.unwrap_or_else(|| default_radius(d))
    }

    pub fn subspace_options(&self) -> SubspaceOptions {
        let t = ((1.0 / self.epsilon).ln().ceil() as usize).max(self.power_iterations);
        SubspaceOptions { iterations: t, tol: self.subspace_tol, max_factor: self.subspace_max_factor }
    }

    pub fn tensor_options(&self) -> TensorPowerOptions {
        TensorPowerOptions {
            restarts: self.tensor_restarts,
            iterations: self.tensor_iterations,
            tol: self.tensor_tol,
            ..TensorPowerOptions::default()
        }
    }
}

/// Empirical moments of one recovery attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    pub alpha: DVector<f64>,
    pub p2: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub r3: Tensor3,
    pub q1: DVector<f64>,
    pub q2: DMatrix<f64>,
    pub indices: MomentIndices,
    /// Sample index ranges of `S₁..S₄`.
    pub partition: [std::ops::Range<usize>; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Success,
    Degraded,
    Failed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    pub alpha_draws: usize,
    pub subspace_scores: Vec<f64>,
    pub relative_gap: f64,
    pub subspace_iterations: usize,
    /// `‖(I − VVᵀ)ŵ_i‖ / ‖ŵ_i‖`.
    pub subspace_residuals: Vec<f64>,
    pub tensor_weights: Vec<f64>,
    pub tensor_relative_residual: f64,
    pub tensor_snr: f64,
    pub linear: Option<LinearSolution>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub gd_iterations: usize,
    /// Loss after every accepted step, starting with the initial loss.
    pub loss_history: Vec<f64>,
    pub truncated_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub net: Option<TwoLayerNet>,
    pub status: RecoveryStatus,
    pub reasons: Vec<String>,
    pub diagnostics: RecoveryDiagnostics,
    pub comparison: Option<NetworkMatch>,
}

impl RecoveryReport {
    fn failed(reason: String, diagnostics: RecoveryDiagnostics) -> Self {
        Self { net: None, status: RecoveryStatus::Failed, reasons: vec![reason], diagnostics, comparison: None }
    }

    pub fn is_success(&self) -> bool {
        self.status == RecoveryStatus::Success
    }

    pub fn net(&self) -> Result<&TwoLayerNet> {
        self.net.as_ref().ok_or_else(|| Error::Recovery { level: None, reason: self.reasons.join("; ") })
    }

    fn degrade(&mut self, reason: String) {
        if self.status == RecoveryStatus::Success {
            self.status = RecoveryStatus::Degraded;
        }
        self.reasons.push(reason);
    }

    /// Compare against a reference net; success additionally requires a relative
    /// Frobenius error of at most `tol` and matching signs.
    pub fn check_against(&mut self, reference: &TwoLayerNet, tol: f64) -> Result<()> {
        let Some(net) = &self.net else { return Ok(()) };
        let m = match_networks(net, reference)?;
        if m.relative_frobenius > tol {
            self.degrade(format!("relative error {:.3e} above {tol:.3e}", m.relative_frobenius));
        }
        if !m.signs_match {
            self.degrade("output signs differ from reference".into());
        }
        self.comparison = Some(m);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Attempt {
    net: TwoLayerNet,
    snr: f64,
    moments: MomentSet,
    weights: Vec<f64>,
    tensor_residual: f64,
    linear: LinearSolution,
}

fn cv_degree(config: &RecoveryConfig, order: usize) -> Option<usize> {
    config.control_variates.then(|| (order - 1).min(config.max_cv_degree))
}

/// Moment-based recovery: probe → P̂₂ → subspace → R̂₃ → tensor decomposition → Q̂₁, Q̂₂
/// → linear systems → assembly, on four disjoint sample parts.
pub fn noisy_recover<R: Rng + ?Sized>(
    batch: &SampleBatch,
    k: usize,
    config: &RecoveryConfig,
    rng: &mut R,
) -> Result<RecoveryReport> {
    Ok(noisy_recover_with_moments(batch, k, config, rng)?.0)
}

/// As [`noisy_recover`], also returning the moments of the selected attempt.
pub fn noisy_recover_with_moments<R: Rng + ?Sized>(
    batch: &SampleBatch,
    k: usize,
    config: &RecoveryConfig,
    rng: &mut R,
) -> Result<(RecoveryReport, Option<MomentSet>)> {
    config.validate()?;
    let d = batch.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidInput(format!("width {k} invalid for dimension {d}")));
    }
    if batch.len() < 8 {
        return Err(Error::InsufficientSamples { n: batch.len(), needed: 8 });
    }
    let idx = MomentIndices::select(&config.activation, config.zero_tol)?;
    let parts = batch.partition();
    let labels = |part: usize, order: usize| -> Vec<f64> {
        let r = parts[part].clone();
        let y = &batch.y[r.clone()];
        match cv_degree(config, order) {
            Some(deg) => residualize(batch.features(r.clone()), y, &batch.truncated[r], deg),
            None => y.to_vec(),
        }
    };
    let y1 = labels(0, idx.j2);
    let y2 = labels(1, idx.j3);
    let y3 = labels(2, idx.l1);
    let y4 = labels(3, idx.l2);
    let mut diag = RecoveryDiagnostics { truncated_fraction: batch.truncated_fraction(), ..Default::default() };

    let mut fixed: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut best: Option<Attempt> = None;
    let mut last_error = String::new();
    for draw in 0..config.alpha_draws {
        diag.alpha_draws = draw + 1;
        let (alpha, p2, v) = if idx.j2 == 2 {
            if fixed.is_none() {
                let p2 = estimate_p2(batch.features(parts[0].clone()), &y1, &DVector::zeros(d), &idx)?;
                let sub = estimate_subspace(&p2, k, &config.subspace_options(), rng)?;
                diag.relative_gap = sub.gap / sub.scores[0].max(f64::MIN_POSITIVE);
                diag.subspace_scores = sub.scores;
                diag.subspace_iterations = sub.iterations;
                fixed = Some((p2, sub.v));
            }
            let (p2, v) = fixed.clone().expect("subspace computed");
            let g = gaussian_vector(rng, k);
            let a = &v * g;
            let a = &a / a.norm();
            (a, p2, v)
        } else {
            let a = random_unit(rng, d);
            let p2 = estimate_p2(batch.features(parts[0].clone()), &y1, &a, &idx)?;
            let sub = estimate_subspace(&p2, k, &config.subspace_options(), rng)?;
            diag.relative_gap = sub.gap / sub.scores[0].max(f64::MIN_POSITIVE);
            diag.subspace_scores = sub.scores;
            diag.subspace_iterations = sub.iterations;
            (a, p2, sub.v)
        };
        let attempt = (|| -> Result<Attempt> {
            let r3 = estimate_r3(batch.features(parts[1].clone()), &y2, &alpha, &v, &idx)?;
            let dec = tensor_decompose(&r3.tensor, k, &config.tensor_options(), rng)?;
            let se = r3.standard_error();
            let weights: Vec<f64> = dec.components.iter().map(|c| c.weight).collect();
            let min_w = weights.iter().fold(f64::INFINITY, |m, w| m.min(w.abs()));
            let snr = if se > 0.0 { min_w / se } else { f64::INFINITY };
            let u: Vec<DVector<f64>> = dec.components.iter().map(|c| c.vector.clone()).collect();
            let q1 = estimate_q1(batch.features(parts[2].clone()), &y3, &alpha, &idx)?;
            let q2 = estimate_q2(batch.features(parts[3].clone()), &y4, &alpha, Some(&v), &idx)?;
            let linear = solve_linear_systems(&u, &v, &q1, &q2)?;
            let net = assemble_network(&linear, &u, &v, &alpha, &idx, config.activation)?;
            let moments = MomentSet {
                alpha: alpha.clone(),
                p2: p2.clone(),
                v: v.clone(),
                r3: r3.tensor,
                q1,
                q2,
                indices: idx,
                partition: parts.clone(),
            };
            Ok(Attempt { net, snr, moments, weights, tensor_residual: dec.relative_residual, linear })
        })();
        match attempt {
            Ok(a) => {
                let done = a.snr >= config.snr_target;
                if best.as_ref().is_none_or(|b| a.snr > b.snr) {
                    best = Some(a);
                }
                if done {
                    break;
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    let Some(best) = best else {
        return Ok((RecoveryReport::failed(last_error, diag), None));
    };
    let net = best.net.canonicalized();
    let v = &best.moments.v;
    diag.subspace_residuals = (0..net.width())
        .map(|i| {
            let w = net.row(i);
            (&w - v * (v.transpose() * &w)).norm() / w.norm().max(f64::MIN_POSITIVE)
        })
        .collect();
    diag.tensor_weights = best.weights;
    diag.tensor_relative_residual = best.tensor_residual;
    diag.tensor_snr = best.snr;
    let mut report = RecoveryReport {
        net: Some(net),
        status: RecoveryStatus::Success,
        reasons: Vec::new(),
        diagnostics: diag,
        comparison: None,
    };
    if report.diagnostics.relative_gap < config.gap_tol {
        report.degrade(format!("spectral gap {:.3e} below {:.3e}", report.diagnostics.relative_gap, config.gap_tol));
    }
    if best.tensor_residual > config.tensor_residual_tol {
        report
            .degrade(format!("tensor residual {:.3e} above {:.3e}", best.tensor_residual, config.tensor_residual_tol));
    }
    if best.linear.z_condition > config.condition_max || best.linear.r_condition > config.condition_max {
        report.degrade("ill-conditioned linear system".into());
    }
    report.diagnostics.linear = Some(best.linear);
    Ok((report, Some(best.moments)))
}

/// Result of [`refine`].
#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub net: TwoLayerNet,
    pub loss: f64,
    pub iterations: usize,
    pub loss_history: Vec<f64>,
    pub stalled: bool,
}

/// Gradient descent on `L_n` with backtracking Armijo line search; every accepted
/// step strictly decreases the loss.
pub fn refine(init: &TwoLayerNet, batch: &SampleBatch, config: &RecoveryConfig) -> Result<Refinement> {
    let mut net = init.clone();
    let (mut loss, mut grad) = empirical_loss_and_gradient(&net, batch)?;
    let mut history = vec![loss];
    let mut iterations = 0;
    let mut stalled = false;
    while loss > config.gd_stop && iterations < config.gd_max_iterations {
        let g2 = grad.norm_squared();
        if g2 == 0.0 {
            stalled = true;
            break;
        }
        let mut step = config.gd_step;
        let accepted = loop {
            let cand = TwoLayerNet { v: net.v.clone(), w: &net.w - &grad * step, activation: net.activation };
            let (l, g) = empirical_loss_and_gradient(&cand, batch)?;
            if l <= loss - config.gd_slope * step * g2 && l < loss {
                break Some((cand, l, g));
            }
            step *= config.gd_shrink;
            if step < 1e-20 {
                break None;
            }
        };
        match accepted {
            Some((cand, l, g)) => {
                net = cand;
                loss = l;
                grad = g;
                history.push(loss);
                iterations += 1;
            }
            None => {
                stalled = true;
                break;
            }
        }
    }
    Ok(Refinement { net, loss, iterations, loss_history: history, stalled })
}

/// Moment initialization followed by [`refine`] on the raw labels. Fails when the final
/// loss exceeds `config.exact_tol`; otherwise keeps the status of the moment stage.
pub fn exact_recover<R: Rng + ?Sized>(
    batch: &SampleBatch,
    k: usize,
    config: &RecoveryConfig,
    rng: &mut R,
) -> Result<RecoveryReport> {
    let mut report = noisy_recover(batch, k, config, rng)?;
    let Some(init) = report.net.clone() else { return Ok(report) };
    let fit = refine(&init, batch, config)?;
    let d = &mut report.diagnostics;
    d.initial_loss = fit.loss_history.first().copied();
    d.final_loss = Some(fit.loss);
    d.gd_iterations = fit.iterations;
    d.loss_history = fit.loss_history;
    report.net = Some(fit.net.canonicalized());
    if fit.loss > config.exact_tol {
        report.status = RecoveryStatus::Failed;
        report.reasons.push(format!(
            "loss plateau {:.3e} above {:.3e} after {} steps",
            fit.loss, config.exact_tol, fit.iterations
        ));
    }
    Ok(report)
}
