//! Dispatch of one manifest to its pipeline.
//!
//! Every stage draws from its own stream `stream(seed, stage, index)`; the stage keys are
//! `instance`, `samples`, `learner`, `recovery` and `evaluation`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use nnrl_core::linalg::{gaussian_matrix, orthonormalize, random_unit};
use nnrl_core::mdp::{exact_dp_solve, policy_values, Mdp, Policy, DEFAULT_DP_CAP};
use nnrl_core::moments::{
    default_radius, estimate_p2, estimate_q1, estimate_q2, estimate_r3, reference_moments, Activation, MomentIndices,
    NoiseModel, SampleBatch, DEFAULT_ZERO_TOL,
};
use nnrl_core::poly::{
    dp_generative, dp_online, run_separation, FitOptions, HardInstance, PolyPlantedMdp, PolyPlantedSpec,
    SeparationOptions, GOOD,
};
use nnrl_core::recovery::{exact_recover, match_networks, noisy_recover, RecoveryConfig, TwoLayerNet};
use nnrl_core::rl::{
    learn_bellman_complete, learn_deterministic, learn_policy_complete, learn_with_gap, probe_features, probed_q_error,
    suboptimality_by_level, telescoping_bounds, LearnedValueStack, NeuralRlConfig, PlantedFamily, PlantedNetMdp,
    PlantedNetSpec,
};
use nnrl_core::rng::stream;
use nnrl_core::Error;

use crate::manifest::{ActivationName, Kind, Manifest, Resolved};
use crate::record::{ResultRecord, StageError};

const PROBES: usize = 10_000;
const HARD_MIXTURES: usize = 16;

type Metrics = BTreeMap<String, f64>;

fn activation(name: ActivationName) -> Activation {
    match name {
        ActivationName::Relu => Activation::Relu,
        ActivationName::SquaredRelu => Activation::SquaredRelu,
        ActivationName::Cubic => Activation::Power { degree: 3 },
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |e| {
        let level = match &e {
            Error::Recovery { level, .. } => *level,
            Error::NoSolution { level }
            | Error::InvalidAction { level, .. }
            | Error::InvalidState { level, .. }
            | Error::EmptyActionSet { level, .. }
            | Error::PreimageUnavailable { level }
            | Error::InvalidLevel { level, .. } => Some(*level),
            _ => None,
        };
        StageError { stage: stage.into(), level, message: e.to_string() }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Runs a validated manifest; pipeline failures land in the record.
pub fn run(manifest: &Manifest, resolved: &Resolved) -> ResultRecord {
    let start = Instant::now();
    let mut metrics = Metrics::new();
    let outcome = dispatch(manifest.kind, manifest.seed, resolved, &mut metrics);
    let runtime_ms = start.elapsed().as_millis() as u64;
    ResultRecord::assemble(manifest.clone(), metrics, &resolved.thresholds, outcome.err(), runtime_ms)
}

fn dispatch(kind: Kind, seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    match kind {
        Kind::MomentCheck => moment_check(seed, r, m),
        Kind::RecoverNoisy | Kind::RecoverExact => recover(kind, seed, r, m),
        Kind::RlDet | Kind::RlPolicy | Kind::RlBellman | Kind::RlGap => neural_rl(kind, seed, r, m),
        Kind::PolyGenerative | Kind::PolyOnline => poly_dp(kind, seed, r, m),
        Kind::HardSeparation => hard_separation(seed, r, m),
    }
}

fn planted_net(seed: u64, r: &Resolved) -> Result<TwoLayerNet, StageError> {
    let mut rng = stream(seed, "instance", 0);
    TwoLayerNet::planted_orthogonal(r.d, &vec![1.0; r.k], &vec![1.0; r.k], activation(r.activation), &mut rng)
        .map_err(at("instance"))
}

fn noise(r: &Resolved) -> NoiseModel {
    if r.noise > 0.0 {
        NoiseModel::Gaussian { theta: r.noise }
    } else {
        NoiseModel::Noiseless
    }
}

fn moment_check(seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    let net = planted_net(seed, r)?;
    let act = activation(r.activation);
    let idx = MomentIndices::select(&act, DEFAULT_ZERO_TOL).map_err(at("instance"))?;
    let mut worst = [0.0f64; 4];
    for b in 0..r.batches as u64 {
        let mut rng = stream(seed, "samples", b);
        let batch = SampleBatch::generate(r.d, r.n, default_radius(r.d), noise(r), &mut rng, |x| net.eval_view(x));
        let mut rng = stream(seed, "recovery", b);
        let alpha = random_unit(&mut rng, r.d);
        let v = orthonormalize(&gaussian_matrix(&mut rng, r.d, r.k));
        let (x, y) = (batch.x.as_view(), &batch.y);
        let reference = reference_moments(x, y, &alpha, &v, &idx).map_err(at("reference"))?;
        let est = at("estimators");
        let p2 = estimate_p2(x, y, &alpha, &idx).map_err(&est)?;
        let q1 = estimate_q1(x, y, &alpha, &idx).map_err(&est)?;
        let q2 = estimate_q2(x, y, &alpha, Some(&v), &idx).map_err(&est)?;
        let r3 = estimate_r3(x, y, &alpha, &v, &idx).map_err(&est)?;
        let diffs = [
            (p2 - &reference.p2).amax(),
            (q1 - &reference.q1).amax(),
            (q2 - &reference.q2).amax(),
            r3.tensor.sub(&reference.r3).max_abs(),
        ];
        for (w, dlt) in worst.iter_mut().zip(diffs) {
            *w = w.max(dlt);
        }
    }
    for (name, v) in ["p2_diff", "q1_diff", "q2_diff", "r3_diff"].iter().zip(worst) {
        m.insert((*name).into(), v);
    }
    m.insert("max_abs_diff".into(), worst.iter().copied().fold(0.0, f64::max));
    Ok(())
}

fn recover(kind: Kind, seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    let net = planted_net(seed, r)?;
    let mut rng = stream(seed, "samples", 0);
    let batch = SampleBatch::generate(r.d, r.n, default_radius(r.d), noise(r), &mut rng, |x| net.eval_view(x));
    let cfg = RecoveryConfig { activation: activation(r.activation), ..Default::default() };
    let mut rng = stream(seed, "recovery", 0);
    let report = if kind == Kind::RecoverExact {
        exact_recover(&batch, r.k, &cfg, &mut rng)
    } else {
        noisy_recover(&batch, r.k, &cfg, &mut rng)
    }
    .map_err(at("recovery"))?;
    let history = &report.diagnostics.loss_history;
    m.insert("loss_monotone".into(), flag(history.windows(2).all(|w| w[1] <= w[0])));
    m.insert("refinement_steps".into(), history.len() as f64);
    let found = report.net().map_err(at("recovery"))?;
    let cmp = match_networks(found, &net).map_err(at("evaluation"))?;
    m.insert("max_row_error".into(), cmp.max_row_error);
    m.insert("frobenius_error".into(), cmp.frobenius_error);
    m.insert("relative_frobenius".into(), cmp.relative_frobenius);
    m.insert("signs_exact".into(), flag(cmp.signs_match));
    Ok(())
}

fn suboptimality(mdp: &dyn Mdp, policy: &Policy) -> Result<Vec<f64>, StageError> {
    suboptimality_by_level(mdp, policy).map_err(at("evaluation"))
}

fn neural_rl(kind: Kind, seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    let family = match kind {
        Kind::RlPolicy => PlantedFamily::PlantedReward { deterministic: false },
        Kind::RlBellman => PlantedFamily::PlantedReward { deterministic: true },
        _ => PlantedFamily::PlantedQ,
    };
    let spec = PlantedNetSpec {
        family,
        horizon: r.horizon,
        num_states: r.states,
        dim: r.d,
        width: r.k,
        candidates: r.candidates,
        activation: activation(r.activation),
        min_gap: (kind == Kind::RlGap).then_some(r.rho),
        ..Default::default()
    };
    let mut mdp = PlantedNetMdp::generate(&spec, &mut stream(seed, "instance", 0)).map_err(at("instance"))?;
    if r.rank_deficient {
        let h = r.horizon;
        let row = mdp.net(h).row(0);
        let w = DMatrix::from_fn(r.k, r.d, |_, j| row[j]);
        let net = TwoLayerNet::new(vec![1.0; r.k], w, spec.activation).map_err(at("instance"))?;
        mdp = mdp.with_net(h, net).map_err(at("instance"))?;
    }
    let cfg = NeuralRlConfig {
        n: r.n,
        width: r.k,
        epsilon: r.epsilon,
        rho: Some(r.rho),
        recovery: RecoveryConfig { activation: spec.activation, ..Default::default() },
        ..Default::default()
    };
    let mut rng = stream(seed, "learner", 0);
    let learn: fn(&dyn Mdp, &NeuralRlConfig, &mut nnrl_core::rng::Rng) -> nnrl_core::Result<LearnedValueStack> =
        match kind {
            Kind::RlDet => learn_deterministic,
            Kind::RlPolicy => learn_policy_complete,
            Kind::RlBellman => learn_bellman_complete,
            _ => learn_with_gap,
        };
    let st = learn(&mdp, &cfg, &mut rng).map_err(at("learner"))?;
    for (h, q) in st.queries.iter().enumerate() {
        m.insert(format!("queries_h{}", h + 1), *q as f64);
    }
    m.insert("queries".into(), st.queries.iter().sum::<u64>() as f64);
    let subs = suboptimality(&mdp, &st.policy)?;
    m.insert("suboptimality".into(), subs.iter().copied().fold(0.0, f64::max));
    let s0 = mdp.initial_state();
    let sol = exact_dp_solve(&mdp, DEFAULT_DP_CAP).map_err(at("evaluation"))?;
    let pv = policy_values(&mdp, &st.policy, DEFAULT_DP_CAP).map_err(at("evaluation"))?;
    m.insert("value_gap".into(), (sol.v[0][s0] - pv.v[0][s0]).abs());
    if matches!(kind, Kind::RlPolicy | Kind::RlBellman) {
        let probes = probe_features(r.d, PROBES, st.radius, &mut stream(seed, "evaluation", 0));
        let targets = if kind == Kind::RlPolicy { &pv.v } else { &sol.v };
        let zeros = vec![0.0; r.states];
        let mut errors = Vec::with_capacity(r.horizon);
        for h in 1..=r.horizon {
            let next = if h < r.horizon { &targets[h] } else { &zeros };
            let e = probed_q_error(&mdp, h, |x| st.level(h).q_feature(x), next, &probes).map_err(at("evaluation"))?;
            m.insert(format!("level{h}_error"), e);
            errors.push(e);
        }
        let bounds = telescoping_bounds(&errors, r.epsilon);
        m.insert("telescoping".into(), flag(subs.iter().zip(&bounds).all(|(s, b)| s <= b)));
    }
    Ok(())
}

fn poly_dp(kind: Kind, seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    let spec = PolyPlantedSpec {
        dim: r.d,
        horizon: r.horizon,
        num_states: r.states,
        candidates: r.candidates,
        degrees: vec![r.p as u32; r.k],
        ..Default::default()
    };
    let mdp = PolyPlantedMdp::generate(&spec, &mut stream(seed, "instance", 0)).map_err(at("instance"))?;
    let budget = (2 * spec.family_spec().algebraic_dimension() * r.horizon) as f64;
    m.insert("budget".into(), budget);
    let mut rng = stream(seed, "learner", 0);
    let opts = FitOptions::default();
    let report = if kind == Kind::PolyGenerative {
        dp_generative(&mdp, &spec.family_specs(), &opts, &mut rng)
    } else {
        dp_online(&mdp, &spec.family_specs(), &opts, &mut rng)
    }
    .map_err(at("learner"))?;
    let queries = report.total_queries() as f64;
    let episodes = report.episodes as f64;
    m.insert("queries".into(), queries);
    m.insert("episodes".into(), episodes);
    m.insert("query_excess".into(), queries - budget);
    m.insert("episode_excess".into(), episodes - budget);
    m.insert("max_fit_residual".into(), report.fits.iter().map(|f| f.max_residual).fold(0.0, f64::max));
    m.insert("ambiguous_fits".into(), report.fits.iter().filter(|f| f.ambiguous).count() as f64);
    let subs = suboptimality(&mdp, &report.policy)?;
    m.insert("suboptimality".into(), subs.iter().copied().fold(0.0, f64::max));
    Ok(())
}

fn hard_separation(seed: u64, r: &Resolved, m: &mut Metrics) -> Result<(), StageError> {
    let mut rng = stream(seed, "instance", 0);
    let mdp = HardInstance::random(r.d, r.p, r.horizon, HARD_MIXTURES, &mut rng).map_err(at("instance"))?;
    let props = mdp.check_construction(200, &mut stream(seed, "evaluation", 0)).map_err(at("evaluation"))?;
    let report =
        run_separation(&mdp, &SeparationOptions::default(), &mut stream(seed, "learner", 0)).map_err(at("learner"))?;
    let lambda = report.index_count as f64;
    let two_d = 2.0 * report.algebraic_dimension as f64;
    let online: Vec<f64> = report.levels.iter().filter_map(|l| l.online.as_ref()).map(|s| s.worst as f64).collect();
    let generative = report.levels.iter().map(|l| l.generative_queries as f64).fold(0.0, f64::max);
    m.insert("index_count".into(), lambda);
    m.insert("algebraic_dimension".into(), report.algebraic_dimension as f64);
    m.insert("online_worst".into(), online.iter().copied().fold(0.0, f64::max));
    m.insert("online_worst_excess".into(), online.iter().map(|w| (w - (lambda - 1.0)).abs()).fold(0.0, f64::max));
    m.insert("online_mean".into(), {
        let means: Vec<f64> = report.levels.iter().filter_map(|l| l.online.as_ref()).map(|s| s.mean).collect();
        if means.is_empty() {
            0.0
        } else {
            means.iter().sum::<f64>() / means.len() as f64
        }
    });
    m.insert("generative_queries".into(), generative);
    m.insert("generative_excess".into(), generative - two_d);
    m.insert("generative_suboptimality".into(), report.generative_suboptimality);
    m.insert("identified".into(), flag(report.all_identified()));
    m.insert("delta_sum_error".into(), props.delta_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max));
    let v1 = props.optimal_values[0][GOOD];
    m.insert("v_star_1".into(), v1);
    m.insert("value_error".into(), (v1 - r.horizon as f64).abs());
    Ok(())
}
