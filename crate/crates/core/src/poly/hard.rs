use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::dp::{dp_generative, PolyMdp, Realization};
use super::family::FamilySpec;
use super::fit::FitOptions;
use super::measure::PositiveMeasureSet;
use crate::error::{Error, Result};
use crate::mdp::{
    exact_dp_solve, policy_values, AccessMode, Action, Mdp, Outcome, SimulatorAccess, StateId, DEFAULT_DP_CAP,
};

pub const GOOD: StateId = 0;
pub const BAD: StateId = 1;
/// Largest index set the constructor will enumerate.
pub const INDEX_CAP: u128 = 10_000;
/// Slack for membership in `F = conv(F₀)`.
pub const HULL_TOL: f64 = 1e-9;

/// `C(n, k)` in exact integer arithmetic.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `|Λ| = C(d+p−1, p)`.
pub fn index_count(d: usize, p: usize) -> u128 {
    if d == 0 {
        return 0;
    }
    binomial((d + p - 1) as u64, p as u64)
}

/// Nondecreasing `p`-tuples over `0..d` in lexicographic order.
pub fn index_set(d: usize, p: usize) -> Result<Vec<Vec<usize>>> {
    let count = index_count(d, p);
    if count > INDEX_CAP {
        return Err(Error::SizeCap(format!("index set of size {count} exceeds {INDEX_CAP}")));
    }
    fn rec(d: usize, p: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == p {
            out.push(prefix.clone());
            return;
        }
        let start = prefix.last().copied().unwrap_or(0);
        for i in start..d {
            prefix.push(i);
            rec(d, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(count as usize);
    rec(d, p, &mut Vec::with_capacity(p), &mut out);
    Ok(out)
}

/// `x_α = Σ_i e_{α_i}`.
pub fn index_point(alpha: &[usize], d: usize) -> DVector<f64> {
    let mut x = DVector::zeros(d);
    for &i in alpha {
        x[i] += 1.0;
    }
    x
}

/// `Π_i x_{α_i}`.
pub fn monomial_reward(alpha: &[usize], x: &DVector<f64>) -> f64 {
    alpha.iter().map(|&i| x[i]).product()
}

/// Two-state instance with `Q*` in the `q(Ux)` family but an online-invisible optimum.
///
/// Actions are points of `F = conv(F₀)`. The good state sees the action itself; the bad
/// state sees its nearest point of `F₀`. Every transition goes to the bad state, and the
/// level-`h` reward is `Π_i φ_{α_i^{(h)}}`. Planted tuples must have distinct indices:
/// with a repeated index the rewards on `F₀` are no longer a delta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    d: usize,
    p: usize,
    planted: Vec<Vec<usize>>,
    lambda: Vec<Vec<usize>>,
    f0: Vec<DVector<f64>>,
    /// `F₀` followed by sampled mixtures.
    actions: Vec<Action>,
}

/// Outcome of checking the construction's reward and value properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionCheck {
    /// `r(M_α, x_{α'}) = 1{α = α'}` for every level and every `α' ∈ Λ`.
    pub delta_exact: bool,
    /// `Σ_{α'} r(M_α, x_{α'})` per level.
    pub delta_sums: Vec<f64>,
    /// Largest reward over candidates and sampled mixtures.
    pub max_reward: f64,
    /// Largest `|r(cx) − c^p r(x)|` over sampled `c ∈ [0,1]`, `x ∈ F`.
    pub homogeneity_error: f64,
    /// `V*_h` of both states, index `h-1`.
    pub optimal_values: Vec<[f64; 2]>,
}

impl HardInstance {
    pub fn new<R: Rng + ?Sized>(
        d: usize,
        p: usize,
        planted: Vec<Vec<usize>>,
        mixtures: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if p == 0 || p > d {
            return Err(Error::InvalidInput(format!("need 1 ≤ p ≤ d, got p = {p}, d = {d}")));
        }
        if planted.is_empty() {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        for alpha in &planted {
            if alpha.len() != p || alpha.iter().any(|&i| i >= d) || alpha.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "invalid index tuple {alpha:?}: need {p} strictly increasing indices below {d}"
                )));
            }
        }
        let lambda = index_set(d, p)?;
        let f0: Vec<DVector<f64>> = lambda.iter().map(|a| index_point(a, d)).collect();
        let mut actions = f0.clone();
        for _ in 0..mixtures {
            let w: Vec<f64> = (0..f0.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = w.iter().sum();
            let mut x = DVector::zeros(d);
            for (wi, xi) in w.iter().zip(&f0) {
                x += xi * (wi / total);
            }
            actions.push(x);
        }
        Ok(Self { d, p, planted, lambda, f0, actions })
    }

    /// Planted tuples drawn uniformly among strictly increasing ones.
    pub fn random<R: Rng + ?Sized>(d: usize, p: usize, horizon: usize, mixtures: usize, rng: &mut R) -> Result<Self> {
        if p == 0 || p > d {
            return Err(Error::InvalidInput(format!("need 1 ≤ p ≤ d, got p = {p}, d = {d}")));
        }
        let distinct: Vec<Vec<usize>> =
            index_set(d, p)?.into_iter().filter(|a| a.windows(2).all(|w| w[0] < w[1])).collect();
        let planted = (0..horizon).map(|_| distinct[rng.random_range(0..distinct.len())].clone()).collect();
        Self::new(d, p, planted, mixtures, rng)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn planted(&self, h: usize) -> &[usize] {
        &self.planted[h - 1]
    }

    /// `Λ` in lexicographic order; `F₀` uses the same order.
    pub fn index_set(&self) -> &[Vec<usize>] {
        &self.lambda
    }

    pub fn f0(&self) -> &[DVector<f64>] {
        &self.f0
    }

    /// `r(M_{α^{(h)}}, x)`.
    pub fn reward_at(&self, h: usize, x: &DVector<f64>) -> f64 {
        monomial_reward(&self.planted[h - 1], x)
    }

    pub fn in_hull(&self, x: &DVector<f64>) -> bool {
        x.len() == self.d
            && x.iter().all(|v| *v >= -HULL_TOL)
            && (x.sum() - self.p as f64).abs() <= HULL_TOL * self.p as f64
    }

    /// Index of the nearest `F₀` point; ties go to the lower index.
    pub fn restrict(&self, x: &DVector<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, y) in self.f0.iter().enumerate() {
            let dist = (x - y).norm_squared();
            if dist < best.1 {
                best = (i, dist);
            }
        }
        best.0
    }

    pub fn check_construction<R: Rng + ?Sized>(&self, probes: usize, rng: &mut R) -> Result<ConstructionCheck> {
        let mut delta_exact = true;
        let mut delta_sums = Vec::with_capacity(self.planted.len());
        let mut max_reward = f64::NEG_INFINITY;
        for (h, alpha) in self.planted.iter().enumerate() {
            let mut sum = 0.0;
            for (other, x) in self.lambda.iter().zip(&self.f0) {
                let r = monomial_reward(alpha, x);
                delta_exact &= r == if other == alpha { 1.0 } else { 0.0 };
                sum += r;
            }
            delta_sums.push(sum);
            for a in &self.actions {
                max_reward = max_reward.max(self.reward_at(h + 1, a));
            }
        }
        let mut homogeneity_error: f64 = 0.0;
        for _ in 0..probes {
            let a = &self.actions[rng.random_range(0..self.actions.len())];
            let c: f64 = rng.random();
            let h = rng.random_range(1..=self.planted.len());
            let scaled = self.reward_at(h, &(a * c));
            homogeneity_error = homogeneity_error.max((scaled - c.powi(self.p as i32) * self.reward_at(h, a)).abs());
        }
        let sol = exact_dp_solve(self, DEFAULT_DP_CAP)?;
        let optimal_values = sol.v.iter().map(|v| [v[GOOD], v[BAD]]).collect();
        Ok(ConstructionCheck { delta_exact, delta_sums, max_reward, homogeneity_error, optimal_values })
    }
}

impl Mdp for HardInstance {
    fn horizon(&self) -> usize {
        self.planted.len()
    }

    fn num_states(&self) -> usize {
        2
    }

    fn initial_state(&self) -> StateId {
        GOOD
    }

    fn feature_dim(&self) -> usize {
        self.d
    }

    fn feature_bound(&self) -> f64 {
        self.p as f64
    }

    fn candidates(&self, h: usize, s: StateId) -> Result<&[Action]> {
        self.check_state(h, s)?;
        Ok(&self.actions)
    }

    fn feature(&self, h: usize, s: StateId, a: &Action) -> Result<DVector<f64>> {
        self.check_state(h, s)?;
        if !self.in_hull(a) {
            return Err(Error::InvalidAction { level: h, state: s });
        }
        Ok(if s == GOOD { a.clone() } else { self.f0[self.restrict(a)].clone() })
    }

    fn outcomes(&self, h: usize, s: StateId, a: &Action) -> Result<Vec<Outcome>> {
        let x = self.feature(h, s, a)?;
        Ok(vec![Outcome { next_state: BAD, prob: 1.0, reward: self.reward_at(h, &x) }])
    }

    fn preimages(&self, h: usize, x: &DVector<f64>) -> Result<Vec<(StateId, Action)>> {
        self.check_level(h)?;
        let mut out = Vec::new();
        if self.in_hull(x) {
            out.push((GOOD, x.clone()));
        }
        if self.f0.iter().any(|y| y == x) {
            out.push((BAD, x.clone()));
        }
        Ok(out)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl PolyMdp for HardInstance {
    /// `conv(F ∪ {0})`, reached through the good state and the `c^p` rule.
    fn sampling_set(&self, _h: usize) -> PositiveMeasureSet {
        PositiveMeasureSet::Simplex { scale: self.p as f64 }
    }

    fn state_action_set(&self, _h: usize, s: StateId) -> PositiveMeasureSet {
        if s == GOOD {
            PositiveMeasureSet::Hyperplane { normal: DVector::from_element(self.d, 1.0), offset: self.p as f64 }
        } else {
            PositiveMeasureSet::Finite { points: self.f0.clone() }
        }
    }

    /// `x = c·a` with `a ∈ F` and `c = Σx / p`; the reward at `a` is scaled by `c^p`.
    fn realize(&self, h: usize, x: &DVector<f64>, _rng: &mut dyn RngCore) -> Result<Realization> {
        self.check_level(h)?;
        if !self.sampling_set(h).contains(x) {
            return Err(Error::InvalidInput("point outside conv(F ∪ {0})".into()));
        }
        let c = x.sum() / self.p as f64;
        if !(c > 0.0) {
            return Err(Error::InvalidInput("cannot realize the origin".into()));
        }
        Ok(Realization { state: GOOD, action: x / c, reward_scale: c.powi(self.p as i32) })
    }

    fn realize_in_state(&self, h: usize, s: StateId, x: &DVector<f64>) -> Result<Action> {
        self.check_state(h, s)?;
        let ok = if s == GOOD { self.in_hull(x) } else { self.f0.iter().any(|y| y == x) };
        if !ok {
            return Err(Error::InvalidAction { level: h, state: s });
        }
        Ok(x.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationOptions {
    /// Random mixtures added to `F₀` as planning candidates.
    pub mixtures: usize,
    /// Random probe orders averaged for the online mean.
    pub random_orders: usize,
    pub fit: FitOptions,
}

impl Default for SeparationOptions {
    fn default() -> Self {
        Self { mixtures: 16, random_orders: 20, fit: FitOptions::default() }
    }
}

/// Probe counts of the online identifier over orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeStats {
    pub worst: usize,
    pub best: usize,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationLevel {
    pub level: usize,
    pub planted: Vec<usize>,
    /// `None` at level 1, where the good state is reachable online.
    pub online: Option<ProbeStats>,
    pub generative_queries: u64,
    /// Argmax of the fitted `Q̂_h` over `F₀`.
    pub identified: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub d: usize,
    pub p: usize,
    pub horizon: usize,
    pub index_count: usize,
    /// `D` of the `q(Ux)` family used by the generative learner.
    pub algebraic_dimension: usize,
    pub levels: Vec<SeparationLevel>,
    /// `max_{h,s} V*_h(s) − V^π_h(s)` of the generative policy.
    pub generative_suboptimality: f64,
}

impl SeparationReport {
    pub fn all_identified(&self) -> bool {
        self.levels.iter().all(|l| l.identified == l.planted)
    }

    /// Plain-text table: level, online worst/mean/best probes, generative queries.
    pub fn table(&self) -> String {
        let mut out = String::from("level  online_worst  online_mean  online_best  generative_queries  identified\n");
        for l in &self.levels {
            let (w, m, b) = match &l.online {
                Some(s) => (s.worst.to_string(), format!("{:.2}", s.mean), s.best.to_string()),
                None => ("-".into(), "-".into(), "-".into()),
            };
            out.push_str(&format!(
                "{:>5}  {:>12}  {:>11}  {:>11}  {:>18}  {}\n",
                l.level,
                w,
                m,
                b,
                l.generative_queries,
                l.identified == l.planted
            ));
        }
        out
    }
}

/// Online episodes probing `F₀` at level `h` in `order` until a unit reward is seen or a
/// single candidate remains; returns the number of probes.
pub fn online_probes<R: Rng>(mdp: &HardInstance, h: usize, order: &[usize], rng: &mut R) -> Result<usize> {
    mdp.check_level(h)?;
    let access = SimulatorAccess::new(mdp, AccessMode::Online);
    let mut probes = 0;
    for &idx in order {
        if probes + 1 == order.len() {
            break;
        }
        let traj = access.episode(
            |t, _s, _r: &mut R| {
                let i = if t == h { idx } else { 0 };
                Ok((mdp.actions[i].clone(), Some(i)))
            },
            rng,
        )?;
        probes += 1;
        if traj.steps[h - 1].reward == 1.0 {
            break;
        }
    }
    Ok(probes)
}

/// Online probe counts against generative identification on a random hard instance.
pub fn separation_experiment<R: Rng>(
    d: usize,
    p: usize,
    horizon: usize,
    opts: &SeparationOptions,
    rng: &mut R,
) -> Result<SeparationReport> {
    let mdp = HardInstance::random(d, p, horizon, opts.mixtures, rng)?;
    run_separation(&mdp, opts, rng)
}

/// [`separation_experiment`] on a given instance.
pub fn run_separation<R: Rng>(mdp: &HardInstance, opts: &SeparationOptions, rng: &mut R) -> Result<SeparationReport> {
    let horizon = mdp.horizon();
    let m = mdp.lambda.len();
    let spec = FamilySpec::QOfUx { dim: mdp.d, rank: mdp.p, degree: mdp.p as u32 };
    let report = dp_generative(mdp, &vec![spec.clone(); horizon], &opts.fit, rng)?;
    let mut levels = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let planted_idx = mdp.lambda.iter().position(|a| a == mdp.planted(h)).expect("planted tuple in Λ");
        let online = if h == 1 {
            None
        } else {
            let mut worst_order: Vec<usize> = (0..m).filter(|&i| i != planted_idx).collect();
            worst_order.push(planted_idx);
            let mut best_order = vec![planted_idx];
            best_order.extend((0..m).filter(|&i| i != planted_idx));
            let worst = online_probes(mdp, h, &worst_order, rng)?;
            let best = online_probes(mdp, h, &best_order, rng)?;
            let mut total = 0;
            for _ in 0..opts.random_orders {
                let mut order: Vec<usize> = (0..m).collect();
                order.shuffle(rng);
                total += online_probes(mdp, h, &order, rng)?;
            }
            let mean = if opts.random_orders > 0 { total as f64 / opts.random_orders as f64 } else { f64::NAN };
            Some(ProbeStats { worst, best, mean })
        };
        let q = report.q_hat(h);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, x) in mdp.f0.iter().enumerate() {
            let v = q.eval(x)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        levels.push(SeparationLevel {
            level: h,
            planted: mdp.planted(h).to_vec(),
            online,
            generative_queries: report.queries[h - 1],
            identified: mdp.lambda[best.0].clone(),
        });
    }
    let sol = exact_dp_solve(mdp, DEFAULT_DP_CAP)?;
    let pv = policy_values(mdp, &report.policy, DEFAULT_DP_CAP)?;
    let mut gap: f64 = 0.0;
    for (vs, ps) in sol.v.iter().zip(&pv.v) {
        for (a, b) in vs.iter().zip(ps) {
            gap = gap.max(a - b);
        }
    }
    Ok(SeparationReport {
        d: mdp.d,
        p: mdp.p,
        horizon,
        index_count: m,
        algebraic_dimension: spec.algebraic_dimension(),
        levels,
        generative_suboptimality: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn delta_rewards_on_basis_pairs() {
        let mut rng = stream(31, "t", 0);
        let mdp = HardInstance::new(4, 2, vec![vec![0, 1]], 0, &mut rng).unwrap();
        assert_eq!(mdp.reward_at(1, &dv(&[1.0, 1.0, 0.0, 0.0])), 1.0);
        assert_eq!(mdp.reward_at(1, &dv(&[1.0, 0.0, 1.0, 0.0])), 0.0);
    }

    #[test]
    fn index_set_counts_with_repetition() {
        assert_eq!(index_set(4, 2).unwrap().len(), 10);
        assert_eq!(index_count(4, 2), 10);
        assert_eq!(binomial(10, 3), 120);
        assert!(matches!(index_set(60, 4), Err(Error::SizeCap(_))));
    }

    #[test]
    fn repeated_planted_index_rejected() {
        let mut rng = stream(32, "t", 0);
        assert!(HardInstance::new(4, 2, vec![vec![1, 1]], 0, &mut rng).is_err());
        assert!(HardInstance::new(4, 2, vec![vec![2, 1]], 0, &mut rng).is_err());
        assert!(HardInstance::new(4, 2, vec![vec![0, 4]], 0, &mut rng).is_err());
    }

    #[test]
    fn restriction_is_identity_on_f0() {
        let mut rng = stream(33, "t", 0);
        let mdp = HardInstance::random(4, 2, 2, 4, &mut rng).unwrap();
        for (i, x) in mdp.f0().iter().enumerate() {
            assert_eq!(mdp.restrict(x), i);
        }
    }

    #[test]
    fn online_worst_and_best() {
        let mut rng = stream(34, "t", 0);
        let mdp = HardInstance::new(4, 2, vec![vec![0, 1], vec![2, 3]], 0, &mut rng).unwrap();
        let planted = mdp.index_set().iter().position(|a| a == &vec![2, 3]).unwrap();
        let mut order: Vec<usize> = (0..10).filter(|&i| i != planted).collect();
        order.push(planted);
        assert_eq!(online_probes(&mdp, 2, &order, &mut rng).unwrap(), 9);
        order.rotate_right(1);
        assert_eq!(online_probes(&mdp, 2, &order, &mut rng).unwrap(), 1);
    }
}
