use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::dp::{PolyMdp, Realization};
use super::family::{FamilySpec, PolynomialFamily, RankTerm};
use super::measure::PositiveMeasureSet;
use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, random_unit};
use crate::mdp::{Action, Mdp, Outcome, StateId};
use crate::moments::default_radius;

/// Generator parameters for [`PolyPlantedMdp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolyPlantedSpec {
    pub dim: usize,
    pub horizon: usize,
    pub num_states: usize,
    /// Planning candidates per `(h, s)`.
    pub candidates: usize,
    /// Degrees of the planted rank-k terms at every level.
    pub degrees: Vec<u32>,
    /// Scale of the per-state feature offsets `b_{h,s}`.
    pub offset_scale: f64,
    /// Feature region radius; `None` means `max(10√d, d)`.
    pub radius: Option<f64>,
    /// Redraw until every `(h, s)` has a top-two candidate gap at least this large.
    pub min_gap: f64,
    pub max_tries: usize,
}

impl Default for PolyPlantedSpec {
    fn default() -> Self {
        Self {
            dim: 3,
            horizon: 2,
            num_states: 2,
            candidates: 8,
            degrees: vec![2],
            offset_scale: 0.5,
            radius: None,
            min_gap: 1e-3,
            max_tries: 1000,
        }
    }
}

impl PolyPlantedSpec {
    /// Family shape of every level.
    pub fn family_spec(&self) -> FamilySpec {
        FamilySpec::RankK { dim: self.dim, degrees: self.degrees.clone() }
    }

    pub fn family_specs(&self) -> Vec<FamilySpec> {
        vec![self.family_spec(); self.horizon]
    }
}

/// Deterministic MDP whose `Q*_h(s, a) = F_h(a + b_{h,s})` for a planted polynomial `F_h`.
///
/// Actions range over all of `ℝ^d`, so every state's feature image is the full region.
/// The next state is `argmax_j ⟨routes_h[j], a⟩` and the reward is
/// `F_h(φ) − V*_{h+1}(s')`, making `Q*` exactly polynomial in the feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyPlantedMdp {
    families: Vec<PolynomialFamily>,
    offsets: Vec<Vec<DVector<f64>>>,
    candidates: Vec<Vec<Vec<Action>>>,
    routes: Vec<DMatrix<f64>>,
    /// `V*_{h+1}` by state, index `h-1`; zeros at `h = H`.
    next_values: Vec<Vec<f64>>,
    state_sets: Vec<Vec<PositiveMeasureSet>>,
    radius: f64,
    bound: f64,
}

fn argmax_lowest(vals: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in vals.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

impl PolyPlantedMdp {
    pub fn generate<R: Rng + ?Sized>(spec: &PolyPlantedSpec, rng: &mut R) -> Result<Self> {
        spec.family_spec().validate()?;
        if spec.horizon == 0 || spec.num_states == 0 || spec.candidates == 0 {
            return Err(Error::InvalidInput("horizon, states and candidates must be positive".into()));
        }
        let d = spec.dim;
        let radius = spec.radius.unwrap_or_else(|| default_radius(d));
        let scale = Uniform::new(0.5, 1.5).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for _ in 0..spec.max_tries.max(1) {
            let families = (0..spec.horizon)
                .map(|_| PolynomialFamily::RankK {
                    terms: spec
                        .degrees
                        .iter()
                        .map(|&degree| {
                            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                            RankTerm { lambda: sign * rng.sample(scale), v: random_unit(rng, d), degree }
                        })
                        .collect(),
                })
                .collect();
            let offsets = (0..spec.horizon)
                .map(|_| (0..spec.num_states).map(|_| gaussian_vector(rng, d) * spec.offset_scale).collect())
                .collect();
            let candidates = (0..spec.horizon)
                .map(|_| {
                    (0..spec.num_states)
                        .map(|_| (0..spec.candidates).map(|_| gaussian_vector(rng, d)).collect())
                        .collect()
                })
                .collect();
            let routes = (0..spec.horizon).map(|_| gaussian_matrix(rng, spec.num_states, d)).collect();
            let mdp = Self::from_parts(families, offsets, candidates, routes, radius)?;
            if mdp.min_candidate_gap()? >= spec.min_gap {
                return Ok(mdp);
            }
        }
        Err(Error::InvalidInput(format!(
            "no instance with candidate gap ≥ {} in {} tries",
            spec.min_gap, spec.max_tries
        )))
    }

    /// Builds the instance and its backward values; every state image defaults to the
    /// radius-`radius` ball.
    pub fn from_parts(
        families: Vec<PolynomialFamily>,
        offsets: Vec<Vec<DVector<f64>>>,
        candidates: Vec<Vec<Vec<Action>>>,
        routes: Vec<DMatrix<f64>>,
        radius: f64,
    ) -> Result<Self> {
        let horizon = families.len();
        if horizon == 0 || offsets.len() != horizon || candidates.len() != horizon || routes.len() != horizon {
            return Err(Error::InvalidMdp("per-level parts must all have length H ≥ 1".into()));
        }
        let num_states = offsets[0].len();
        let d = families[0].dim();
        for h in 0..horizon {
            families[h].validate()?;
            if families[h].dim() != d
                || offsets[h].len() != num_states
                || candidates[h].len() != num_states
                || routes[h].nrows() != num_states
                || routes[h].ncols() != d
                || offsets[h].iter().any(|b| b.len() != d)
                || candidates[h].iter().flatten().any(|a| a.len() != d)
            {
                return Err(Error::InvalidMdp(format!("inconsistent shapes at level {}", h + 1)));
            }
        }
        if !(radius > 0.0) {
            return Err(Error::NonPositiveScale(radius));
        }
        let state_sets = vec![vec![PositiveMeasureSet::Ball { radius }; num_states]; horizon];
        let mut mdp = Self {
            families,
            offsets,
            candidates,
            routes,
            next_values: vec![vec![0.0; num_states]; horizon],
            state_sets,
            radius,
            bound: 0.0,
        };
        mdp.refresh()?;
        Ok(mdp)
    }

    fn refresh(&mut self) -> Result<()> {
        let horizon = self.families.len();
        let num_states = self.offsets[0].len();
        let mut bound: f64 = 0.0;
        for h in 1..=horizon {
            for s in 0..num_states {
                for a in &self.candidates[h - 1][s] {
                    bound = bound.max((a + &self.offsets[h - 1][s]).norm());
                }
            }
        }
        self.bound = bound;
        self.next_values = vec![vec![0.0; num_states]; horizon];
        for h in (1..horizon).rev() {
            let next: Vec<f64> = (0..num_states).map(|s| self.optimal_value(h + 1, s)).collect::<Result<_>>()?;
            self.next_values[h - 1] = next;
        }
        Ok(())
    }

    /// Replaces the level-`h` function (e.g. with one outside the fitted family).
    pub fn with_family(mut self, h: usize, family: PolynomialFamily) -> Result<Self> {
        self.check_level(h)?;
        family.validate()?;
        if family.dim() != self.feature_dim() {
            return Err(Error::InvalidInput("family dimension differs from feature dimension".into()));
        }
        self.families[h - 1] = family;
        self.refresh()?;
        Ok(self)
    }

    /// Replaces the declared feature image of `(h, s)`.
    pub fn with_state_set(mut self, h: usize, s: StateId, set: PositiveMeasureSet) -> Result<Self> {
        self.check_state(h, s)?;
        self.state_sets[h - 1][s] = set;
        Ok(self)
    }

    pub fn family(&self, h: usize) -> &PolynomialFamily {
        &self.families[h - 1]
    }

    pub fn offset(&self, h: usize, s: StateId) -> &DVector<f64> {
        &self.offsets[h - 1][s]
    }

    /// `Q*_h(s, a)`.
    pub fn planted_value(&self, h: usize, s: StateId, a: &Action) -> Result<f64> {
        self.families[h - 1].eval(&(a + &self.offsets[h - 1][s]))
    }

    fn optimal_value(&self, h: usize, s: StateId) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for a in &self.candidates[h - 1][s] {
            best = best.max(self.planted_value(h, s, a)?);
        }
        Ok(best)
    }

    fn next_state(&self, h: usize, a: &Action) -> StateId {
        let scores = &self.routes[h - 1] * a;
        argmax_lowest(scores.iter().copied()).0
    }

    /// Smallest top-two gap of `Q*` over candidates at any `(h, s)`.
    pub fn min_candidate_gap(&self) -> Result<f64> {
        let mut gap = f64::INFINITY;
        for h in 1..=self.horizon() {
            for s in 0..self.num_states() {
                let mut vals: Vec<f64> =
                    self.candidates[h - 1][s].iter().map(|a| self.planted_value(h, s, a)).collect::<Result<_>>()?;
                vals.sort_by(|a, b| b.total_cmp(a));
                if vals.len() > 1 {
                    gap = gap.min(vals[0] - vals[1]);
                }
            }
        }
        Ok(gap)
    }
}

impl Mdp for PolyPlantedMdp {
    fn horizon(&self) -> usize {
        self.families.len()
    }

    fn num_states(&self) -> usize {
        self.offsets[0].len()
    }

    fn initial_state(&self) -> StateId {
        0
    }

    fn feature_dim(&self) -> usize {
        self.families[0].dim()
    }

    fn feature_bound(&self) -> f64 {
        self.bound
    }

    fn candidates(&self, h: usize, s: StateId) -> Result<&[Action]> {
        self.check_state(h, s)?;
        Ok(&self.candidates[h - 1][s])
    }

    fn feature(&self, h: usize, s: StateId, a: &Action) -> Result<DVector<f64>> {
        self.check_state(h, s)?;
        if a.len() != self.feature_dim() {
            return Err(Error::InvalidAction { level: h, state: s });
        }
        Ok(a + &self.offsets[h - 1][s])
    }

    fn outcomes(&self, h: usize, s: StateId, a: &Action) -> Result<Vec<Outcome>> {
        let q = self.families[h - 1].eval(&self.feature(h, s, a)?)?;
        let next = self.next_state(h, a);
        Ok(vec![Outcome { next_state: next, prob: 1.0, reward: q - self.next_values[h - 1][next] }])
    }

    fn preimages(&self, h: usize, x: &DVector<f64>) -> Result<Vec<(StateId, Action)>> {
        self.check_level(h)?;
        Ok((0..self.num_states()).map(|s| (s, x - &self.offsets[h - 1][s])).collect())
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

impl PolyMdp for PolyPlantedMdp {
    fn sampling_set(&self, _h: usize) -> PositiveMeasureSet {
        PositiveMeasureSet::Ball { radius: self.radius }
    }

    fn state_action_set(&self, h: usize, s: StateId) -> PositiveMeasureSet {
        self.state_sets[h - 1][s].clone()
    }

    fn realize(&self, h: usize, x: &DVector<f64>, rng: &mut dyn RngCore) -> Result<Realization> {
        self.check_level(h)?;
        let s = rng.random_range(0..self.num_states());
        Ok(Realization { state: s, action: x - &self.offsets[h - 1][s], reward_scale: 1.0 })
    }

    fn realize_in_state(&self, h: usize, s: StateId, x: &DVector<f64>) -> Result<Action> {
        self.check_state(h, s)?;
        Ok(x - &self.offsets[h - 1][s])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::exact_dp_solve;
    use crate::rng::stream;

    #[test]
    fn q_star_is_planted_polynomial() {
        let mut rng = stream(21, "t", 0);
        let mdp = PolyPlantedMdp::generate(&PolyPlantedSpec::default(), &mut rng).unwrap();
        let sol = exact_dp_solve(&mdp, 1_000_000).unwrap();
        for h in 1..=mdp.horizon() {
            for s in 0..mdp.num_states() {
                for (i, a) in mdp.candidates(h, s).unwrap().iter().enumerate() {
                    let q = mdp.planted_value(h, s, a).unwrap();
                    assert!((sol.q[h - 1][s][i] - q).abs() < 1e-10);
                }
            }
        }
    }
}
