use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, gaussian_vector, random_unit};
use crate::mdp::{Action, Mdp, Outcome, StateId};
use crate::moments::Activation;
use crate::recovery::TwoLayerNet;

/// Transition and reward structure of a planted instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedFamily {
    /// Deterministic routing `s' = argmax_j u_{h,j}ᵀa` with rewards chosen so that
    /// `Q*_h(s, a) = f_h(φ_h(s, a))` for every action vector.
    PlantedQ,
    /// `r_h(s, a) = f_h(φ_h(s, a))` with a next-state law that ignores `(s, a)`: uniform
    /// over the states, or a fixed state per level when `deterministic`.
    PlantedReward { deterministic: bool },
}

/// Parameters of [`PlantedNetMdp::generate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedNetSpec {
    pub family: PlantedFamily,
    pub horizon: usize,
    pub num_states: usize,
    pub dim: usize,
    pub width: usize,
    pub candidates: usize,
    pub activation: Activation,
    /// Output signs of every level's net; `None` means all `+1`.
    pub signs: Option<Vec<f64>>,
    /// Row norms of the orthogonal planted rows.
    pub row_norm: f64,
    /// Norm of the per-state feature offsets `b_{h,s}`.
    pub offset_scale: f64,
    /// Redraw each candidate set until the top-two `Q*` values differ by at least this.
    pub min_gap: Option<f64>,
    pub max_gap_tries: usize,
}

impl Default for PlantedNetSpec {
    fn default() -> Self {
        Self {
            family: PlantedFamily::PlantedQ,
            horizon: 2,
            num_states: 3,
            dim: 10,
            width: 2,
            candidates: 16,
            activation: Activation::Relu,
            signs: None,
            row_norm: 1.0,
            offset_scale: 0.5,
            min_gap: None,
            max_gap_tries: 10_000,
        }
    }
}

/// Synthetic MDP whose features are `φ_h(s, a) = a + b_{h,s}` over action vectors
/// `a ∈ ℝ^d`, so every feature vector has one preimage per state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedNetMdp {
    family: PlantedFamily,
    horizon: usize,
    num_states: usize,
    dim: usize,
    nets: Vec<TwoLayerNet>,
    offsets: Vec<Vec<DVector<f64>>>,
    candidates: Vec<Vec<Vec<Action>>>,
    routes: Vec<DMatrix<f64>>,
    fixed_next: Vec<StateId>,
    /// `V*_{h+1}` per state for the planted-Q family; `[h-1][s]`, zeros at `h = H`.
    next_values: Vec<Vec<f64>>,
    feature_bound: f64,
}

impl PlantedNetMdp {
    pub fn generate<R: Rng + ?Sized>(spec: &PlantedNetSpec, rng: &mut R) -> Result<Self> {
        let (h_max, m, d, k) = (spec.horizon, spec.num_states, spec.dim, spec.width);
        if h_max == 0 || m == 0 || spec.candidates == 0 || k == 0 || k > d {
            return Err(Error::InvalidMdp("planted instance needs positive sizes and width ≤ dim".into()));
        }
        let signs = spec.signs.clone().unwrap_or_else(|| vec![1.0; k]);
        let nets = (0..h_max)
            .map(|_| TwoLayerNet::planted_orthogonal(d, &vec![spec.row_norm; k], &signs, spec.activation, rng))
            .collect::<Result<Vec<_>>>()?;
        let offsets: Vec<Vec<DVector<f64>>> =
            (0..h_max).map(|_| (0..m).map(|_| random_unit(rng, d) * spec.offset_scale).collect()).collect();
        let routes = (0..h_max).map(|_| gaussian_matrix(rng, m, d)).collect();
        let fixed_next = (0..h_max).map(|_| rng.random_range(0..m)).collect();
        let mut candidates = Vec::with_capacity(h_max);
        for h in 0..h_max {
            let mut level = Vec::with_capacity(m);
            for s in 0..m {
                let mut tries = 0;
                let set = loop {
                    let set: Vec<Action> = (0..spec.candidates).map(|_| gaussian_vector(rng, d)).collect();
                    let Some(gap) = spec.min_gap else { break set };
                    let vals: Vec<f64> = set.iter().map(|a| nets[h].eval(&(a + &offsets[h][s]))).collect();
                    if top_two_gap(&vals) >= gap {
                        break set;
                    }
                    tries += 1;
                    if tries >= spec.max_gap_tries {
                        return Err(Error::InvalidMdp(format!(
                            "no candidate set with gap {gap} at level {} state {s} after {tries} draws",
                            h + 1
                        )));
                    }
                };
                level.push(set);
            }
            candidates.push(level);
        }
        Self::from_parts(spec.family, nets, offsets, candidates, routes, fixed_next)
    }

    /// Assemble an instance and derive the planted-Q rewards by backward induction.
    pub fn from_parts(
        family: PlantedFamily,
        nets: Vec<TwoLayerNet>,
        offsets: Vec<Vec<DVector<f64>>>,
        candidates: Vec<Vec<Vec<Action>>>,
        routes: Vec<DMatrix<f64>>,
        fixed_next: Vec<StateId>,
    ) -> Result<Self> {
        let horizon = nets.len();
        let bad = |m: &str| Error::InvalidMdp(m.into());
        if horizon == 0 || offsets.len() != horizon || candidates.len() != horizon {
            return Err(bad("per-level parts disagree with the horizon"));
        }
        let dim = nets[0].dim();
        let num_states = offsets[0].len();
        if routes.len() != horizon || fixed_next.len() != horizon || fixed_next.iter().any(|&s| s >= num_states) {
            return Err(bad("transition parts disagree with the horizon or state count"));
        }
        for h in 0..horizon {
            if nets[h].dim() != dim || routes[h].shape() != (num_states, dim) {
                return Err(bad("dimension mismatch"));
            }
            if offsets[h].len() != num_states || candidates[h].len() != num_states {
                return Err(bad("state count mismatch"));
            }
            for s in 0..num_states {
                if offsets[h][s].len() != dim || candidates[h][s].iter().any(|a| a.len() != dim) {
                    return Err(bad("dimension mismatch"));
                }
            }
        }
        let mut feature_bound: f64 = 0.0;
        for h in 0..horizon {
            for s in 0..num_states {
                for a in &candidates[h][s] {
                    feature_bound = feature_bound.max((a + &offsets[h][s]).norm());
                }
            }
        }
        let mut mdp = Self {
            family,
            horizon,
            num_states,
            dim,
            nets,
            offsets,
            candidates,
            routes,
            fixed_next,
            next_values: vec![vec![0.0; num_states]; horizon],
            feature_bound,
        };
        if family == PlantedFamily::PlantedQ {
            for h in (1..horizon).rev() {
                let v: Vec<f64> = (0..num_states)
                    .map(|s| {
                        mdp.candidates[h][s]
                            .iter()
                            .map(|a| mdp.planted_value(h + 1, s, a))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect();
                mdp.next_values[h - 1] = v;
            }
        }
        Ok(mdp)
    }

    /// Same instance with the level-`h` net replaced.
    pub fn with_net(&self, h: usize, net: TwoLayerNet) -> Result<Self> {
        self.check_level(h)?;
        let mut nets = self.nets.clone();
        nets[h - 1] = net;
        Self::from_parts(
            self.family,
            nets,
            self.offsets.clone(),
            self.candidates.clone(),
            self.routes.clone(),
            self.fixed_next.clone(),
        )
    }

    pub fn family(&self) -> PlantedFamily {
        self.family
    }

    /// Planted net `f_h`.
    pub fn net(&self, h: usize) -> &TwoLayerNet {
        &self.nets[h - 1]
    }

    pub fn offset(&self, h: usize, s: StateId) -> &DVector<f64> {
        &self.offsets[h - 1][s]
    }

    /// `f_h(φ_h(s, a))`.
    pub fn planted_value(&self, h: usize, s: StateId, a: &Action) -> f64 {
        self.nets[h - 1].eval(&(a + &self.offsets[h - 1][s]))
    }

    fn route(&self, h: usize, a: &Action) -> StateId {
        let scores = &self.routes[h - 1] * a;
        scores.argmax().0
    }
}

/// Difference between the two largest values; `+∞` for fewer than two.
pub fn top_two_gap(values: &[f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in values {
        if v > best {
            second = best;
            best = v;
        } else if v > second {
            second = v;
        }
    }
    if second == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        best - second
    }
}

impl Mdp for PlantedNetMdp {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn num_states(&self) -> usize {
        self.num_states
    }

    fn initial_state(&self) -> StateId {
        0
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    fn candidates(&self, h: usize, s: StateId) -> Result<&[Action]> {
        self.check_state(h, s)?;
        Ok(&self.candidates[h - 1][s])
    }

    fn feature(&self, h: usize, s: StateId, a: &Action) -> Result<DVector<f64>> {
        self.check_state(h, s)?;
        if a.len() != self.dim {
            return Err(Error::InvalidAction { level: h, state: s });
        }
        Ok(a + &self.offsets[h - 1][s])
    }

    fn outcomes(&self, h: usize, s: StateId, a: &Action) -> Result<Vec<Outcome>> {
        let x = self.feature(h, s, a)?;
        let f = self.nets[h - 1].eval(&x);
        Ok(match self.family {
            PlantedFamily::PlantedQ => {
                let next = if h < self.horizon { self.route(h, a) } else { 0 };
                vec![Outcome { next_state: next, prob: 1.0, reward: f - self.next_values[h - 1][next] }]
            }
            PlantedFamily::PlantedReward { deterministic: true } => {
                vec![Outcome { next_state: self.fixed_next[h - 1], prob: 1.0, reward: f }]
            }
            PlantedFamily::PlantedReward { deterministic: false } => {
                let p = 1.0 / self.num_states as f64;
                (0..self.num_states).map(|t| Outcome { next_state: t, prob: p, reward: f }).collect()
            }
        })
    }

    fn preimages(&self, h: usize, x: &DVector<f64>) -> Result<Vec<(StateId, Action)>> {
        self.check_level(h)?;
        if x.len() != self.dim {
            return Err(Error::PreimageUnavailable { level: h });
        }
        Ok((0..self.num_states).map(|s| (s, x - &self.offsets[h - 1][s])).collect())
    }

    fn is_deterministic(&self) -> bool {
        !matches!(self.family, PlantedFamily::PlantedReward { deterministic: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{exact_dp_solve, DEFAULT_DP_CAP};
    use crate::rng::stream;

    #[test]
    fn planted_q_is_optimal_value() {
        let mut rng = stream(1, "planted", 0);
        let mdp = PlantedNetMdp::generate(&PlantedNetSpec::default(), &mut rng).unwrap();
        let sol = exact_dp_solve(&mdp, DEFAULT_DP_CAP).unwrap();
        for h in 1..=2 {
            for s in 0..3 {
                for (i, a) in mdp.candidates(h, s).unwrap().iter().enumerate() {
                    assert!((sol.q[h - 1][s][i] - mdp.planted_value(h, s, a)).abs() < 1e-12);
                }
            }
        }
        // Off-candidate actions also satisfy Q* = f.
        let a = gaussian_vector(&mut rng, 10);
        let o = &mdp.outcomes(1, 1, &a).unwrap()[0];
        assert!((o.reward + sol.value(2, o.next_state) - mdp.planted_value(1, 1, &a)).abs() < 1e-12);
    }

    #[test]
    fn preimages_cover_every_state() {
        let mut rng = stream(2, "planted", 0);
        let mdp = PlantedNetMdp::generate(&PlantedNetSpec::default(), &mut rng).unwrap();
        let x = gaussian_vector(&mut rng, 10);
        let pre = mdp.preimages(2, &x).unwrap();
        assert_eq!(pre.len(), 3);
        for (s, a) in pre {
            assert!((mdp.feature(2, s, &a).unwrap() - &x).norm() < 1e-12);
        }
    }

    #[test]
    fn gap_rejection_enforces_gap() {
        let mut rng = stream(3, "planted", 0);
        let spec = PlantedNetSpec { min_gap: Some(0.5), ..PlantedNetSpec::default() };
        let mdp = PlantedNetMdp::generate(&spec, &mut rng).unwrap();
        for h in 1..=2 {
            for s in 0..3 {
                let vals: Vec<f64> = mdp.candidates(h, s).unwrap().iter().map(|a| mdp.planted_value(h, s, a)).collect();
                assert!(top_two_gap(&vals) >= 0.5);
            }
        }
    }

    #[test]
    fn action_independent_law() {
        let mut rng = stream(4, "planted", 0);
        let spec =
            PlantedNetSpec { family: PlantedFamily::PlantedReward { deterministic: false }, ..Default::default() };
        let mdp = PlantedNetMdp::generate(&spec, &mut rng).unwrap();
        let a = gaussian_vector(&mut rng, 10);
        let o = mdp.outcomes(1, 2, &a).unwrap();
        assert_eq!(o.len(), 3);
        assert!(o.iter().all(|o| (o.prob - 1.0 / 3.0).abs() < 1e-15));
        assert!(!mdp.is_deterministic());
        assert_eq!(top_two_gap(&[1.0, 0.3]), 0.7);
        assert_eq!(top_two_gap(&[1.0]), f64::INFINITY);
    }
}
