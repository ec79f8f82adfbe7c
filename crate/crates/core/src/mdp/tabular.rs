use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{Action, Mdp, Outcome, StateId};
use crate::error::{Error, Result};

pub const MDP_SCHEMA: &str = "nnrl.mdp/1";

/// Candidate action with its feature and transition law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularAction {
    pub action: Vec<f64>,
    pub feature: Vec<f64>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TabularSpec {
    schema: String,
    horizon: usize,
    num_states: usize,
    initial_state: StateId,
    feature_dim: usize,
    feature_bound: f64,
    seed: u64,
    #[serde(default)]
    unbounded_rewards: bool,
    /// `levels[h-1][s]` lists the candidates at `(h, s)`.
    levels: Vec<Vec<Vec<TabularAction>>>,
}

/// Fully enumerated finite MDP; actions outside the candidate sets are rejected.
///
/// Construction validates: probabilities sum to one, features lie within the stored
/// bound, and (unless explicitly waived) rewards are nonnegative with every realized
/// H-step return at most `H`.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    spec: TabularSpec,
    actions: Vec<Vec<Vec<Action>>>,
}

impl TabularMdp {
    /// Build and validate; `feature_bound` of `None` stores the observed maximum.
    pub fn new(
        horizon: usize,
        num_states: usize,
        initial_state: StateId,
        feature_dim: usize,
        levels: Vec<Vec<Vec<TabularAction>>>,
        feature_bound: Option<f64>,
        seed: u64,
    ) -> Result<Self> {
        let observed = levels
            .iter()
            .flatten()
            .flatten()
            .map(|a| a.feature.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let spec = TabularSpec {
            schema: MDP_SCHEMA.to_string(),
            horizon,
            num_states,
            initial_state,
            feature_dim,
            feature_bound: feature_bound.unwrap_or(observed),
            seed,
            unbounded_rewards: false,
            levels,
        };
        Self::from_spec(spec)
    }

    /// Snapshot any finite MDP over its candidate sets. Reward bounds are not enforced,
    /// since planted families may carry negative or large rewards.
    pub fn snapshot(mdp: &dyn Mdp, seed: u64) -> Result<Self> {
        let mut levels = Vec::with_capacity(mdp.horizon());
        for h in 1..=mdp.horizon() {
            let mut states = Vec::with_capacity(mdp.num_states());
            for s in 0..mdp.num_states() {
                let mut acts = Vec::new();
                for a in mdp.candidates(h, s)? {
                    acts.push(TabularAction {
                        action: a.as_slice().to_vec(),
                        feature: mdp.feature(h, s, a)?.as_slice().to_vec(),
                        outcomes: mdp.outcomes(h, s, a)?,
                    });
                }
                states.push(acts);
            }
            levels.push(states);
        }
        let spec = TabularSpec {
            schema: MDP_SCHEMA.to_string(),
            horizon: mdp.horizon(),
            num_states: mdp.num_states(),
            initial_state: mdp.initial_state(),
            feature_dim: mdp.feature_dim(),
            feature_bound: mdp.feature_bound(),
            seed,
            unbounded_rewards: true,
            levels,
        };
        Self::from_spec(spec)
    }

    fn from_spec(spec: TabularSpec) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidMdp(m));
        if spec.schema != MDP_SCHEMA {
            return bad(format!("unknown schema {}", spec.schema));
        }
        if spec.horizon == 0 || spec.levels.len() != spec.horizon {
            return bad("horizon must be positive and match the level count".into());
        }
        if spec.num_states == 0 || spec.initial_state >= spec.num_states {
            return bad("initial state out of range".into());
        }
        let d = spec.feature_dim;
        for (hi, level) in spec.levels.iter().enumerate() {
            if level.len() != spec.num_states {
                return bad(format!("level {} lists {} states", hi + 1, level.len()));
            }
            for (s, acts) in level.iter().enumerate() {
                for a in acts {
                    if a.action.len() != d || a.feature.len() != d {
                        return bad(format!("dimension mismatch at level {}, state {s}", hi + 1));
                    }
                    let norm = a.feature.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > spec.feature_bound * (1.0 + 1e-12) + 1e-12 {
                        return bad(format!("feature norm {norm} exceeds bound {}", spec.feature_bound));
                    }
                    if a.outcomes.is_empty() {
                        return bad(format!("empty transition law at level {}, state {s}", hi + 1));
                    }
                    let mut total = 0.0;
                    for o in &a.outcomes {
                        if !(o.prob >= 0.0) || o.next_state >= spec.num_states || !o.reward.is_finite() {
                            return bad(format!("invalid outcome at level {}, state {s}", hi + 1));
                        }
                        if !spec.unbounded_rewards && o.reward < 0.0 {
                            return bad(format!("negative reward at level {}, state {s}", hi + 1));
                        }
                        total += o.prob;
                    }
                    if (total - 1.0).abs() > 1e-9 {
                        return bad(format!("probabilities sum to {total} at level {}, state {s}", hi + 1));
                    }
                }
            }
        }
        if !spec.unbounded_rewards {
            // Largest realized return from any state at level 1.
            let mut best = vec![0.0f64; spec.num_states];
            for level in spec.levels.iter().rev() {
                let next: Vec<f64> = level
                    .iter()
                    .map(|acts| {
                        acts.iter()
                            .flat_map(|a| a.outcomes.iter().filter(|o| o.prob > 0.0))
                            .map(|o| o.reward + best[o.next_state])
                            .fold(0.0, f64::max)
                    })
                    .collect();
                best = next;
            }
            let worst = best.iter().cloned().fold(0.0, f64::max);
            if worst > spec.horizon as f64 + 1e-9 {
                return bad(format!("return {worst} exceeds horizon {}", spec.horizon));
            }
        }
        let actions = spec
            .levels
            .iter()
            .map(|level| {
                level.iter().map(|acts| acts.iter().map(|a| DVector::from_vec(a.action.clone())).collect()).collect()
            })
            .collect();
        Ok(Self { spec, actions })
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: TabularSpec = serde_json::from_str(text).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        Self::from_spec(spec)
    }

    fn lookup(&self, h: usize, s: StateId, a: &Action) -> Result<&TabularAction> {
        self.check_state(h, s)?;
        let idx =
            self.actions[h - 1][s].iter().position(|c| c == a).ok_or(Error::InvalidAction { level: h, state: s })?;
        Ok(&self.spec.levels[h - 1][s][idx])
    }
}

impl Mdp for TabularMdp {
    fn horizon(&self) -> usize {
        self.spec.horizon
    }
    fn num_states(&self) -> usize {
        self.spec.num_states
    }
    fn initial_state(&self) -> StateId {
        self.spec.initial_state
    }
    fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }
    fn feature_bound(&self) -> f64 {
        self.spec.feature_bound
    }
    fn candidates(&self, h: usize, s: StateId) -> Result<&[Action]> {
        self.check_state(h, s)?;
        Ok(&self.actions[h - 1][s])
    }
    fn feature(&self, h: usize, s: StateId, a: &Action) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.lookup(h, s, a)?.feature.clone()))
    }
    fn outcomes(&self, h: usize, s: StateId, a: &Action) -> Result<Vec<Outcome>> {
        Ok(self.lookup(h, s, a)?.outcomes.clone())
    }
    fn preimages(&self, h: usize, x: &DVector<f64>) -> Result<Vec<(StateId, Action)>> {
        self.check_level(h)?;
        let mut out = Vec::new();
        for (s, acts) in self.spec.levels[h - 1].iter().enumerate() {
            for (i, a) in acts.iter().enumerate() {
                let close = a.feature.iter().zip(x.iter()).all(|(u, v)| (u - v).abs() <= 1e-12);
                if close {
                    out.push((s, self.actions[h - 1][s][i].clone()));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::PreimageUnavailable { level: h });
        }
        Ok(out)
    }
    fn is_deterministic(&self) -> bool {
        self.spec.levels.iter().flatten().flatten().all(|a| a.outcomes.iter().filter(|o| o.prob > 0.0).count() == 1)
    }
}

/// Builders for small hand-made instances.
impl TabularMdp {
    /// Deterministic instance from `(next_state, reward)` tables with scalar actions
    /// `a = [i]` and features equal to the action.
    pub fn deterministic_scalar(
        horizon: usize,
        num_states: usize,
        table: impl Fn(usize, StateId, usize) -> Option<(StateId, f64)>,
        actions_per_state: usize,
    ) -> Result<Self> {
        let mut levels = Vec::new();
        for h in 1..=horizon {
            let mut states = Vec::new();
            for s in 0..num_states {
                let mut acts = Vec::new();
                for i in 0..actions_per_state {
                    if let Some((next, r)) = table(h, s, i) {
                        acts.push(TabularAction {
                            action: vec![i as f64],
                            feature: vec![i as f64],
                            outcomes: vec![Outcome { next_state: next, prob: 1.0, reward: r }],
                        });
                    }
                }
                states.push(acts);
            }
            levels.push(states);
        }
        Self::new(horizon, num_states, 0, 1, levels, None, 0)
    }
}
