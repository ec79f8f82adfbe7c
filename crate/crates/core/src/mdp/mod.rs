//! Episodic MDPs with feature-indexed actions, simulator access surfaces and exact
//! planning oracles.
//!
//! Levels are 1-based: `h ∈ 1..=H`. Actions are feature-space vectors; planning and
//! greedy argmax range over a finite per-(level, state) candidate set, while the
//! generative model accepts any action the instance can interpret.

mod access;
mod plan;
mod tabular;

pub use access::{AccessMode, SimulatorAccess};
pub use plan::{
    bellman_residual, evaluate_policy, exact_dp_solve, greedy_policy, monte_carlo_value, policy_values, DpSolution,
    PolicyValues, ValueEstimate, DEFAULT_DP_CAP,
};
pub use tabular::{TabularAction, TabularMdp};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};

pub type StateId = usize;
pub type Action = DVector<f64>;

/// One atom of the joint (next state, reward) law of a transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next_state: StateId,
    pub prob: f64,
    pub reward: f64,
}

/// Finite-horizon MDP with feature-indexed actions.
pub trait Mdp: Send + Sync {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn initial_state(&self) -> StateId;
    /// Dimension of both action vectors and features.
    fn feature_dim(&self) -> usize;
    /// Stored bound with `‖φ_h(s,a)‖ ≤ B_φ` on every candidate pair.
    fn feature_bound(&self) -> f64;
    /// Finite planning set at `(h, s)`.
    fn candidates(&self, h: usize, s: StateId) -> Result<&[Action]>;
    fn feature(&self, h: usize, s: StateId, a: &Action) -> Result<DVector<f64>>;
    /// Joint law of `(next_state, reward)`; probabilities sum to one.
    fn outcomes(&self, h: usize, s: StateId, a: &Action) -> Result<Vec<Outcome>>;
    /// All `(s, a)` with `φ_h(s, a) = x`.
    fn preimages(&self, h: usize, x: &DVector<f64>) -> Result<Vec<(StateId, Action)>>;
    /// Every transition law is a single point mass.
    fn is_deterministic(&self) -> bool;

    fn check_level(&self, h: usize) -> Result<()> {
        if h == 0 || h > self.horizon() {
            return Err(Error::InvalidLevel { level: h, horizon: self.horizon() });
        }
        Ok(())
    }

    fn check_state(&self, h: usize, s: StateId) -> Result<()> {
        self.check_level(h)?;
        if s >= self.num_states() {
            return Err(Error::InvalidState { level: h, state: s });
        }
        Ok(())
    }

    /// Expected one-step reward.
    fn mean_reward(&self, h: usize, s: StateId, a: &Action) -> Result<f64> {
        Ok(self.outcomes(h, s, a)?.iter().map(|o| o.prob * o.reward).sum())
    }

    /// Largest candidate-set size over all levels and states.
    fn max_candidates(&self) -> usize {
        let mut m = 0;
        for h in 1..=self.horizon() {
            for s in 0..self.num_states() {
                if let Ok(c) = self.candidates(h, s) {
                    m = m.max(c.len());
                }
            }
        }
        m
    }
}

/// Draw one outcome from a finite law with a single uniform variate.
pub fn sample_outcome<'o, R: rand::Rng + ?Sized>(outcomes: &'o [Outcome], rng: &mut R) -> &'o Outcome {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for o in outcomes {
        acc += o.prob;
        if u < acc {
            return o;
        }
    }
    outcomes.last().expect("nonempty outcome law")
}

/// Deterministic per-level policy: `levels[h-1][s]` indexes `candidates(h, s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    levels: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(levels: Vec<Vec<usize>>) -> Self {
        Self { levels }
    }

    /// Policy choosing candidate 0 everywhere.
    pub fn first_action(horizon: usize, num_states: usize) -> Self {
        Self { levels: vec![vec![0; num_states]; horizon] }
    }

    pub fn horizon(&self) -> usize {
        self.levels.len()
    }

    pub fn index(&self, h: usize, s: StateId) -> usize {
        self.levels[h - 1][s]
    }

    pub fn set(&mut self, h: usize, s: StateId, idx: usize) {
        self.levels[h - 1][s] = idx;
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Action vector chosen at `(h, s)`.
    pub fn action<'m>(&self, mdp: &'m dyn Mdp, h: usize, s: StateId) -> Result<&'m Action> {
        let cands = mdp.candidates(h, s)?;
        cands.get(self.index(h, s)).ok_or(Error::InvalidAction { level: h, state: s })
    }

    /// Length is exactly `H` and every index lies in its candidate set.
    pub fn validate(&self, mdp: &dyn Mdp) -> Result<()> {
        if self.levels.len() != mdp.horizon() {
            return Err(Error::InvalidInput(format!(
                "policy length {} differs from horizon {}",
                self.levels.len(),
                mdp.horizon()
            )));
        }
        for h in 1..=mdp.horizon() {
            if self.levels[h - 1].len() != mdp.num_states() {
                return Err(Error::InvalidInput(format!("policy level {h} has wrong state count")));
            }
            for s in 0..mdp.num_states() {
                self.action(mdp, h, s)?;
            }
        }
        Ok(())
    }
}

/// One simulated step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub level: usize,
    pub state: StateId,
    pub action: Vec<f64>,
    /// Candidate index when the action came from the planning set.
    pub action_id: Option<usize>,
    pub reward: f64,
}

/// Sequence of steps from `start_level` through `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_level: usize,
    pub steps: Vec<Step>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Serialize)]
struct LogRecord<'a> {
    episode: u64,
    level: usize,
    state: StateId,
    action: Option<usize>,
    reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    action_vector: Option<&'a [f64]>,
}

/// Append one JSON line per step: `{episode, level, state, action, reward}`; off-candidate
/// actions carry `action: null` and the raw vector.
pub fn write_trajectory_log<W: Write>(w: &mut W, episode: u64, traj: &Trajectory) -> std::io::Result<()> {
    for step in &traj.steps {
        let rec = LogRecord {
            episode,
            level: step.level,
            state: step.state,
            action: step.action_id,
            reward: step.reward,
            action_vector: if step.action_id.is_none() { Some(&step.action) } else { None },
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Largest `‖φ_h(s, a)‖` over all candidates.
pub fn max_feature_norm(mdp: &dyn Mdp) -> Result<f64> {
    let mut m: f64 = 0.0;
    for h in 1..=mdp.horizon() {
        for s in 0..mdp.num_states() {
            for a in mdp.candidates(h, s)? {
                m = m.max(mdp.feature(h, s, a)?.norm());
            }
        }
    }
    Ok(m)
}
