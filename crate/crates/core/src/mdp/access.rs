use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{sample_outcome, Action, Mdp, Policy, StateId, Step, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessMode {
    /// `(h, s, a)`-addressed queries.
    Generative,
    /// Full episodes from the initial state only.
    Online,
}

impl AccessMode {
    fn name(self) -> &'static str {
        match self {
            AccessMode::Generative => "generative",
            AccessMode::Online => "online",
        }
    }
}

/// Query surface over an MDP with monotone per-level counters.
///
/// Counters are atomic so exploration may run on several threads; each simulated
/// transition at level `h` increments counter `h`.
pub struct SimulatorAccess<'m> {
    mdp: &'m dyn Mdp,
    mode: AccessMode,
    counters: Vec<AtomicU64>,
    episodes: AtomicU64,
}

impl<'m> SimulatorAccess<'m> {
    pub fn new(mdp: &'m dyn Mdp, mode: AccessMode) -> Self {
        let counters = (0..mdp.horizon()).map(|_| AtomicU64::new(0)).collect();
        Self { mdp, mode, counters, episodes: AtomicU64::new(0) }
    }

    pub fn mdp(&self) -> &'m dyn Mdp {
        self.mdp
    }

    pub fn mode(&self) -> AccessMode {
        self.mode
    }

    /// Transitions simulated at level `h`.
    pub fn count(&self, h: usize) -> u64 {
        self.counters[h - 1].load(Ordering::Relaxed)
    }

    pub fn counts(&self) -> Vec<u64> {
        self.counters.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    pub fn total_queries(&self) -> u64 {
        self.counts().iter().sum()
    }

    /// Episodes started from the initial state.
    pub fn episodes(&self) -> u64 {
        self.episodes.load(Ordering::Relaxed)
    }

    fn step<R: rand::Rng + ?Sized>(&self, h: usize, s: StateId, a: &Action, rng: &mut R) -> Result<(f64, StateId)> {
        let outcomes = self.mdp.outcomes(h, s, a)?;
        let o = sample_outcome(&outcomes, rng);
        self.counters[h - 1].fetch_add(1, Ordering::Relaxed);
        Ok((o.reward, o.next_state))
    }

    /// One `(reward, next_state)` draw at `(h, s, a)`.
    pub fn generative_query<R: rand::Rng + ?Sized>(
        &self,
        h: usize,
        s: StateId,
        a: &Action,
        rng: &mut R,
    ) -> Result<(f64, StateId)> {
        self.mdp.check_state(h, s)?;
        if self.mode != AccessMode::Generative {
            return Err(Error::WrongMode { mode: self.mode.name(), detail: format!("addressed query at level {h}") });
        }
        self.step(h, s, a, rng)
    }

    /// Start at `(h, s, a)` and follow `tail` on levels `h+1..=H`.
    ///
    /// Online access only admits `h = 1` from the initial state.
    pub fn rollout<R: rand::Rng + ?Sized>(
        &self,
        h: usize,
        s: StateId,
        a: &Action,
        tail: &Policy,
        rng: &mut R,
    ) -> Result<Trajectory> {
        self.mdp.check_state(h, s)?;
        if self.mode == AccessMode::Online {
            if h != 1 || s != self.mdp.initial_state() {
                return Err(Error::WrongMode {
                    mode: self.mode.name(),
                    detail: format!("state {s} at level {h} is not the episode start"),
                });
            }
            self.episodes.fetch_add(1, Ordering::Relaxed);
        }
        let horizon = self.mdp.horizon();
        let mut steps = Vec::with_capacity(horizon - h + 1);
        let action_id = self.mdp.candidates(h, s)?.iter().position(|c| c == a);
        let (r, mut state) = self.step(h, s, a, rng)?;
        steps.push(Step { level: h, state: s, action: a.as_slice().to_vec(), action_id, reward: r });
        for level in h + 1..=horizon {
            let idx = tail.index(level, state);
            let act = tail.action(self.mdp, level, state)?;
            let (r, next) = self.step(level, state, act, rng)?;
            steps.push(Step { level, state, action: act.as_slice().to_vec(), action_id: Some(idx), reward: r });
            state = next;
        }
        Ok(Trajectory { start_level: h, steps, terminal: true })
    }

    /// Full episode from the initial state; `actor(h, s)` returns an action vector and,
    /// if it is a candidate, its index. Permitted in both modes.
    pub fn episode<R, F>(&self, mut actor: F, rng: &mut R) -> Result<Trajectory>
    where
        R: rand::Rng + ?Sized,
        F: FnMut(usize, StateId, &mut R) -> Result<(Action, Option<usize>)>,
    {
        self.episodes.fetch_add(1, Ordering::Relaxed);
        let mut state = self.mdp.initial_state();
        let mut steps = Vec::with_capacity(self.mdp.horizon());
        for level in 1..=self.mdp.horizon() {
            let (a, action_id) = actor(level, state, rng)?;
            let (r, next) = self.step(level, state, &a, rng)?;
            steps.push(Step { level, state, action: a.as_slice().to_vec(), action_id, reward: r });
            state = next;
        }
        Ok(Trajectory { start_level: 1, steps, terminal: true })
    }
}
