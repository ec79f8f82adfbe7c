//! Method-of-moments recovery of planted two-layer networks and the
//! reinforcement-learning procedures built on top of it.
//!
//! Modules:
//! - [`mdp`]: episodic MDPs, simulator access, rollouts and exact planning oracles.
//! - [`moments`]: activation moment coefficients and empirical moment estimators.
//! - [`recovery`]: the recovery pipeline (subspace, tensor decomposition, linear systems,
//!   gradient refinement).
//! - [`rl`]: level-wise learners that reduce policy learning to repeated recovery.
//! - [`poly`]: polynomial families, polynomial-system fitting, polynomial DP and the
//!   two-state hard instance.

pub mod error;
pub mod linalg;
pub mod mdp;
pub mod moments;
pub mod poly;
pub mod recovery;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
