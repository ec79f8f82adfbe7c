//! Level-wise reinforcement learners that reduce policy learning to network recovery,
//! with planted instance families and enumeration-based diagnostics.
//!
//! Every learner runs backward from `H` to 1: explore the level through the generative
//! model, recover `Q̂_h`, and act greedily over the candidate actions.

mod diagnostics;
mod explore;
mod instance;
mod learn;

pub use diagnostics::{
    measure_gap, probe_features, probed_q_error, suboptimality_by_level, telescoping_bounds, GAP_TIE_TOL,
};
pub use explore::{explore_level, LabelMode};
pub use instance::{top_two_gap, PlantedFamily, PlantedNetMdp, PlantedNetSpec};
pub use learn::{
    learn_bellman_complete, learn_deterministic, learn_policy_complete, learn_with_gap, LearnedValueStack, LevelModel,
    NeuralRlConfig,
};
