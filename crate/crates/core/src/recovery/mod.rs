//! Parameter recovery of two-layer networks `f(x) = Σ_i v_i σ(w_iᵀx)` from labelled
//! Gaussian samples: moment-based estimation followed by optional gradient refinement.

mod linsys;
mod loss;
mod net;
mod pipeline;
mod residual;
mod subspace;
mod tensor_power;

pub use linsys::{assemble_network, solve_linear_systems, LinearSolution, ALIGNMENT_MIN, GRAM_DET_MIN};
pub use loss::empirical_loss_and_gradient;
pub use net::{match_networks, random_signs, Conditioning, NetworkMatch, TwoLayerNet};
pub use pipeline::{
    exact_recover, noisy_recover, noisy_recover_with_moments, refine, MomentSet, RecoveryConfig, RecoveryDiagnostics,
    RecoveryReport, RecoveryStatus, Refinement,
};
pub use residual::{feature_count, residualize};
pub use subspace::{estimate_subspace, symmetric_spectral_norm, SubspaceEstimate, SubspaceOptions};
pub use tensor_power::{tensor_decompose, TensorComponent, TensorDecomposition, TensorPowerOptions};
