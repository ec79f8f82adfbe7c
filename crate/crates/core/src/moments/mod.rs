//! Activation moment coefficients and empirical moment estimators.

mod activation;
mod batch;
mod estimators;
mod indices;
pub mod quadrature;
mod reference;
mod tensor;
mod tilde;

pub use activation::{activation_moment_coefficients, Activation, MomentCoefficients};
pub use batch::{default_radius, partition, NoiseModel, SampleBatch, BATCH_SCHEMA};
pub use estimators::{estimate_p2, estimate_q1, estimate_q2, estimate_r3, R3Estimate, ORTHONORMAL_TOL};
pub use indices::{MomentIndices, DEFAULT_ZERO_TOL};
pub use reference::{hermite_tensor, reference_moment, reference_moments, ReferenceMoments, REFERENCE_CAP};
pub use tensor::{Tensor3, Tensor4};
pub use tilde::{outer_tilde_matrix, outer_tilde_vector, ASYMMETRY_WARN};
