//! Polynomial-realizable value functions: admissible families, exact polynomial-system
//! fitting, positive-measure sampling, generative and online DP, and the two-state hard
//! instance separating online from generative access.

mod dp;
mod family;
mod fit;
mod hard;
mod measure;
mod planted;

pub use dp::{dp_generative, dp_online, PolyDpReport, PolyMdp, Realization};
pub use family::{eval_family, monomials, FamilySpec, LiftedTensor, PolynomialFamily, RankTerm, LIFTED_CAP};
pub use fit::{fit_family, FitOptions, FitOutcome, FitResult};
pub use hard::{
    binomial, index_count, index_point, index_set, monomial_reward, online_probes, run_separation,
    separation_experiment, ConstructionCheck, HardInstance, ProbeStats, SeparationLevel, SeparationOptions,
    SeparationReport, BAD, GOOD, HULL_TOL, INDEX_CAP,
};
pub use measure::{
    check_positive_measure, estimate_acceptance, sample_positive_measure, MeasureCheck, MeasureSample,
    PositiveMeasureSet, CHECK_PROPOSALS, MAX_PROPOSALS, MIN_ACCEPTANCE,
};
pub use planted::{PolyPlantedMdp, PolyPlantedSpec};
