use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gaussian_vector;
use crate::rng::stream;

/// Proposals after which rejection sampling gives up.
pub const MAX_PROPOSALS: u64 = 1_000_000;
/// Proposals used by [`check_positive_measure`].
pub const CHECK_PROPOSALS: u64 = 100_000;
/// Estimated acceptance at or below this is treated as measure zero.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

const CHUNK: u64 = 4096;

/// Explicit geometric region of `ℝ^d` used as a sampling target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PositiveMeasureSet {
    /// `‖x‖ ≤ radius`.
    Ball { radius: f64 },
    /// `⟨normal, x⟩ > offset`.
    HalfSpace { normal: DVector<f64>, offset: f64 },
    /// `x ≥ 0, Σx ≤ scale`: the homogeneous extension `conv(F ∪ {0})` of the face
    /// `{x ≥ 0, Σx = scale}`.
    Simplex { scale: f64 },
    /// `⟨normal, x⟩ = offset` exactly; Lebesgue-null.
    Hyperplane { normal: DVector<f64>, offset: f64 },
    /// A finite point set; Lebesgue-null.
    Finite { points: Vec<DVector<f64>> },
}

impl PositiveMeasureSet {
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            PositiveMeasureSet::Ball { radius } => x.norm() <= *radius,
            PositiveMeasureSet::HalfSpace { normal, offset } => normal.dot(x) > *offset,
            PositiveMeasureSet::Simplex { scale } => x.iter().all(|v| *v >= 0.0) && x.sum() <= *scale,
            PositiveMeasureSet::Hyperplane { normal, offset } => normal.dot(x) == *offset,
            PositiveMeasureSet::Finite { points } => points.iter().any(|p| p == x),
        }
    }

    /// Short description used in reports.
    pub fn tag(&self) -> &'static str {
        match self {
            PositiveMeasureSet::Ball { .. } => "full ball",
            PositiveMeasureSet::HalfSpace { .. } => "half-space",
            PositiveMeasureSet::Simplex { .. } => "convex hull with homogeneous extension",
            PositiveMeasureSet::Hyperplane { .. } => "hyperplane",
            PositiveMeasureSet::Finite { .. } => "finite set",
        }
    }
}

/// Accepted points and proposal count of a rejection run.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSample {
    pub points: Vec<DVector<f64>>,
    pub proposals: u64,
}

fn run_chunks<F>(base: u64, start: u64, chunks: u64, d: usize, keep: F) -> Vec<(u64, Vec<DVector<f64>>)>
where
    F: Fn(&DVector<f64>) -> bool + Sync,
{
    (start..start + chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = stream(base, "measure", c);
            let pts = (0..CHUNK).map(|_| gaussian_vector(&mut r, d)).filter(|x| keep(x)).collect();
            (c, pts)
        })
        .collect()
}

/// `n` i.i.d. draws from `N(0, I_d)` conditioned on membership, by rejection.
///
/// Proposals come in fixed chunks with one stream per chunk, so the output does not
/// depend on scheduling. Fails once [`MAX_PROPOSALS`] are spent.
pub fn sample_positive_measure<R: Rng + ?Sized>(
    set: &PositiveMeasureSet,
    d: usize,
    n: usize,
    rng: &mut R,
) -> Result<MeasureSample> {
    let base: u64 = rng.random();
    let mut points = Vec::with_capacity(n);
    let mut next_chunk = 0u64;
    let mut proposals = 0u64;
    while points.len() < n {
        if proposals >= MAX_PROPOSALS {
            return Err(Error::AcceptanceTooLow { accepted: points.len() as u64, proposals });
        }
        let want = n - points.len();
        let rate = (points.len() as f64 + 1.0) / (proposals as f64 + 1.0);
        let chunks = ((want as f64 / rate / CHUNK as f64).ceil() as u64).clamp(1, 64);
        for (_, pts) in run_chunks(base, next_chunk, chunks, d, |x| set.contains(x)) {
            let room = n - points.len();
            points.extend(pts.into_iter().take(room));
        }
        next_chunk += chunks;
        proposals += chunks * CHUNK;
    }
    Ok(MeasureSample { points, proposals })
}

/// Fraction of `proposals` standard-normal draws that land in `set`.
pub fn estimate_acceptance<R: Rng + ?Sized>(set: &PositiveMeasureSet, d: usize, proposals: u64, rng: &mut R) -> f64 {
    let base: u64 = rng.random();
    let chunks = proposals.div_ceil(CHUNK);
    let hits: usize = run_chunks(base, 0, chunks, d, |x| set.contains(x)).iter().map(|(_, p)| p.len()).sum();
    hits as f64 / (chunks * CHUNK) as f64
}

/// Result of a positive-measure check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureCheck {
    pub acceptance: f64,
    pub proposals: u64,
}

/// Estimated acceptance over at least [`CHECK_PROPOSALS`] draws; fails when it is at most
/// [`MIN_ACCEPTANCE`].
pub fn check_positive_measure<R: Rng + ?Sized>(
    set: &PositiveMeasureSet,
    d: usize,
    rng: &mut R,
) -> Result<MeasureCheck> {
    let proposals = CHECK_PROPOSALS.div_ceil(CHUNK) * CHUNK;
    let acceptance = estimate_acceptance(set, d, proposals, rng);
    if acceptance <= MIN_ACCEPTANCE {
        return Err(Error::AcceptanceTooLow { accepted: (acceptance * proposals as f64).round() as u64, proposals });
    }
    Ok(MeasureCheck { acceptance, proposals })
}
