use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{Policy, SimulatorAccess};
use crate::moments::{NoiseModel, SampleBatch};
use crate::rng::stream;

/// How exploration labels are formed.
#[derive(Clone, Copy, Debug)]
pub enum LabelMode<'a> {
    /// Return of a rollout that follows the given policy on later levels.
    Rollout(&'a Policy),
    /// `r_h + V̂_{h+1}(s')` with `V̂_{h+1}` indexed by state; ignored at `h = H`.
    Backup(&'a [f64]),
}

/// Labelled samples at level `h`: `x ~ N(0, I_d)`; inside `radius` a random preimage
/// `(s, a) ∈ φ_h⁻¹(x)` is queried through the generative model, outside it the label is 0
/// and the sample is flagged truncated. Sample `i` uses its own stream.
pub fn explore_level<R: Rng + ?Sized>(
    access: &SimulatorAccess<'_>,
    h: usize,
    mode: LabelMode<'_>,
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    let mdp = access.mdp();
    mdp.check_level(h)?;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if let LabelMode::Backup(values) = mode {
        if h < mdp.horizon() && values.len() != mdp.num_states() {
            return Err(Error::InvalidInput("backup values need one entry per state".into()));
        }
    }
    let d = mdp.feature_dim();
    let horizon = mdp.horizon();
    let base: u64 = rng.random();
    let samples = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(DVector<f64>, f64, bool)> {
            let mut r = stream(base, "explore", i as u64);
            let x = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
            if x.norm() > radius {
                return Ok((x, 0.0, true));
            }
            let pre = mdp.preimages(h, &x)?;
            if pre.is_empty() {
                return Err(Error::PreimageUnavailable { level: h });
            }
            let (s, a) = &pre[r.random_range(0..pre.len())];
            let label = match mode {
                LabelMode::Rollout(tail) => access.rollout(h, *s, a, tail, &mut r)?.total_reward(),
                LabelMode::Backup(values) => {
                    let (reward, next) = access.generative_query(h, *s, a, &mut r)?;
                    reward + if h < horizon { values[next] } else { 0.0 }
                }
            };
            Ok((x, label, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut x = DMatrix::zeros(d, n);
    let mut y = Vec::with_capacity(n);
    let mut truncated = Vec::with_capacity(n);
    for (i, (xi, yi, ti)) in samples.into_iter().enumerate() {
        x.set_column(i, &xi);
        y.push(yi);
        truncated.push(ti);
    }
    SampleBatch::new(x, y, truncated, radius, NoiseModel::Noiseless)
}
