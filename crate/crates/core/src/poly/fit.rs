use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::{monomials, FamilySpec, PolynomialFamily};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, least_squares, orthonormalize};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Accept when `max|r_i| ≤ residual_factor · (1 + max|y_i|)`.
    pub residual_factor: f64,
    /// Fresh Gaussian probes used to compare accepted restarts.
    pub probes: usize,
    /// Accepted restarts further apart than this (relative) flag ambiguity.
    pub agreement_tol: f64,
    /// Central-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 32,
            max_iterations: 300,
            residual_factor: 1e-8,
            probes: 100,
            agreement_tol: 1e-6,
            jacobian_step: 1e-6,
        }
    }
}

/// An accepted fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Canonical form of the best restart.
    pub family: PolynomialFamily,
    pub max_residual: f64,
    pub bound: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Restarts meeting the residual bound.
    pub accepted_restarts: usize,
    /// Max relative probe disagreement between the winner and any accepted restart.
    pub probe_disagreement: f64,
    /// Accepted restarts disagree beyond `agreement_tol`: the samples do not pin down
    /// the member.
    pub ambiguous: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FitOutcome {
    Fitted(FitResult),
    /// No restart met the residual bound.
    NoSolution {
        best_residual: f64,
        bound: f64,
    },
}

impl FitOutcome {
    pub fn fitted(&self) -> Option<&FitResult> {
        match self {
            FitOutcome::Fitted(r) => Some(r),
            FitOutcome::NoSolution { .. } => None,
        }
    }
}

struct Problem<'a> {
    spec: &'a FamilySpec,
    xs: &'a [DVector<f64>],
    y: DVector<f64>,
    monos: Vec<Vec<u32>>,
}

struct Restart {
    theta: Vec<f64>,
    linear: Vec<f64>,
    max_residual: f64,
    iterations: usize,
}

impl Problem<'_> {
    fn design(&self, theta: &[f64]) -> DMatrix<f64> {
        let m = self.spec.linear_len();
        let mut a = DMatrix::zeros(self.xs.len(), m);
        for (i, x) in self.xs.iter().enumerate() {
            for (j, v) in self.spec.basis(theta, x, &self.monos).into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        a
    }

    /// Linear coefficients and residual `y − Φ(θ)c` with `c` the least-squares optimum.
    fn project(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let a = self.design(theta);
        let (c, _) = least_squares(&a, &self.y);
        let r = &self.y - &a * &c;
        (c, r)
    }

    /// Rescales the nonlinear block without changing the span of the basis.
    fn normalize(&self, theta: &mut [f64]) {
        match self.spec {
            FamilySpec::RankK { dim, .. } => {
                for v in theta.chunks_mut(*dim) {
                    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    if n > 0.0 {
                        v.iter_mut().for_each(|c| *c /= n);
                    }
                }
            }
            FamilySpec::QOfUx { dim, rank, .. } => {
                let ut = DMatrix::from_row_slice(*rank, *dim, theta).transpose();
                let q = orthonormalize(&ut);
                if q.ncols() == *rank {
                    for j in 0..*rank {
                        for c in 0..*dim {
                            theta[j * dim + c] = q[(c, j)];
                        }
                    }
                }
            }
        }
    }

    fn jacobian(&self, theta: &[f64], step: f64) -> DMatrix<f64> {
        let q = theta.len();
        let mut j = DMatrix::zeros(self.xs.len(), q);
        let mut t = theta.to_vec();
        for c in 0..q {
            let h = step * (1.0 + theta[c].abs());
            t[c] = theta[c] + h;
            let (_, rp) = self.project(&t);
            t[c] = theta[c] - h;
            let (_, rm) = self.project(&t);
            t[c] = theta[c];
            j.set_column(c, &((rp - rm) / (2.0 * h)));
        }
        j
    }

    /// Levenberg–Marquardt on the projected residual.
    fn solve(&self, mut theta: Vec<f64>, bound: f64, opts: &FitOptions) -> Restart {
        self.normalize(&mut theta);
        let (mut linear, mut r) = self.project(&theta);
        let mut cost = r.norm_squared();
        let mut mu = -1.0;
        let mut iterations = 0;
        while iterations < opts.max_iterations && r.amax() > bound {
            iterations += 1;
            let j = self.jacobian(&theta, opts.jacobian_step);
            let a = j.transpose() * &j;
            let g = j.transpose() * &r;
            let scale = a.diagonal().max().max(1e-300);
            if mu < 0.0 {
                mu = 1e-3 * scale;
            }
            let mut improved = false;
            while mu <= 1e16 * scale {
                let mut damped = a.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += mu;
                }
                let step = match damped.clone().cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => least_squares(&damped, &g).0,
                };
                let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
                self.normalize(&mut trial);
                let (c_new, r_new) = self.project(&trial);
                let cost_new = r_new.norm_squared();
                if cost_new < cost {
                    theta = trial;
                    linear = c_new;
                    r = r_new;
                    cost = cost_new;
                    mu = (mu / 3.0).max(1e-15 * scale);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        Restart { theta, linear: linear.as_slice().to_vec(), max_residual: r.amax(), iterations }
    }
}

/// Fits a member of `spec` to `y_i = f(x_i)` by variable-projection Levenberg–Marquardt
/// from `opts.restarts` Gaussian starts.
///
/// The best restart (smallest max residual, ties to the lower index) is accepted when it
/// meets the residual bound; otherwise the outcome is [`FitOutcome::NoSolution`].
pub fn fit_family<R: Rng + ?Sized>(
    xs: &[DVector<f64>],
    ys: &[f64],
    spec: &FamilySpec,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<FitOutcome> {
    spec.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!("{} points but {} labels", xs.len(), ys.len())));
    }
    let needed = spec.required_samples();
    if xs.len() < needed {
        return Err(Error::InsufficientSamples { n: xs.len(), needed });
    }
    let d = spec.dim();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::InvalidInput(format!("point of dimension {} for family of dimension {d}", x.len())));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidInput("at least one restart required".into()));
    }
    let monos = match spec {
        FamilySpec::QOfUx { rank, degree, .. } => monomials(*rank, *degree),
        FamilySpec::RankK { .. } => Vec::new(),
    };
    let problem = Problem { spec, xs, y: DVector::from_column_slice(ys), monos };
    let bound = opts.residual_factor * (1.0 + ys.iter().fold(0.0f64, |m, y| m.max(y.abs())));
    let base: u64 = rng.random();
    let q = spec.nonlinear_len();
    let runs: Vec<Restart> = (0..opts.restarts)
        .into_par_iter()
        .map(|i| {
            let mut r = stream(base, "fit-restart", i as u64);
            let theta0 = gaussian_vector(&mut r, q);
            problem.solve(theta0.as_slice().to_vec(), bound, opts)
        })
        .collect();
    let (best_idx, best) = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.max_residual.total_cmp(&b.max_residual).then(ia.cmp(ib)))
        .expect("at least one restart");
    if !(best.max_residual <= bound) {
        return Ok(FitOutcome::NoSolution { best_residual: best.max_residual, bound });
    }
    let winner = spec.assemble(&best.theta, &best.linear);
    let mut probe_rng = stream(base, "fit-probes", 0);
    let probes: Vec<DVector<f64>> = (0..opts.probes).map(|_| gaussian_vector(&mut probe_rng, d)).collect();
    let mut scale: f64 = 1.0;
    for p in &probes {
        scale = scale.max(winner.eval(p)?.abs());
    }
    let mut accepted = 0;
    let mut disagreement: f64 = 0.0;
    for run in runs.iter().filter(|r| r.max_residual <= bound) {
        accepted += 1;
        let other = spec.assemble(&run.theta, &run.linear);
        disagreement = disagreement.max(winner.max_difference(&other, &probes)? / scale);
    }
    Ok(FitOutcome::Fitted(FitResult {
        family: winner.canonical(),
        max_residual: best.max_residual,
        bound,
        restart: best_idx,
        accepted_restarts: accepted,
        probe_disagreement: disagreement,
        ambiguous: disagreement > opts.agreement_tol,
        iterations: best.iterations,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::family::RankTerm;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn planted() -> PolynomialFamily {
        PolynomialFamily::RankK { terms: vec![RankTerm { lambda: 1.0, v: dv(&[1.0, 2.0]), degree: 2 }] }
    }

    #[test]
    fn recovers_rank_one_square() {
        let mut rng = stream(11, "t", 0);
        let f = planted();
        let spec = f.spec();
        let xs: Vec<_> = (0..spec.required_samples()).map(|_| gaussian_vector(&mut rng, 2)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| f.eval(x).unwrap()).collect();
        let fit = fit_family(&xs, &ys, &spec, &FitOptions::default(), &mut rng).unwrap();
        let fit = fit.fitted().unwrap_or_else(|| panic!("{fit:?}"));
        assert!(!fit.ambiguous);
        let probes: Vec<_> = (0..100).map(|_| gaussian_vector(&mut rng, 2)).collect();
        assert!(f.max_difference(&fit.family, &probes).unwrap() < 1e-8);
    }

    #[test]
    fn perturbed_label_has_no_solution() {
        let mut rng = stream(12, "t", 0);
        let f = planted();
        let spec = f.spec();
        let xs: Vec<_> = (0..spec.required_samples()).map(|_| gaussian_vector(&mut rng, 2)).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| f.eval(x).unwrap()).collect();
        ys[0] += 1.0;
        let out = fit_family(&xs, &ys, &spec, &FitOptions::default(), &mut rng).unwrap();
        assert!(matches!(out, FitOutcome::NoSolution { .. }));
    }

    #[test]
    fn degenerate_design_flagged() {
        let mut rng = stream(13, "t", 0);
        let f = planted();
        let spec = f.spec();
        let xs: Vec<_> =
            (0..spec.required_samples()).map(|_| dv(&[0.0, rng.sample(rand_distr::StandardNormal)])).collect();
        let ys: Vec<f64> = xs.iter().map(|x| f.eval(x).unwrap()).collect();
        let fit = fit_family(&xs, &ys, &spec, &FitOptions::default(), &mut rng).unwrap();
        assert!(fit.fitted().unwrap().ambiguous);
    }

    #[test]
    fn too_few_samples() {
        let mut rng = stream(14, "t", 0);
        let spec = planted().spec();
        let xs = vec![dv(&[1.0, 0.0]); 3];
        let err = fit_family(&xs, &[1.0; 3], &spec, &FitOptions::default(), &mut rng).unwrap_err();
        assert_eq!(err, Error::InsufficientSamples { n: 3, needed: 4 });
    }
}
