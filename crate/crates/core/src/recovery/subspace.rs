use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, orthonormalize, random_unit};

/// Result of the two-branch shifted power method.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceEstimate {
    /// `d×k`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// Scores `|v_jᵀP̂₂v_j|` of all candidate columns, descending.
    pub scores: Vec<f64>,
    /// Difference between the `k`-th and `(k+1)`-th scores.
    pub gap: f64,
    pub iterations: usize,
    /// Branch (1 for `C·I + P̂₂`, 2 for `C·I − P̂₂`) of each selected column.
    pub branches: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOptions {
    /// Minimum number of power iterations `T`.
    pub iterations: usize,
    /// Iterations continue past `T` until the iterate moves less than `tol`, up to
    /// `max_factor·T` in total.
    pub tol: f64,
    pub max_factor: usize,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self { iterations: 50, tol: 1e-14, max_factor: 50 }
    }
}

/// Spectral norm of a symmetric matrix by power iteration on `P²`.
pub fn symmetric_spectral_norm<R: Rng + ?Sized>(p: &DMatrix<f64>, rng: &mut R) -> f64 {
    let d = p.nrows();
    if d == 0 {
        return 0.0;
    }
    let p2 = p * p;
    let mut x = random_unit(rng, d);
    let mut est = 0.0;
    for _ in 0..1000 {
        let y = &p2 * &x;
        let n = y.norm();
        if n == 0.0 {
            return 0.0;
        }
        let next = n.sqrt();
        x = y / n;
        if (next - est).abs() <= 1e-15 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Two shifted orthogonal iterations on `C·I + P̂₂` and `C·I − P̂₂` with
/// `C = 3‖P̂₂‖`, then the `k` columns of largest `|v_jᵀP̂₂v_j|` across both branches
/// (ties: branch 1, then lower column), with branch-2 picks orthogonalized against the
/// branch-1 picks.
pub fn estimate_subspace<R: Rng + ?Sized>(
    p2: &DMatrix<f64>,
    k: usize,
    opts: &SubspaceOptions,
    rng: &mut R,
) -> Result<SubspaceEstimate> {
    let d = p2.nrows();
    if p2.ncols() != d || k == 0 || k > d {
        return Err(Error::InvalidInput(format!("subspace of rank {k} from a {d}×{} matrix", p2.ncols())));
    }
    let c = 3.0 * symmetric_spectral_norm(p2, rng);
    let shift = DMatrix::<f64>::identity(d, d) * c;
    let (a1, a2) = (&shift + p2, &shift - p2);
    let mut v1 = orthonormalize(&gaussian_matrix(rng, d, k));
    let mut v2 = orthonormalize(&gaussian_matrix(rng, d, k));
    let cap = opts.iterations.max(1) * opts.max_factor.max(1);
    let mut iterations = 0;
    while iterations < cap {
        let n1 = orthonormalize(&(&a1 * &v1));
        let n2 = orthonormalize(&(&a2 * &v2));
        let moved = (&n1 - &v1).amax().max((&n2 - &v2).amax());
        v1 = n1;
        v2 = n2;
        iterations += 1;
        if iterations >= opts.iterations && moved <= opts.tol {
            break;
        }
    }
    let score = |v: &DMatrix<f64>, j: usize| {
        let col = v.column(j);
        (col.transpose() * p2 * col)[(0, 0)].abs()
    };
    let mut cands: Vec<(f64, u8, usize)> =
        (0..k).map(|j| (score(&v1, j), 1u8, j)).chain((0..k).map(|j| (score(&v2, j), 2u8, j))).collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let scores: Vec<f64> = cands.iter().map(|c| c.0).collect();
    let gap = scores[k - 1] - scores.get(k).copied().unwrap_or(0.0);
    let chosen = &cands[..k];
    let pick = |branch: u8, v: &DMatrix<f64>| {
        let cols: Vec<_> = chosen.iter().filter(|c| c.1 == branch).map(|c| v.column(c.2).into_owned()).collect();
        if cols.is_empty() {
            None
        } else {
            Some(DMatrix::from_columns(&cols))
        }
    };
    let b1 = pick(1, &v1);
    let b2 = pick(2, &v2).map(|m| match &b1 {
        Some(q) => orthonormalize(&(&m - q * (q.transpose() * &m))),
        None => m,
    });
    let v = match (b1, b2) {
        (Some(a), Some(b)) => {
            let cols: Vec<_> = a.column_iter().chain(b.column_iter()).map(|c| c.into_owned()).collect();
            DMatrix::from_columns(&cols)
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("k ≥ 1 columns chosen"),
    };
    let mut branches: Vec<u8> = chosen.iter().map(|c| c.1).collect();
    branches.sort();
    Ok(SubspaceEstimate { v, scores, gap, iterations, branches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gram_deviation, subspace_distance};
    use crate::rng::stream;
    use nalgebra::DVector;

    fn diag(vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vals.to_vec()))
    }

    fn basis(d: usize, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(d, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 })
    }

    #[test]
    fn diagonal_top_two() {
        let mut rng = stream(3, "sub", 0);
        let est = estimate_subspace(&diag(&[1.0, 0.5, 0.0, 0.0]), 2, &SubspaceOptions::default(), &mut rng).unwrap();
        assert!(gram_deviation(&est.v) < 1e-12);
        assert!(subspace_distance(&est.v, &basis(4, &[0, 1])) <= 1e-8);
    }

    #[test]
    fn mixed_sign_branches() {
        let mut rng = stream(4, "sub", 0);
        let est = estimate_subspace(&diag(&[1.0, -0.8, 0.01, 0.0]), 2, &SubspaceOptions::default(), &mut rng).unwrap();
        assert_eq!(est.branches, vec![1, 2]);
        assert!(subspace_distance(&est.v, &basis(4, &[0, 1])) <= 1e-6);
        assert!(gram_deviation(&est.v) < 1e-12);
    }

    #[test]
    fn spectral_norm_by_power_iteration() {
        let mut rng = stream(5, "sub", 0);
        assert!((symmetric_spectral_norm(&diag(&[0.3, -2.0, 1.0]), &mut rng) - 2.0).abs() < 1e-10);
    }
}
