use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, orthonormalize};
use crate::moments::Activation;

/// `f(x) = Σ_i v_i σ(w_iᵀx)` with `v ∈ {±1}^k` and rows `w_i` of `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLayerNet {
    pub v: Vec<f64>,
    pub w: DMatrix<f64>,
    pub activation: Activation,
}

/// Singular-value summary of `W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    /// Descending.
    pub singular_values: Vec<f64>,
    pub kappa: f64,
    /// `Π s_i / s_min^k`.
    pub lambda: f64,
    pub frobenius: f64,
}

impl TwoLayerNet {
    pub fn new(v: Vec<f64>, w: DMatrix<f64>, activation: Activation) -> Result<Self> {
        if v.len() != w.nrows() {
            return Err(Error::InvalidInput("sign count differs from row count".into()));
        }
        if v.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::InvalidInput("output signs must be ±1".into()));
        }
        if w.nrows() > w.ncols() {
            return Err(Error::InvalidInput("width exceeds input dimension".into()));
        }
        activation.validate()?;
        Ok(Self { v, w, activation })
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.w.row(i).transpose()
    }

    pub fn eval_view(&self, x: DVectorView<f64>) -> f64 {
        (0..self.width()).map(|i| self.v[i] * self.activation.eval(self.w.row(i).dot(&x.transpose()))).sum()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.eval_view(x.as_view())
    }

    pub fn conditioning(&self) -> Conditioning {
        let mut sv: Vec<f64> = self.w.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let smin = *sv.last().unwrap_or(&0.0);
        let smax = *sv.first().unwrap_or(&0.0);
        let (kappa, lambda) = if smin > 0.0 {
            (smax / smin, sv.iter().map(|s| s / smin).product())
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        Conditioning { singular_values: sv, kappa, lambda, frobenius: self.w.norm() }
    }

    /// Same function with rows in canonical order: rows whose first nonzero coordinate
    /// is positive come first, then lexicographic by coordinates.
    pub fn canonicalized(&self) -> Self {
        let key = |i: usize| {
            let row = self.w.row(i);
            let first = row.iter().find(|v| **v != 0.0).copied().unwrap_or(0.0);
            (first <= 0.0, row.iter().copied().collect::<Vec<f64>>())
        };
        let mut order: Vec<usize> = (0..self.width()).collect();
        order.sort_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then_with(|| {
                ka.1.iter()
                    .zip(&kb.1)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
        });
        self.permuted(&order)
    }

    /// Rows reordered so that row `j` of the result is row `order[j]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut w = DMatrix::zeros(self.width(), self.dim());
        for (j, &i) in order.iter().enumerate() {
            w.set_row(j, &self.w.row(i));
        }
        Self { v: order.iter().map(|&i| self.v[i]).collect(), w, activation: self.activation }
    }

    /// Rescale all rows by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self { v: self.v.clone(), w: &self.w * c, activation: self.activation }
    }

    /// Planted net with orthogonal rows of the given norms.
    pub fn planted_orthogonal<R: Rng + ?Sized>(
        d: usize,
        norms: &[f64],
        signs: &[f64],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let k = norms.len();
        if k > d {
            return Err(Error::InvalidInput("width exceeds input dimension".into()));
        }
        let q = orthonormalize(&gaussian_matrix(rng, d, k));
        let mut w = q.transpose();
        for (i, n) in norms.iter().enumerate() {
            w.row_mut(i).scale_mut(*n);
        }
        Self::new(signs.to_vec(), w, activation)
    }

    /// Planted net `W = U diag(s) Qᵀ` with singular values geometrically spaced in
    /// `[1, kappa]` and Haar-random `U`, `Q`.
    pub fn planted_conditioned<R: Rng + ?Sized>(
        k: usize,
        d: usize,
        kappa: f64,
        signs: &[f64],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if k > d {
            return Err(Error::InvalidInput("width exceeds input dimension".into()));
        }
        let u = orthonormalize(&gaussian_matrix(rng, k, k));
        let q = orthonormalize(&gaussian_matrix(rng, d, k));
        let s = DVector::from_fn(k, |i, _| if k == 1 { 1.0 } else { kappa.powf(i as f64 / (k - 1) as f64) });
        let w = u * DMatrix::from_diagonal(&s) * q.transpose();
        Self::new(signs.to_vec(), w, activation)
    }
}

/// Uniform random ±1 signs.
pub fn random_signs<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Row-wise comparison of a recovered net with a reference, up to row permutation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkMatch {
    /// `perm[i]` is the recovered row matched to reference row `i`.
    pub perm: Vec<usize>,
    /// `‖ŵ_{perm[i]} − w_i‖ / ‖w_i‖`.
    pub row_errors: Vec<f64>,
    pub max_row_error: f64,
    /// `‖Ŵ_perm − W‖_F`.
    pub frobenius_error: f64,
    pub relative_frobenius: f64,
    pub signs_match: bool,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Permutation minimizing the largest relative row error (exhaustive for `k ≤ 7`,
/// greedy otherwise); ties keep the first permutation found.
pub fn match_networks(recovered: &TwoLayerNet, reference: &TwoLayerNet) -> Result<NetworkMatch> {
    let k = reference.width();
    if recovered.width() != k || recovered.dim() != reference.dim() {
        return Err(Error::InvalidInput("network shapes differ".into()));
    }
    let err = |i: usize, j: usize| {
        let r = reference.row(i);
        (recovered.row(j) - &r).norm() / r.norm().max(f64::MIN_POSITIVE)
    };
    let perm = if k <= 7 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for p in permutations(k) {
            let e = (0..k).map(|i| err(i, p[i])).fold(0.0, f64::max);
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                best = Some((e, p));
            }
        }
        best.map(|(_, p)| p).unwrap_or_default()
    } else {
        let mut used = vec![false; k];
        (0..k)
            .map(|i| {
                let j = (0..k).filter(|&j| !used[j]).min_by(|&a, &b| err(i, a).total_cmp(&err(i, b))).unwrap();
                used[j] = true;
                j
            })
            .collect()
    };
    let row_errors: Vec<f64> = (0..k).map(|i| err(i, perm[i])).collect();
    let aligned = recovered.permuted(&perm);
    let frobenius_error = (&aligned.w - &reference.w).norm();
    Ok(NetworkMatch {
        max_row_error: row_errors.iter().cloned().fold(0.0, f64::max),
        relative_frobenius: frobenius_error / reference.w.norm().max(f64::MIN_POSITIVE),
        signs_match: aligned.v == reference.v,
        perm,
        row_errors,
        frobenius_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn eval_matches_loop() {
        let mut rng = stream(1, "net", 0);
        let net = TwoLayerNet::planted_conditioned(3, 5, 2.0, &[1.0, -1.0, 1.0], Activation::Relu, &mut rng).unwrap();
        let x = crate::linalg::gaussian_vector(&mut rng, 5);
        let mut direct = 0.0;
        for i in 0..3 {
            let mut z = 0.0;
            for j in 0..5 {
                z += net.w[(i, j)] * x[j];
            }
            direct += net.v[i] * z.max(0.0);
        }
        assert!((net.eval(&x) - direct).abs() < 1e-12);
    }

    #[test]
    fn conditioning_of_planted() {
        let mut rng = stream(2, "net", 0);
        let net = TwoLayerNet::planted_conditioned(3, 6, 4.0, &[1.0; 3], Activation::Relu, &mut rng).unwrap();
        let c = net.conditioning();
        assert!((c.kappa - 4.0).abs() < 1e-10);
        assert!((c.lambda - 8.0).abs() < 1e-9);
        let orth = TwoLayerNet::planted_orthogonal(6, &[1.0, 1.0], &[1.0, 1.0], Activation::Relu, &mut rng).unwrap();
        assert!((orth.conditioning().kappa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_order_and_match() {
        let w = DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.5, 0.0, 1.0]);
        let net = TwoLayerNet::new(vec![1.0, -1.0, 1.0], w, Activation::Relu).unwrap();
        let c = net.canonicalized();
        assert_eq!(c.w.row(0)[0], 0.0);
        assert_eq!(c.w.row(0)[1], 2.0);
        assert_eq!(c.w.row(2)[0], -1.0);
        let m = match_networks(&c, &net).unwrap();
        assert_eq!(m.max_row_error, 0.0);
        assert!(m.signs_match);
    }
}
