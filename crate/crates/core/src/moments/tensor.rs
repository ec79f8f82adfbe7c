use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Dense cubical 3-tensor, row-major `(a, b, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim * dim] }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dim);
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    t.data[(a * dim + b) * dim + c] = f(a, b, c);
                }
            }
        }
        t
    }

    /// `Σ_i w_i u_i⊗u_i⊗u_i`.
    pub fn from_components(weights: &[f64], comps: &[DVector<f64>]) -> Self {
        let dim = comps.first().map_or(0, |u| u.len());
        Self::from_fn(dim, |a, b, c| weights.iter().zip(comps).map(|(w, u)| w * u[a] * u[b] * u[c]).sum())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    #[inline]
    pub fn add_at(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.dim + b) * self.dim + c] += v;
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &Tensor3) {
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn sub(&self, other: &Tensor3) -> Tensor3 {
        Tensor3 { dim: self.dim, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Average over the six index permutations.
    pub fn symmetrized(&self) -> Tensor3 {
        Tensor3::from_fn(self.dim, |a, b, c| {
            (self.get(a, b, c)
                + self.get(a, c, b)
                + self.get(b, a, c)
                + self.get(b, c, a)
                + self.get(c, a, b)
                + self.get(c, b, a))
                / 6.0
        })
    }

    /// Largest entrywise gap to the symmetrized tensor.
    pub fn asymmetry(&self) -> f64 {
        self.sub(&self.symmetrized()).max_abs()
    }

    /// `T(I, u, u)`.
    pub fn apply_vv(&self, u: &DVector<f64>) -> DVector<f64> {
        let d = self.dim;
        DVector::from_fn(d, |a, _| {
            let mut s = 0.0;
            for b in 0..d {
                for c in 0..d {
                    s += self.get(a, b, c) * u[b] * u[c];
                }
            }
            s
        })
    }

    /// `T(u, u, u)`.
    pub fn apply_vvv(&self, u: &DVector<f64>) -> f64 {
        self.apply_vv(u).dot(u)
    }
}

/// Dense cubical 4-tensor, row-major `(a, b, c, e)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim.pow(4)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn offset(&self, a: usize, b: usize, c: usize, e: usize) -> usize {
        ((a * self.dim + b) * self.dim + c) * self.dim + e
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, e: usize) -> f64 {
        self.data[self.offset(a, b, c, e)]
    }

    #[inline]
    pub fn add_at(&mut self, a: usize, b: usize, c: usize, e: usize, v: f64) {
        let o = self.offset(a, b, c, e);
        self.data[o] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
