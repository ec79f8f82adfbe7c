use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest lifted tensor `(d+1)^p` that [`PolynomialFamily::lifted`] will build.
pub const LIFTED_CAP: usize = 1 << 20;

/// One rank-k term `λ⟨v, x⟩^degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTerm {
    pub lambda: f64,
    pub v: DVector<f64>,
    pub degree: u32,
}

/// A member of an admissible polynomial family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PolynomialFamily {
    /// `Σ λ_i ⟨v_i, x⟩^{p_i}`.
    RankK { terms: Vec<RankTerm> },
    /// `q(Ux)` with `U ∈ ℝ^{k×d}` and `q` given by one coefficient per monomial of
    /// [`monomials(k, degree)`](monomials).
    QOfUx { u: DMatrix<f64>, degree: u32, coeffs: Vec<f64> },
}

/// Shape of a family, without parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilySpec {
    RankK { dim: usize, degrees: Vec<u32> },
    QOfUx { dim: usize, rank: usize, degree: u32 },
}

/// Exponent vectors in `k` variables with total degree `≤ p`, ordered by total degree
/// and then lexicographically descending (`y₁` before `y₂`).
pub fn monomials(k: usize, p: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == k - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(k, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    for total in 0..=p {
        rec(k, total, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn monomial_value(y: &[f64], exps: &[u32]) -> f64 {
    y.iter().zip(exps).map(|(v, &e)| v.powi(e as i32)).product()
}

impl FamilySpec {
    pub fn dim(&self) -> usize {
        match self {
            FamilySpec::RankK { dim, .. } | FamilySpec::QOfUx { dim, .. } => *dim,
        }
    }

    /// Highest degree of any member.
    pub fn degree(&self) -> u32 {
        match self {
            FamilySpec::RankK { degrees, .. } => degrees.iter().copied().max().unwrap_or(0),
            FamilySpec::QOfUx { degree, .. } => *degree,
        }
    }

    /// Algebraic dimension bound `D`: `dk` for rank-k, `d(k+1)^p` for `q(Ux)`.
    pub fn algebraic_dimension(&self) -> usize {
        match self {
            FamilySpec::RankK { dim, degrees } => dim * degrees.len(),
            FamilySpec::QOfUx { dim, rank, degree } => dim * (rank + 1).pow(*degree),
        }
    }

    /// `2D` generic samples determine a member uniquely.
    pub fn required_samples(&self) -> usize {
        2 * self.algebraic_dimension()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::RankK { dim, degrees } => {
                if *dim == 0 || degrees.is_empty() || degrees.contains(&0) {
                    return Err(Error::InvalidInput("rank-k family needs d ≥ 1 and positive degrees".into()));
                }
            }
            FamilySpec::QOfUx { dim, rank, degree } => {
                if *dim == 0 || *rank == 0 || *degree == 0 {
                    return Err(Error::InvalidInput("q(Ux) family needs positive d, k and p".into()));
                }
            }
        }
        Ok(())
    }

    /// Number of nonlinear parameters (directions or the rows of `U`).
    pub fn nonlinear_len(&self) -> usize {
        match self {
            FamilySpec::RankK { dim, degrees } => dim * degrees.len(),
            FamilySpec::QOfUx { dim, rank, .. } => dim * rank,
        }
    }

    /// Number of linear coefficients given the nonlinear parameters.
    pub fn linear_len(&self) -> usize {
        match self {
            FamilySpec::RankK { degrees, .. } => degrees.len(),
            FamilySpec::QOfUx { rank, degree, .. } => monomials(*rank, *degree).len(),
        }
    }

    /// Basis values at `x` for nonlinear parameters `theta`; the member is the linear
    /// combination of these with the linear coefficients.
    pub fn basis(&self, theta: &[f64], x: &DVector<f64>, monos: &[Vec<u32>]) -> Vec<f64> {
        match self {
            FamilySpec::RankK { dim, degrees } => degrees
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let dot: f64 = theta[i * dim..(i + 1) * dim].iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    dot.powi(p as i32)
                })
                .collect(),
            FamilySpec::QOfUx { dim, rank, .. } => {
                let y: Vec<f64> = (0..*rank)
                    .map(|j| theta[j * dim..(j + 1) * dim].iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                    .collect();
                monos.iter().map(|e| monomial_value(&y, e)).collect()
            }
        }
    }

    /// Member with the given nonlinear and linear parameters.
    pub fn assemble(&self, theta: &[f64], linear: &[f64]) -> PolynomialFamily {
        match self {
            FamilySpec::RankK { dim, degrees } => PolynomialFamily::RankK {
                terms: degrees
                    .iter()
                    .enumerate()
                    .map(|(i, &degree)| RankTerm {
                        lambda: linear[i],
                        v: DVector::from_column_slice(&theta[i * dim..(i + 1) * dim]),
                        degree,
                    })
                    .collect(),
            },
            FamilySpec::QOfUx { dim, rank, degree } => PolynomialFamily::QOfUx {
                u: DMatrix::from_row_slice(*rank, *dim, theta),
                degree: *degree,
                coeffs: linear.to_vec(),
            },
        }
    }
}

/// Dense order-`p` tensor over `ℝ^{d+1}` in row-major index order.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedTensor {
    pub base: usize,
    pub order: u32,
    pub data: Vec<f64>,
}

impl LiftedTensor {
    fn zeros(base: usize, order: u32) -> Result<Self> {
        let size = (base as u128).pow(order);
        if size > LIFTED_CAP as u128 {
            return Err(Error::SizeCap(format!("lifted tensor of size {size}")));
        }
        Ok(Self { base, order, data: vec![0.0; size as usize] })
    }

    /// Adds `scale · f₁ ⊗ … ⊗ f_p`.
    fn add_outer(&mut self, scale: f64, factors: &[DVector<f64>]) {
        let mut acc = vec![scale];
        for f in factors {
            let mut next = Vec::with_capacity(acc.len() * self.base);
            for a in &acc {
                next.extend(f.iter().map(|b| a * b));
            }
            acc = next;
        }
        for (t, a) in self.data.iter_mut().zip(acc) {
            *t += a;
        }
    }

    /// `⟨Θ, x̃^{⊗p}⟩` with `x̃ = (1, x)`.
    pub fn contract(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() + 1 != self.base {
            return Err(Error::InvalidInput(format!("point of dimension {} for lifted base {}", x.len(), self.base)));
        }
        let mut xt = Vec::with_capacity(self.base);
        xt.push(1.0);
        xt.extend(x.iter());
        let mut vals = self.data.clone();
        for _ in 0..self.order {
            vals = vals.chunks(self.base).map(|c| c.iter().zip(&xt).map(|(a, b)| a * b).sum()).collect();
        }
        Ok(vals[0])
    }
}

fn lift(v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len() + 1);
    out.rows_mut(1, v.len()).copy_from(v);
    out
}

fn e0(base: usize) -> DVector<f64> {
    let mut out = DVector::zeros(base);
    out[0] = 1.0;
    out
}

impl PolynomialFamily {
    pub fn dim(&self) -> usize {
        match self {
            PolynomialFamily::RankK { terms } => terms.first().map_or(0, |t| t.v.len()),
            PolynomialFamily::QOfUx { u, .. } => u.ncols(),
        }
    }

    pub fn degree(&self) -> u32 {
        match self {
            PolynomialFamily::RankK { terms } => terms.iter().map(|t| t.degree).max().unwrap_or(0),
            PolynomialFamily::QOfUx { degree, .. } => *degree,
        }
    }

    /// Shape of this member.
    pub fn spec(&self) -> FamilySpec {
        match self {
            PolynomialFamily::RankK { terms } => {
                FamilySpec::RankK { dim: self.dim(), degrees: terms.iter().map(|t| t.degree).collect() }
            }
            PolynomialFamily::QOfUx { u, degree, .. } => {
                FamilySpec::QOfUx { dim: u.ncols(), rank: u.nrows(), degree: *degree }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PolynomialFamily::RankK { terms } => {
                let d = self.dim();
                if terms.is_empty() || terms.iter().any(|t| t.v.len() != d || t.degree == 0) {
                    return Err(Error::InvalidInput(
                        "rank-k terms need a common dimension and positive degrees".into(),
                    ));
                }
            }
            PolynomialFamily::QOfUx { u, degree, coeffs } => {
                let expected = monomials(u.nrows(), *degree).len();
                if coeffs.len() != expected {
                    return Err(Error::InvalidInput(format!("q needs {expected} coefficients, got {}", coeffs.len())));
                }
            }
        }
        self.spec().validate()
    }

    /// Direct evaluation.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point of dimension {} for family of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self {
            PolynomialFamily::RankK { terms } => {
                terms.iter().map(|t| t.lambda * t.v.dot(x).powi(t.degree as i32)).sum()
            }
            PolynomialFamily::QOfUx { u, degree, coeffs } => {
                let y = u * x;
                monomials(u.nrows(), *degree).iter().zip(coeffs).map(|(e, c)| c * monomial_value(y.as_slice(), e)).sum()
            }
        })
    }

    /// Lifted parameter `Θ` with `f(x) = ⟨Θ, x̃^{⊗p}⟩`, `p` the family degree; each
    /// degree-`j` factor is padded with `p − j` copies of `e₀`.
    pub fn lifted(&self) -> Result<LiftedTensor> {
        let d = self.dim();
        let p = self.degree();
        let base = d + 1;
        let mut t = LiftedTensor::zeros(base, p)?;
        match self {
            PolynomialFamily::RankK { terms } => {
                for term in terms {
                    let mut factors = vec![lift(&term.v); term.degree as usize];
                    factors.resize(p as usize, e0(base));
                    t.add_outer(term.lambda, &factors);
                }
            }
            PolynomialFamily::QOfUx { u, degree, coeffs } => {
                let rows: Vec<DVector<f64>> = (0..u.nrows()).map(|j| lift(&u.row(j).transpose())).collect();
                for (e, &c) in monomials(u.nrows(), *degree).iter().zip(coeffs) {
                    let mut factors = Vec::with_capacity(p as usize);
                    for (j, &m) in e.iter().enumerate() {
                        factors.extend(std::iter::repeat_n(rows[j].clone(), m as usize));
                    }
                    factors.resize(p as usize, e0(base));
                    t.add_outer(c, &factors);
                }
            }
        }
        Ok(t)
    }

    /// Rank-k terms: unit directions with `λ` absorbing scale, first nonzero direction
    /// coordinate positive (negating `λ` for odd degrees), sorted by degree then
    /// direction. `q(Ux)` members are returned unchanged.
    pub fn canonical(&self) -> PolynomialFamily {
        match self {
            PolynomialFamily::RankK { terms } => {
                let mut out: Vec<RankTerm> = terms
                    .iter()
                    .map(|t| {
                        let n = t.v.norm();
                        if n == 0.0 || t.lambda == 0.0 {
                            return RankTerm { lambda: 0.0, v: DVector::zeros(t.v.len()), degree: t.degree };
                        }
                        let mut v = &t.v / n;
                        let mut lambda = t.lambda * n.powi(t.degree as i32);
                        if v.iter().find(|c| **c != 0.0).is_some_and(|c| *c < 0.0) {
                            v.neg_mut();
                            if t.degree % 2 == 1 {
                                lambda = -lambda;
                            }
                        }
                        RankTerm { lambda, v, degree: t.degree }
                    })
                    .collect();
                out.sort_by(|a, b| {
                    a.degree.cmp(&b.degree).then_with(|| {
                        a.v.iter()
                            .zip(b.v.iter())
                            .map(|(x, y)| x.total_cmp(y))
                            .find(|o| o.is_ne())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    })
                });
                PolynomialFamily::RankK { terms: out }
            }
            other => other.clone(),
        }
    }

    /// Max absolute evaluation difference over `probes`.
    pub fn max_difference(&self, other: &PolynomialFamily, probes: &[DVector<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in probes {
            worst = worst.max((self.eval(x)? - other.eval(x)?).abs());
        }
        Ok(worst)
    }
}

/// Free-function form of [`PolynomialFamily::eval`].
pub fn eval_family(family: &PolynomialFamily, x: &DVector<f64>) -> Result<f64> {
    family.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_vector;
    use crate::rng::stream;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn rank_one_square() {
        let f = PolynomialFamily::RankK { terms: vec![RankTerm { lambda: 1.0, v: dv(&[1.0, 0.0]), degree: 2 }] };
        assert_eq!(f.eval(&dv(&[3.0, 0.0])).unwrap(), 9.0);
    }

    #[test]
    fn cancelling_terms() {
        let v = dv(&[0.3, -1.2, 0.5]);
        let f = PolynomialFamily::RankK {
            terms: vec![RankTerm { lambda: 1.0, v: v.clone(), degree: 3 }, RankTerm { lambda: -1.0, v, degree: 3 }],
        };
        let mut rng = stream(1, "t", 0);
        for _ in 0..10 {
            assert_eq!(f.eval(&gaussian_vector(&mut rng, 3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn product_of_projections() {
        let u = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let monos = monomials(2, 2);
        let coeffs: Vec<f64> = monos.iter().map(|e| if e == &vec![1, 1] { 1.0 } else { 0.0 }).collect();
        let f = PolynomialFamily::QOfUx { u, degree: 2, coeffs };
        assert_eq!(f.eval(&dv(&[2.0, 5.0, 0.0])).unwrap(), 10.0);
    }

    #[test]
    fn monomial_order_and_count() {
        let m = monomials(2, 2);
        assert_eq!(m, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(monomials(3, 3).len(), 20);
    }

    #[test]
    fn dimension_mismatch() {
        let f = PolynomialFamily::RankK { terms: vec![RankTerm { lambda: 1.0, v: dv(&[1.0, 0.0]), degree: 2 }] };
        assert!(f.eval(&dv(&[1.0])).is_err());
    }

    #[test]
    fn lifted_contraction_matches_eval() {
        let mut rng = stream(2, "t", 0);
        let f = PolynomialFamily::RankK {
            terms: vec![
                RankTerm { lambda: 0.7, v: gaussian_vector(&mut rng, 3), degree: 1 },
                RankTerm { lambda: -1.3, v: gaussian_vector(&mut rng, 3), degree: 3 },
            ],
        };
        let monos = monomials(2, 2);
        let g = PolynomialFamily::QOfUx {
            u: crate::linalg::gaussian_matrix(&mut rng, 2, 3),
            degree: 2,
            coeffs: (0..monos.len()).map(|i| i as f64 - 2.5).collect(),
        };
        for fam in [f, g] {
            let t = fam.lifted().unwrap();
            for _ in 0..20 {
                let x = gaussian_vector(&mut rng, 3);
                let direct = fam.eval(&x).unwrap();
                assert!((t.contract(&x).unwrap() - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn canonical_preserves_function() {
        let mut rng = stream(3, "t", 0);
        let f = PolynomialFamily::RankK {
            terms: vec![
                RankTerm { lambda: 2.0, v: dv(&[-0.5, 1.0]), degree: 3 },
                RankTerm { lambda: -1.0, v: dv(&[-2.0, 0.1]), degree: 2 },
            ],
        };
        let c = f.canonical();
        let PolynomialFamily::RankK { terms } = &c else { unreachable!() };
        assert_eq!(terms[0].degree, 2);
        for t in terms {
            assert!((t.v.norm() - 1.0).abs() < 1e-15 && t.v[0] > 0.0);
        }
        let probes: Vec<_> = (0..50).map(|_| gaussian_vector(&mut rng, 2)).collect();
        assert!(f.max_difference(&c, &probes).unwrap() < 1e-12);
    }

    #[test]
    fn dimension_bounds() {
        assert_eq!(FamilySpec::RankK { dim: 3, degrees: vec![2] }.algebraic_dimension(), 3);
        assert_eq!(FamilySpec::QOfUx { dim: 4, rank: 2, degree: 2 }.algebraic_dimension(), 36);
    }
}
