//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nnrl_core::moments::MomentIndices;

fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// One entry of the multivariate Hermite tensor, written out per order.
pub fn hermite_entry(x: &[f64], idx: &[usize]) -> f64 {
    match *idx {
        [a] => x[a],
        [a, b] => x[a] * x[b] - delta(a, b),
        [a, b, c] => x[a] * x[b] * x[c] - x[a] * delta(b, c) - x[b] * delta(a, c) - x[c] * delta(a, b),
        [a, b, c, e] => {
            x[a] * x[b] * x[c] * x[e]
                - x[a] * x[b] * delta(c, e)
                - x[a] * x[c] * delta(b, e)
                - x[a] * x[e] * delta(b, c)
                - x[b] * x[c] * delta(a, e)
                - x[b] * x[e] * delta(a, c)
                - x[c] * x[e] * delta(a, b)
                + delta(a, b) * delta(c, e)
                + delta(a, c) * delta(b, e)
                + delta(a, e) * delta(b, c)
        }
        _ => panic!("order {} not covered", idx.len()),
    }
}

fn tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &base in sizes {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..base).map(move |i| {
                    let mut u = t.clone();
                    u.push(i);
                    u
                })
            })
            .collect();
    }
    out
}

/// `(1/n) Σ_s y_s Σ_{i_1..i_j} H(x_s)_{i_1..i_j} Π_m modes[m][i_m, r_m]`, looping over every
/// full index tuple; the result is indexed by the output tuple `(r_1, …, r_j)` in row-major order.
pub fn naive_moment(x: &DMatrix<f64>, y: &[f64], modes: &[DMatrix<f64>]) -> Vec<f64> {
    let d = x.nrows();
    let j = modes.len();
    let outs = tuples(&modes.iter().map(|m| m.ncols()).collect::<Vec<_>>());
    let ins = tuples(&vec![d; j]);
    let mut result = vec![0.0; outs.len()];
    for s in 0..y.len() {
        let xs: Vec<f64> = x.column(s).iter().copied().collect();
        for i in &ins {
            let h = y[s] * hermite_entry(&xs, i);
            if h == 0.0 {
                continue;
            }
            for (slot, r) in result.iter_mut().zip(&outs) {
                let mut w = h;
                for m in 0..j {
                    w *= modes[m][(i[m], r[m])];
                }
                *slot += w;
            }
        }
    }
    result.iter().map(|v| v / y.len() as f64).collect()
}

fn with_alpha(fixed: Vec<DMatrix<f64>>, alpha: &DVector<f64>, order: usize) -> Vec<DMatrix<f64>> {
    let a = DMatrix::from_column_slice(alpha.len(), 1, alpha.as_slice());
    let mut modes = fixed;
    while modes.len() < order {
        modes.push(a.clone());
    }
    modes
}

/// Leading `(k, k)` block of a row-major tensor whose trailing modes have size 1.
fn square(data: &[f64], k: usize) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(k, k, &data[..k * k]);
    (&m + m.transpose()) * 0.5
}

pub struct NaiveMoments {
    pub p2: DMatrix<f64>,
    pub q1: DVector<f64>,
    pub q2: DMatrix<f64>,
    /// Symmetrized, `[a][b][c]`.
    pub r3: Vec<Vec<Vec<f64>>>,
}

pub fn naive_moments(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: &DVector<f64>,
    v: &DMatrix<f64>,
    idx: &MomentIndices,
) -> NaiveMoments {
    let d = x.nrows();
    let k = v.ncols();
    let eye = DMatrix::<f64>::identity(d, d);
    let p2 = naive_moment(x, y, &with_alpha(vec![eye.clone(), eye.clone()], alpha, idx.j2));
    let q1 = naive_moment(x, y, &with_alpha(vec![eye], alpha, idx.l1));
    let q2 = naive_moment(x, y, &with_alpha(vec![v.clone(), v.clone()], alpha, idx.l2));
    let r3 = naive_moment(x, y, &with_alpha(vec![v.clone(), v.clone(), v.clone()], alpha, idx.j3));
    let raw = |a: usize, b: usize, c: usize| r3[(a * k + b) * k + c];
    let r3 = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    (0..k)
                        .map(|c| {
                            (raw(a, b, c) + raw(a, c, b) + raw(b, a, c) + raw(b, c, a) + raw(c, a, b) + raw(c, b, a))
                                / 6.0
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    NaiveMoments { p2: square(&p2, d), q1: DVector::from_column_slice(&q1[..d]), q2: square(&q2, k), r3 }
}

/// `(v ⊗̃ I)_{abc} = v_a δ_bc + v_b δ_ac + v_c δ_ab`.
pub fn naive_tilde_vector(v: &DVector<f64>, a: usize, b: usize, c: usize) -> f64 {
    v[a] * delta(b, c) + v[b] * delta(a, c) + v[c] * delta(a, b)
}

/// `(M ⊗̃ I)_{abce}` for symmetric `M`: the six placements of `M` in two slots and `δ` in the others.
pub fn naive_tilde_matrix(m: &DMatrix<f64>, a: usize, b: usize, c: usize, e: usize) -> f64 {
    m[(a, b)] * delta(c, e)
        + m[(a, c)] * delta(b, e)
        + m[(a, e)] * delta(b, c)
        + m[(b, c)] * delta(a, e)
        + m[(b, e)] * delta(a, c)
        + m[(c, e)] * delta(a, b)
}

/// Spectral norm of a symmetric matrix through its eigenvalues.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Prints one PASS/FAIL line; passing needs `passed ≥ required` and `extra`.
pub fn report(name: &str, passed: usize, total: usize, required: usize, extra: bool, detail: &str) -> bool {
    let ok = passed >= required && extra;
    println!("{} {name}: {passed}/{total} (need {required}) {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}
