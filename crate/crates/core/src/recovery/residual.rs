use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::linalg::least_squares;

fn features(x: DMatrixView<f64>, s: usize, degree: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let d = x.nrows();
    if degree >= 1 {
        out.extend(x.column(s).iter());
    }
    if degree >= 2 {
        for a in 0..d {
            for b in a..d {
                out.push(x[(a, s)] * x[(b, s)]);
            }
        }
    }
}

/// Number of monomials of degree at most `degree ≤ 2` in `d` variables.
pub fn feature_count(d: usize, degree: usize) -> usize {
    match degree {
        0 => 1,
        1 => 1 + d,
        _ => 1 + d + d * (d + 1) / 2,
    }
}

/// Labels minus their least-squares fit on monomials of degree `≤ degree` (at most 2),
/// fitted on the non-truncated samples; truncated samples keep label 0.
///
/// A Hermite integrand of order `j` is orthogonal to every polynomial of degree `< j`
/// under the Gaussian, so with `degree < j` the expectation of the moment estimator is
/// unchanged while the variance contributed by the low-degree part of the labels is
/// removed.
pub fn residualize(x: DMatrixView<f64>, y: &[f64], truncated: &[bool], degree: usize) -> Vec<f64> {
    let degree = degree.min(2);
    let m = feature_count(x.nrows(), degree);
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    let mut phi = Vec::with_capacity(m);
    let mut count = 0usize;
    for s in 0..y.len() {
        if truncated[s] {
            continue;
        }
        count += 1;
        features(x, s, degree, &mut phi);
        let f = DVector::from_column_slice(&phi);
        gram.syger(1.0, &f, &f, 1.0);
        rhs.axpy(y[s], &f, 1.0);
    }
    if count == 0 {
        return y.to_vec();
    }
    gram.fill_upper_triangle_with_lower_triangle();
    let (beta, _) = least_squares(&gram, &rhs);
    (0..y.len())
        .map(|s| {
            if truncated[s] {
                0.0
            } else {
                features(x, s, degree, &mut phi);
                y[s] - phi.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>()
            }
        })
        .collect()
}
