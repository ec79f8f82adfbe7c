mod common;

use nalgebra::DVector;
use proptest::prelude::*;

use common::{hermite_entry, naive_moments, naive_tilde_vector};
use nnrl_core::linalg::{gaussian_matrix, gaussian_vector, orthonormalize};
use nnrl_core::moments::{
    activation_moment_coefficients, estimate_p2, estimate_q1, estimate_q2, estimate_r3, hermite_tensor,
    outer_tilde_vector, reference_moments, Activation, MomentIndices, DEFAULT_ZERO_TOL,
};
use nnrl_core::rng::stream;

const ACTS: [Activation; 4] =
    [Activation::Relu, Activation::SquaredRelu, Activation::Power { degree: 3 }, Activation::LeakyRelu { slope: 0.3 }];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn contracted_estimators_agree_with_both_oracles(seed in any::<u64>(), d in 2usize..=4, k in 1usize..=2, a in 0usize..4) {
        let k = k.min(d);
        let mut rng = stream(seed, "prop-moments", 0);
        let idx = MomentIndices::select(&ACTS[a], DEFAULT_ZERO_TOL).unwrap();
        let x = gaussian_matrix(&mut rng, d, 16);
        let y: Vec<f64> = gaussian_vector(&mut rng, 16).iter().copied().collect();
        let alpha = gaussian_vector(&mut rng, d);
        let v = orthonormalize(&gaussian_matrix(&mut rng, d, k));
        let naive = naive_moments(&x, &y, &alpha, &v, &idx);
        let dense = reference_moments(x.as_view(), &y, &alpha, &v, &idx).unwrap();
        let p2 = estimate_p2(x.as_view(), &y, &alpha, &idx).unwrap();
        let q1 = estimate_q1(x.as_view(), &y, &alpha, &idx).unwrap();
        let q2 = estimate_q2(x.as_view(), &y, &alpha, Some(&v), &idx).unwrap();
        let r3 = estimate_r3(x.as_view(), &y, &alpha, &v, &idx).unwrap();
        prop_assert!((&p2 - &naive.p2).amax() < 1e-10);
        prop_assert!((&p2 - &dense.p2).amax() < 1e-10);
        prop_assert!((&q1 - &naive.q1).amax() < 1e-10);
        prop_assert!((&q1 - &dense.q1).amax() < 1e-10);
        prop_assert!((&q2 - &naive.q2).amax() < 1e-10);
        prop_assert!((&q2 - &dense.q2).amax() < 1e-10);
        prop_assert!(r3.tensor.sub(&dense.r3).max_abs() < 1e-10);
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    prop_assert!((r3.tensor.get(i, j, l) - naive.r3[i][j][l]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dense_hermite_matches_explicit_formula(xs in prop::collection::vec(-3.0f64..3.0, 1..=3), j in 1usize..=4) {
        let d = xs.len();
        let dense = hermite_tensor(&xs, j).unwrap();
        for (flat, value) in dense.iter().enumerate() {
            let mut rem = flat;
            let mut idx = vec![0; j];
            for pos in (0..j).rev() {
                idx[pos] = rem % d;
                rem /= d;
            }
            prop_assert!((value - hermite_entry(&xs, &idx)).abs() < 1e-12);
        }
    }

    #[test]
    fn tilde_vector_is_symmetric_and_matches(vs in prop::collection::vec(-2.0f64..2.0, 1..=5)) {
        let v = DVector::from_vec(vs);
        let t = outer_tilde_vector(&v);
        let d = v.len();
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    prop_assert_eq!(t.get(a, b, c), t.get(b, c, a));
                    prop_assert!((t.get(a, b, c) - naive_tilde_vector(&v, a, b, c)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn coefficients_scale_homogeneously(s in 0.2f64..3.0, a in 0usize..3) {
        let act = ACTS[a];
        let unit = activation_moment_coefficients(&act, 1.0).unwrap();
        let scaled = activation_moment_coefficients(&act, s).unwrap();
        let factor = s.powi(act.p() as i32 + 1);
        for j in 1..=4 {
            prop_assert!((scaled.m(j) - factor * unit.m(j)).abs() < 1e-8 * (1.0 + unit.m(j).abs()));
        }
    }
}

/// Half-line Gaussian moments `E[z^m 1{z > 0}]` in closed form.
fn half_moment(m: u32) -> f64 {
    let inv = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    match m {
        0 => 0.5,
        1 => inv,
        2 => 0.5,
        3 => 2.0 * inv,
        4 => 1.5,
        5 => 8.0 * inv,
        _ => unreachable!(),
    }
}

#[test]
fn relu_coefficients_match_closed_forms() {
    let c = activation_moment_coefficients(&Activation::Relu, 1.0).unwrap();
    let expected = [
        half_moment(2),
        half_moment(3) - half_moment(1),
        half_moment(4) - 3.0 * half_moment(2),
        half_moment(5) - 6.0 * half_moment(3) + 3.0 * half_moment(1),
    ];
    for j in 1..=4 {
        assert!((c.m(j) - expected[j - 1]).abs() < 1e-9, "m_{j}: {} vs {}", c.m(j), expected[j - 1]);
    }
    let idx = MomentIndices::select(&Activation::Relu, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!((idx.j2, idx.j3), (2, 4));
}
