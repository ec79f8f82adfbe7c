use proptest::prelude::*;

use nnrl_core::mdp::{exact_dp_solve, Mdp, DEFAULT_DP_CAP};
use nnrl_core::rl::{telescoping_bounds, top_two_gap, PlantedNetMdp, PlantedNetSpec};
use nnrl_core::rng::stream;

#[test]
fn telescoping_bounds_frozen() {
    // per-level ε/H = 0.1; slack = max(0, 2·0.01 − 0.1) + max(0, 2·0.2 − 0.1) = 0.3.
    let b = telescoping_bounds(&[0.01, 0.2], 0.2);
    assert!((b[0] - 0.5).abs() < 1e-15);
    assert!((b[1] - 0.4).abs() < 1e-15);
}

#[test]
fn top_two_gap_frozen() {
    assert_eq!(top_two_gap(&[1.0, 3.0, 2.0]), 1.0);
    assert_eq!(top_two_gap(&[2.0, 2.0]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn planted_q_is_the_optimal_q(seed in any::<u64>(), h in 1usize..4) {
        let spec = PlantedNetSpec { horizon: h, dim: 4, width: 2, candidates: 5, ..Default::default() };
        let mdp = PlantedNetMdp::generate(&spec, &mut stream(seed, "prop-planted", 0)).unwrap();
        let sol = exact_dp_solve(&mdp, DEFAULT_DP_CAP).unwrap();
        for level in 1..=h {
            for s in 0..mdp.num_states() {
                for (i, a) in mdp.candidates(level, s).unwrap().iter().enumerate() {
                    let planted = mdp.planted_value(level, s, a);
                    prop_assert!((sol.q[level - 1][s][i] - planted).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn telescoping_bounds_are_monotone(errors in prop::collection::vec(0.0f64..0.5, 1..5), eps in 0.01f64..1.0) {
        let b = telescoping_bounds(&errors, eps);
        prop_assert!(b.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(b.iter().all(|x| *x >= 0.0));
    }
}
