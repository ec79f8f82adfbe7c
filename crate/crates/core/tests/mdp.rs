use proptest::prelude::*;
use rand::Rng as _;

use nnrl_core::mdp::{exact_dp_solve, policy_values, AccessMode, Mdp, SimulatorAccess, TabularMdp, DEFAULT_DP_CAP};
use nnrl_core::rng::stream;
use nnrl_core::Error;

/// Random deterministic instance; rewards in `[0, 1)` keep returns within the horizon.
fn random_instance(seed: u64, horizon: usize, states: usize, actions: usize) -> TabularMdp {
    let mut rng = stream(seed, "prop-mdp", 0);
    let table: Vec<Vec<Vec<(usize, f64)>>> = (0..horizon)
        .map(|_| {
            (0..states).map(|_| (0..actions).map(|_| (rng.random_range(0..states), rng.random())).collect()).collect()
        })
        .collect();
    TabularMdp::deterministic_scalar(horizon, states, |h, s, i| Some(table[h - 1][s][i]), actions).unwrap()
}

/// Best open-loop return from the initial state by enumerating every action sequence.
fn brute_force_value(mdp: &TabularMdp) -> f64 {
    fn go(mdp: &TabularMdp, h: usize, s: usize) -> f64 {
        if h > mdp.horizon() {
            return 0.0;
        }
        mdp.candidates(h, s)
            .unwrap()
            .iter()
            .map(|a| {
                let o = &mdp.outcomes(h, s, a).unwrap()[0];
                o.reward + go(mdp, h + 1, o.next_state)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
    go(mdp, 1, mdp.initial_state())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dynamic_programming_matches_enumeration(seed in any::<u64>(), h in 1usize..4, m in 1usize..4, a in 1usize..4) {
        let mdp = random_instance(seed, h, m, a);
        let sol = exact_dp_solve(&mdp, DEFAULT_DP_CAP).unwrap();
        let s0 = mdp.initial_state();
        prop_assert!((sol.v[0][s0] - brute_force_value(&mdp)).abs() < 1e-12);
        let pv = policy_values(&mdp, &sol.policy, DEFAULT_DP_CAP).unwrap();
        for (vs, ps) in sol.v.iter().zip(&pv.v) {
            for (x, y) in vs.iter().zip(ps) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn online_access_refuses_addressed_queries() {
    let mdp = random_instance(1, 2, 2, 2);
    let access = SimulatorAccess::new(&mdp, AccessMode::Online);
    let a = mdp.candidates(2, 1).unwrap()[0].clone();
    let err = access.generative_query(2, 1, &a, &mut stream(0, "q", 0)).unwrap_err();
    assert!(matches!(err, Error::WrongMode { .. }));
    assert_eq!(access.total_queries(), 0);
}

#[test]
fn generative_queries_are_counted_per_level() {
    let mdp = random_instance(2, 3, 2, 2);
    let access = SimulatorAccess::new(&mdp, AccessMode::Generative);
    let mut rng = stream(0, "q", 0);
    for h in 1..=3 {
        for _ in 0..h {
            let a = mdp.candidates(h, 0).unwrap()[1].clone();
            access.generative_query(h, 0, &a, &mut rng).unwrap();
        }
    }
    assert_eq!(access.counts(), vec![1, 2, 3]);
    assert_eq!(access.total_queries(), 6);
}
