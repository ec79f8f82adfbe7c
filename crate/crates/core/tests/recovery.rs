use nalgebra::DVector;
use proptest::prelude::*;

use nnrl_core::linalg::{gaussian_matrix, orthonormalize};
use nnrl_core::moments::{default_radius, Activation, NoiseModel, SampleBatch, Tensor3};
use nnrl_core::recovery::{
    empirical_loss_and_gradient, match_networks, random_signs, tensor_decompose, TensorPowerOptions, TwoLayerNet,
};
use nnrl_core::rng::stream;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn planted_net_is_a_zero_of_the_noiseless_loss(seed in any::<u64>(), d in 2usize..6, k in 1usize..3) {
        let k = k.min(d);
        let mut rng = stream(seed, "prop-loss", 0);
        let signs = random_signs(k, &mut rng);
        let net = TwoLayerNet::planted_conditioned(k, d, 2.0, &signs, Activation::SquaredRelu, &mut rng).unwrap();
        let batch = SampleBatch::generate(d, 64, default_radius(d), NoiseModel::Noiseless, &mut rng, |x| net.eval_view(x));
        let (loss, grad) = empirical_loss_and_gradient(&net, &batch).unwrap();
        prop_assert!(loss.abs() < 1e-24);
        prop_assert!(grad.amax() < 1e-12);
    }

    #[test]
    fn matching_is_permutation_invariant(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = stream(seed, "prop-match", 0);
        let signs = random_signs(k, &mut rng);
        let net = TwoLayerNet::planted_conditioned(k, 6, 2.0, &signs, Activation::Relu, &mut rng).unwrap();
        let order: Vec<usize> = (0..k).rev().collect();
        let m = match_networks(&net.permuted(&order), &net).unwrap();
        prop_assert!(m.frobenius_error < 1e-14);
        prop_assert!(m.signs_match);
        for (i, p) in m.perm.iter().enumerate() {
            prop_assert_eq!(*p, k - 1 - i);
        }
    }

    #[test]
    fn orthogonal_tensor_is_decomposed(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = stream(seed, "prop-tensor", 0);
        let q = orthonormalize(&gaussian_matrix(&mut rng, 4, k));
        let weights: Vec<f64> = (0..k).map(|i| 1.0 + i as f64).collect();
        let comps: Vec<DVector<f64>> = (0..k).map(|i| q.column(i).into_owned()).collect();
        let t = Tensor3::from_components(&weights, &comps);
        let dec = tensor_decompose(&t, k, &TensorPowerOptions::default(), &mut rng).unwrap();
        prop_assert!(dec.relative_residual < 1e-8);
        for c in &dec.components {
            let best = comps.iter().map(|u| u.dot(&c.vector).abs()).fold(0.0, f64::max);
            prop_assert!(best > 1.0 - 1e-8);
        }
        let mut found: Vec<f64> = dec.components.iter().map(|c| c.weight).collect();
        found.sort_by(f64::total_cmp);
        for (a, b) in found.iter().zip(&weights) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn loss_matches_hand_computed_value() {
    // One sample, one unit: L = (v·relu(wᵀx) − y)² / 2 = (2 − 0.5)² / 2.
    let net =
        TwoLayerNet::new(vec![1.0], nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), Activation::Relu).unwrap();
    let x = nalgebra::DMatrix::from_column_slice(2, 1, &[1.5, 0.5]);
    let batch = SampleBatch::new(x, vec![0.5], vec![false], 10.0, NoiseModel::Noiseless).unwrap();
    let (loss, grad) = empirical_loss_and_gradient(&net, &batch).unwrap();
    assert!((loss - 1.125).abs() < 1e-15);
    assert!((grad[(0, 0)] - 2.25).abs() < 1e-15);
    assert!((grad[(0, 1)] - 0.75).abs() < 1e-15);
}
