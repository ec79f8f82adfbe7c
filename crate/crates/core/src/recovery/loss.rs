use nalgebra::DMatrix;

use super::net::TwoLayerNet;
use crate::error::{Error, Result};
use crate::moments::SampleBatch;

/// `L_n(W) = (1/2n) Σ_s (Σ_i v_i σ(w_iᵀx_s) − y_s)²` over the non-truncated samples,
/// with its gradient in `W`. The activation derivative at a kink is 0.
pub fn empirical_loss_and_gradient(net: &TwoLayerNet, batch: &SampleBatch) -> Result<(f64, DMatrix<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.dim() != net.dim() {
        return Err(Error::InvalidInput("batch and network dimensions differ".into()));
    }
    let n = batch.truncated.iter().filter(|t| !**t).count();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let act = net.activation;
    let z = &net.w * &batch.x;
    let mut coef = DMatrix::zeros(net.width(), batch.len());
    let mut total = 0.0;
    for s in 0..batch.len() {
        if batch.truncated[s] {
            continue;
        }
        let col = z.column(s);
        let resid = (0..net.width()).map(|i| net.v[i] * act.eval(col[i])).sum::<f64>() - batch.y[s];
        total += resid * resid;
        for i in 0..net.width() {
            coef[(i, s)] = resid * net.v[i] * act.derivative(col[i]);
        }
    }
    let grad = coef * batch.x.transpose() / n as f64;
    Ok((total / (2.0 * n as f64), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{Activation, NoiseModel};
    use crate::rng::stream;
    use nalgebra::DVector;

    #[test]
    fn interpolating_net_has_zero_loss() {
        let mut rng = stream(1, "loss", 0);
        let net = TwoLayerNet::planted_orthogonal(5, &[1.0, 0.7], &[1.0, -1.0], Activation::Relu, &mut rng).unwrap();
        let batch = SampleBatch::generate(5, 500, 100.0, NoiseModel::Noiseless, &mut rng, |x| net.eval_view(x));
        let (l, g) = empirical_loss_and_gradient(&net, &batch).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.norm() <= 1e-10);
    }

    #[test]
    fn single_sample_closed_form() {
        let w = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        let net = TwoLayerNet::new(vec![1.0], w, Activation::Relu).unwrap();
        let x = DVector::from_vec(vec![0.5, 1.0, 0.5]);
        let batch =
            SampleBatch::new(DMatrix::from_columns(&[x.clone()]), vec![1.0], vec![false], 10.0, NoiseModel::Noiseless)
                .unwrap();
        let (l, g) = empirical_loss_and_gradient(&net, &batch).unwrap();
        let pre = 2.0;
        assert!((l - 0.5 * (pre - 1.0f64).powi(2)).abs() < 1e-15);
        assert!((g.row(0).transpose() - x * (pre - 1.0)).norm() < 1e-15);
    }
}
