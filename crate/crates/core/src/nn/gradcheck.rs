//! Central finite-difference verification of analytic gradients.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::loss;
use super::network::{Gradients, Mlp, Mode};
use super::spec::MlpSpec;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    BceWithLogits,
}

/// `|a - n| / max(|a| + |n|, 1e-6)` maximized over all coordinates.
pub fn max_relative_error(analytic: &[&[f64]], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.iter().zip(n.iter()))
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Central differences of `objective` with respect to every trainable
/// parameter of `net`. The network is restored before returning.
pub fn numeric_gradients<F>(net: &mut Mlp, step: f64, mut objective: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&Mlp) -> Result<f64>,
{
    let sizes: Vec<usize> = net.param_blocks().iter().map(|b| b.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (block, &len) in sizes.iter().enumerate() {
        let mut grads = vec![0.0; len];
        for (i, g) in grads.iter_mut().enumerate() {
            let original = net.param_blocks()[block][i];
            net.param_blocks_mut()[block][i] = original + step;
            let plus = objective(net)?;
            net.param_blocks_mut()[block][i] = original - step;
            let minus = objective(net)?;
            net.param_blocks_mut()[block][i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numerical(
                    "non-finite loss during finite differencing".into(),
                ));
            }
            *g = (plus - minus) / (2.0 * step);
        }
        out.push(grads);
    }
    Ok(out)
}

fn evaluate(
    net: &Mlp,
    x: &Array2<f64>,
    targets: &Array2<f64>,
    kind: LossKind,
) -> Result<(f64, Array2<f64>)> {
    let out = net.forward(x.view(), Mode::Train)?.into_output();
    match kind {
        LossKind::Mse => loss::mse(out.view(), targets.view()),
        LossKind::BceWithLogits => loss::bce_with_logits(out.view(), targets.view()),
    }
}

/// Replaces the zero initial biases with small Gaussian values. With zero
/// biases, a row whose ReLU inputs are all zero puts the next pre-activation
/// exactly on a kink, where central differences are meaningless.
pub fn randomize_biases(net: &mut Mlp, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for layer in net.layers_mut() {
        layer
            .bias
            .mapv_inplace(|_| 0.1 * rng.sample::<f64, _>(StandardNormal));
    }
}

/// Builds a randomly initialized network (random biases) from `spec`, evaluates `kind` on a
/// random batch in train mode, and returns the worst relative deviation
/// between backpropagated and central-difference gradients.
pub fn gradient_check(spec: &MlpSpec, kind: LossKind, seed: u64) -> Result<f64> {
    const BATCH: usize = 8;
    let mut net = Mlp::new(spec.clone(), derive_seed(seed, 0))?;
    randomize_biases(&mut net, derive_seed(seed, 2));
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let x = Array2::from_shape_simple_fn((BATCH, spec.input_width), || rng.sample(StandardNormal));
    let targets = match kind {
        LossKind::Mse => Array2::from_shape_simple_fn((BATCH, spec.output_width()), || {
            rng.sample(StandardNormal)
        }),
        LossKind::BceWithLogits => {
            Array2::from_shape_simple_fn((BATCH, spec.output_width()), || {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            })
        }
    };

    let (value, grad_out) = evaluate(&net, &x, &targets, kind)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss is {value}")));
    }
    let cache = net.forward(x.view(), Mode::Train)?;
    let (analytic, _) = net.backward(&cache, grad_out.view())?;
    let numeric = numeric_gradients(&mut net, DEFAULT_STEP, |n| {
        Ok(evaluate(n, &x, &targets, kind)?.0)
    })?;
    Ok(max_relative_error(&analytic.blocks(), &numeric))
}

/// Compares analytic gradients with central differences for an arbitrary
/// scalar objective over `net`.
pub fn compare_with_finite_differences<F>(
    net: &mut Mlp,
    analytic: &Gradients,
    objective: F,
) -> Result<f64>
where
    F: FnMut(&Mlp) -> Result<f64>,
{
    let numeric = numeric_gradients(net, DEFAULT_STEP, objective)?;
    Ok(max_relative_error(&analytic.blocks(), &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};

    fn tiny(bn: bool, out: Activation) -> MlpSpec {
        MlpSpec::new(
            4,
            vec![
                LayerSpec::new(6, Activation::leaky_relu(), bn),
                LayerSpec::new(5, Activation::Tanh, bn),
                LayerSpec::new(2, out, false),
            ],
        )
    }

    #[test]
    fn mse_gradients_match_finite_differences() {
        for seed in 0..5 {
            let err =
                gradient_check(&tiny(false, Activation::Identity), LossKind::Mse, seed).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn bce_gradients_match_finite_differences() {
        for seed in 0..5 {
            let err = gradient_check(
                &tiny(false, Activation::Identity),
                LossKind::BceWithLogits,
                seed,
            )
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences() {
        for seed in 0..5 {
            let err =
                gradient_check(&tiny(true, Activation::Sigmoid), LossKind::Mse, seed).unwrap();
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn relative_error_floor_ignores_tiny_values() {
        let a = [1e-12];
        let n = vec![vec![-1e-12]];
        assert!(max_relative_error(&[&a], &n) < 1e-5);
    }
}
