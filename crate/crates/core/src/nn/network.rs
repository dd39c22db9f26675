use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::spec::{Activation, MlpSpec};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const BATCH_NORM_EPSILON: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated by [`Mlp::forward_train`].
    Train,
    /// Running statistics; pure function of parameters and input.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: BATCH_NORM_MOMENTUM,
            epsilon: BATCH_NORM_EPSILON,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
}

/// Parameters of a feed-forward network built from an [`MlpSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug)]
struct BatchNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    pre_activation: Array2<f64>,
    output: Array2<f64>,
    batch_norm: Option<BatchNormCache>,
}

/// Intermediates of one forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.layers.last().expect("non-empty network").output
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.layers.pop().expect("non-empty network").output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Parameter gradients laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    /// Flat views in the same order as [`Mlp::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    /// Accumulates `other` into `self`.
    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Dimension(
                "gradient sets have different depth".into(),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weight.dim() != b.weight.dim() || a.bias.len() != b.bias.len() {
                return Err(Error::Dimension("gradient shapes differ".into()));
            }
            a.weight += &b.weight;
            a.bias += &b.bias;
            match (&mut a.gamma, &b.gamma, &mut a.beta, &b.beta) {
                (Some(ga), Some(gb), Some(ba), Some(bb)) => {
                    *ga += gb;
                    *ba += bb;
                }
                (None, None, None, None) => {}
                _ => {
                    return Err(Error::Dimension(
                        "batch-norm gradient layout differs".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .into_iter()
            .flat_map(|b| b.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut fan_in = spec.input_width;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for ls in &spec.layers {
            let limit = (6.0 / (fan_in + ls.width) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((ls.width, fan_in), || {
                rng.random_range(-limit..limit)
            });
            layers.push(DenseLayer {
                weight,
                bias: Array1::zeros(ls.width),
                activation: ls.activation,
                batch_norm: ls.batch_norm.then(|| BatchNorm::new(ls.width)),
            });
            fan_in = ls.width;
        }
        Ok(Self { spec, layers })
    }

    /// Assembles a network from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: MlpSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::Dimension(format!(
                "spec has {} layers, got {}",
                spec.layers.len(),
                layers.len()
            )));
        }
        let mut fan_in = spec.input_width;
        for (i, (l, ls)) in layers.iter().zip(&spec.layers).enumerate() {
            if l.weight.dim() != (ls.width, fan_in) || l.bias.len() != ls.width {
                return Err(Error::Dimension(format!(
                    "layer {i} shape disagrees with spec"
                )));
            }
            if l.activation != ls.activation || l.batch_norm.is_some() != ls.batch_norm {
                return Err(Error::Dimension(format!(
                    "layer {i} kind disagrees with spec"
                )));
            }
            if let Some(bn) = &l.batch_norm {
                let w = ls.width;
                if bn.gamma.len() != w
                    || bn.beta.len() != w
                    || bn.running_mean.len() != w
                    || bn.running_var.len() != w
                {
                    return Err(Error::Dimension(format!("layer {i} batch-norm shape")));
                }
                if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::Numerical(format!(
                        "layer {i} running variance must be positive"
                    )));
                }
            }
            fan_in = ls.width;
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    /// Mutable flat views over every trainable block: per layer `weight`,
    /// `bias`, then `gamma`, `beta` when batch-normalized.
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &l.batch_norm {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        out
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_width {
            return Err(Error::Dimension(format!(
                "network expects {} input columns, got {}",
                self.spec.input_width,
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Dimension("empty batch".into()));
        }
        Ok(())
    }

    /// Forward pass that records everything needed by [`Mlp::backward`].
    /// Never mutates the network; see [`Mlp::forward_train`].
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut input = x.to_owned();
        for layer in &self.layers {
            let mut z = input.dot(&layer.weight.t());
            z += &layer.bias;
            let bn_cache = layer
                .batch_norm
                .as_ref()
                .map(|bn| normalize(&mut z, bn, mode));
            let act = layer.activation;
            let output = z.mapv(|v| act.apply(v));
            caches.push(LayerCache {
                input,
                pre_activation: z,
                output: output.clone(),
                batch_norm: bn_cache,
            });
            input = output;
        }
        Ok(ForwardCache {
            mode,
            layers: caches,
        })
    }

    /// Train-mode forward that also folds batch statistics into the running
    /// statistics.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        let cache = self.forward(x, Mode::Train)?;
        self.update_running_stats(&cache);
        Ok(cache)
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(bc)) = (&mut layer.batch_norm, &lc.batch_norm) {
                let b = lc.input.nrows() as f64;
                let unbias = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
                let m = bn.momentum;
                Zip::from(&mut bn.running_mean)
                    .and(&bc.batch_mean)
                    .for_each(|r, &v| *r = (1.0 - m) * *r + m * v);
                Zip::from(&mut bn.running_var)
                    .and(&bc.batch_var)
                    .for_each(|r, &v| {
                        *r = ((1.0 - m) * *r + m * v * unbias).max(f64::MIN_POSITIVE)
                    });
            }
        }
    }

    /// Eval-mode output without retaining intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if let Some(bn) = &layer.batch_norm {
                normalize(&mut z, bn, Mode::Eval);
            }
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            h = z;
        }
        Ok(h)
    }

    /// Backpropagates `grad_output` (dLoss/dOutput) through the cached pass.
    /// Returns parameter gradients and dLoss/dInput.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::Internal(
                "cache was produced by a different network".into(),
            ));
        }
        let out = cache.output();
        if grad_output.dim() != out.dim() {
            return Err(Error::Dimension(format!(
                "output gradient {:?} vs output {:?}",
                grad_output.dim(),
                out.dim()
            )));
        }
        let mut grad = grad_output.to_owned();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            if lc.input.ncols() != layer.weight.ncols() || lc.output.ncols() != layer.weight.nrows()
            {
                return Err(Error::Internal(
                    "cache shape does not match parameters".into(),
                ));
            }
            let act = layer.activation;
            Zip::from(&mut grad)
                .and(&lc.pre_activation)
                .and(&lc.output)
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));

            let (dz, gamma, beta) = match (&layer.batch_norm, &lc.batch_norm) {
                (Some(bn), Some(bc)) => {
                    let dbeta = grad.sum_axis(Axis(0));
                    let dgamma = (&grad * &bc.normalized).sum_axis(Axis(0));
                    let mut dxhat = grad;
                    dxhat *= &bn.gamma;
                    let dz = match cache.mode {
                        Mode::Train => {
                            let b = dxhat.nrows() as f64;
                            let sum_dxhat = dxhat.sum_axis(Axis(0));
                            let sum_dxhat_xhat = (&dxhat * &bc.normalized).sum_axis(Axis(0));
                            let mut dz = dxhat;
                            Zip::from(dz.rows_mut()).and(bc.normalized.rows()).for_each(
                                |mut row, xhat| {
                                    Zip::from(&mut row)
                                        .and(&xhat)
                                        .and(&sum_dxhat)
                                        .and(&sum_dxhat_xhat)
                                        .and(&bc.inv_std)
                                        .for_each(|d, &xh, &s1, &s2, &is| {
                                            *d = is / b * (b * *d - s1 - xh * s2);
                                        });
                                },
                            );
                            dz
                        }
                        Mode::Eval => {
                            let mut dz = dxhat;
                            dz *= &bc.inv_std;
                            dz
                        }
                    };
                    (dz, Some(dgamma), Some(dbeta))
                }
                (None, None) => (grad, None, None),
                _ => return Err(Error::Internal("batch-norm cache mismatch".into())),
            };
            let weight = dz.t().dot(&lc.input);
            let bias = dz.sum_axis(Axis(0));
            grad = dz.dot(&layer.weight);
            grads.push(LayerGradients {
                weight,
                bias,
                gamma,
                beta,
            });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, grad))
    }
}

fn normalize(z: &mut Array2<f64>, bn: &BatchNorm, mode: Mode) -> BatchNormCache {
    let (mean, var) = match mode {
        Mode::Train => {
            let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
            let var = z.var_axis(Axis(0), 0.0);
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
    Zip::from(z.rows_mut()).for_each(|mut row| {
        Zip::from(&mut row)
            .and(&mean)
            .and(&inv_std)
            .for_each(|v, &m, &s| *v = (*v - m) * s);
    });
    let normalized = z.clone();
    Zip::from(z.rows_mut()).for_each(|mut row| {
        Zip::from(&mut row)
            .and(&bn.gamma)
            .and(&bn.beta)
            .for_each(|v, &g, &b| *v = g * *v + b);
    });
    BatchNormCache {
        normalized,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::nn::spec::LayerSpec;

    fn spec_16_256_256_1() -> MlpSpec {
        MlpSpec::new(
            16,
            vec![
                LayerSpec::new(256, Activation::leaky_relu(), true),
                LayerSpec::new(256, Activation::leaky_relu(), true),
                LayerSpec::new(1, Activation::Identity, false),
            ],
        )
    }

    #[test]
    fn init_shapes_follow_spec() {
        let net = Mlp::new(spec_16_256_256_1(), 7).unwrap();
        let shapes: Vec<_> = net.layers().iter().map(|l| l.weight.dim()).collect();
        assert_eq!(shapes, vec![(256, 16), (256, 256), (1, 256)]);
        for l in net.layers() {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            if let Some(bn) = &l.batch_norm {
                assert!(bn.gamma.iter().all(|&g| g == 1.0));
                assert!(bn.beta.iter().all(|&b| b == 0.0));
                assert!(bn.running_mean.iter().all(|&m| m == 0.0));
                assert!(bn.running_var.iter().all(|&v| v == 1.0));
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::new(spec_16_256_256_1(), 7).unwrap();
        let b = Mlp::new(spec_16_256_256_1(), 7).unwrap();
        assert_eq!(a, b);
        let limit = (6.0 / (16.0 + 256.0_f64)).sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= limit));
        assert_ne!(a, Mlp::new(spec_16_256_256_1(), 8).unwrap());
    }

    #[test]
    fn zero_width_is_a_configuration_error() {
        let spec = MlpSpec::new(4, vec![LayerSpec::new(0, Activation::Relu, false)]);
        assert!(matches!(Mlp::new(spec, 1), Err(Error::Config(_))));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(3, vec![LayerSpec::new(3, Activation::Identity, false)]);
        let mut net = Mlp::new(spec, 0).unwrap();
        net.layers_mut()[0].weight = Array2::eye(3);
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        let y = net.forward(x.view(), Mode::Train).unwrap().into_output();
        assert_eq!(y, x);
    }

    #[test]
    fn sigmoid_outputs_are_open_unit_interval() {
        let spec = MlpSpec::new(4, vec![LayerSpec::new(5, Activation::Sigmoid, false)]);
        let mut net = Mlp::new(spec, 3).unwrap();
        net.layers_mut()[0].weight.mapv_inplace(|w| w * 1e4);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - 3.0) * (j as f64 + 1.0));
        let y = net.predict(x.view()).unwrap();
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn eval_forward_is_pure() {
        let mut net = Mlp::new(spec_16_256_256_1(), 1).unwrap();
        let x = Array2::from_shape_fn((9, 16), |(i, j)| ((i * 16 + j) as f64).sin());
        net.forward_train(x.view()).unwrap();
        let a = net.forward(x.view(), Mode::Eval).unwrap().into_output();
        let b = net.forward(x.view(), Mode::Eval).unwrap().into_output();
        assert_eq!(a, b);
        assert_eq!(a, net.predict(x.view()).unwrap());
    }

    #[test]
    fn train_forward_updates_running_stats() {
        let mut net = Mlp::new(spec_16_256_256_1(), 1).unwrap();
        let before = net.clone();
        let x = Array2::from_shape_fn((9, 16), |(i, j)| ((i * 16 + j) as f64).cos() + 2.0);
        net.forward_train(x.view()).unwrap();
        let bn = net.layers()[0].batch_norm.as_ref().unwrap();
        assert_ne!(
            &bn.running_mean,
            &before.layers()[0].batch_norm.as_ref().unwrap().running_mean
        );
        assert!(bn.running_var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Mlp::new(spec_16_256_256_1(), 1).unwrap();
        let x = Array2::<f64>::zeros((2, 15));
        assert!(matches!(
            net.forward(x.view(), Mode::Eval),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let net = Mlp::new(spec_16_256_256_1(), 2).unwrap();
        let x = Array2::from_shape_fn((5, 16), |(i, j)| (i as f64) - (j as f64) * 0.1);
        let cache = net.forward(x.view(), Mode::Train).unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros((5, 1)).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_layers_rejects_mismatched_shapes() {
        let net = Mlp::new(spec_16_256_256_1(), 2).unwrap();
        let mut layers = net.layers().to_vec();
        layers[1].bias = Array1::zeros(3);
        assert!(Mlp::from_layers(net.spec().clone(), layers).is_err());
    }
}
