//! Local GAN with a categorical-mixture prior: the generator input is
//! Gaussian noise concatenated with a uniformly drawn one-hot category.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gradcheck::{compare_with_finite_differences, randomize_biases};
use crate::nn::{
    loss, Activation, Adam, AdamConfig, LayerSpec, Mlp, MlpSpec, Mode, NetworkCheckpoint,
};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::DataMatrix;

/// Generator input layout: `noise_dim` standard-normal coordinates followed
/// by a one-hot block of width `categories`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixturePrior {
    pub noise_dim: usize,
    pub categories: usize,
}

impl MixturePrior {
    pub fn new(noise_dim: usize, categories: usize) -> Result<Self> {
        let prior = Self {
            noise_dim,
            categories,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.categories < 2 {
            return Err(Error::Config(format!(
                "mixture prior needs noise_dim >= 1 and categories >= 2, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.noise_dim + self.categories
    }

    pub fn sample(&self, count: usize, rng: &mut Rng) -> Array2<f64> {
        let mut z = Array2::zeros((count, self.input_width()));
        for mut row in z.rows_mut() {
            for v in row.slice_mut(s![..self.noise_dim]) {
                *v = rng.sample(StandardNormal);
            }
            let u = rng.random_range(0..self.categories);
            row[self.noise_dim + u] = 1.0;
        }
        z
    }
}

/// Draws `count` prior samples from a fresh stream seeded with `seed`.
pub fn sample_prior(prior: &MixturePrior, count: usize, seed: u64) -> Array2<f64> {
    prior.sample(count, &mut rng_from_seed(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Width of the one-hot block; the cluster count when left at zero.
    pub categories: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub batch_norm: bool,
    pub leaky_slope: f64,
    pub output_activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub generator_adam: AdamConfig,
    pub discriminator_adam: AdamConfig,
}

impl Default for GanConfig {
    /// MLP generator/discriminator for 16-feature tabular data.
    fn default() -> Self {
        Self {
            noise_dim: 5,
            categories: 0,
            generator_hidden: vec![256, 256],
            discriminator_hidden: vec![256, 256],
            batch_norm: true,
            leaky_slope: 0.2,
            output_activation: Activation::Sigmoid,
            epochs: 300,
            batch_size: 64,
            generator_adam: AdamConfig::new(6e-4, 0.5, 0.999),
            discriminator_adam: AdamConfig::new(2e-4, 0.5, 0.999),
        }
    }
}

impl GanConfig {
    pub fn prior(&self, k: usize) -> Result<MixturePrior> {
        let categories = if self.categories == 0 {
            k
        } else {
            self.categories
        };
        MixturePrior::new(self.noise_dim, categories)
    }

    pub fn generator_spec(&self, prior: &MixturePrior, data_dim: usize) -> MlpSpec {
        let act = Activation::LeakyRelu {
            slope: self.leaky_slope,
        };
        let mut layers: Vec<LayerSpec> = self
            .generator_hidden
            .iter()
            .map(|&w| LayerSpec::new(w, act, self.batch_norm))
            .collect();
        layers.push(LayerSpec::new(data_dim, self.output_activation, false));
        MlpSpec::new(prior.input_width(), layers)
    }

    pub fn discriminator_spec(&self, data_dim: usize) -> MlpSpec {
        let act = Activation::LeakyRelu {
            slope: self.leaky_slope,
        };
        let mut layers: Vec<LayerSpec> = self
            .discriminator_hidden
            .iter()
            .map(|&w| LayerSpec::new(w, act, self.batch_norm))
            .collect();
        layers.push(LayerSpec::new(1, Activation::Identity, false));
        MlpSpec::new(data_dim, layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("GAN batch size must be at least 2".into()));
        }
        self.generator_adam.validate()?;
        self.discriminator_adam.validate()
    }
}

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanHistory {
    pub discriminator: Vec<f64>,
    pub generator: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub generator: Mlp,
    /// Emits a raw logit; probabilities appear only inside the loss.
    pub discriminator: Mlp,
    pub prior: MixturePrior,
    pub config: GanConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub client_id: usize,
    pub prior: MixturePrior,
    pub generator: NetworkCheckpoint,
    pub discriminator: NetworkCheckpoint,
}

impl GanModel {
    pub fn new(data_dim: usize, k: usize, config: GanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let prior = config.prior(k)?;
        let generator = Mlp::new(
            config.generator_spec(&prior, data_dim),
            derive_seed(seed, 0),
        )?;
        let discriminator = Mlp::new(config.discriminator_spec(data_dim), derive_seed(seed, 1))?;
        Ok(Self {
            generator,
            discriminator,
            prior,
            config,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.discriminator.input_width()
    }

    fn check_data(&self, data: &ArrayView2<f64>) -> Result<()> {
        if data.ncols() != self.data_dim() {
            return Err(Error::Dimension(format!(
                "GAN expects {} features, got {}",
                self.data_dim(),
                data.ncols()
            )));
        }
        if data.nrows() < 2 * self.config.batch_size {
            return Err(Error::Config(format!(
                "{} local samples is fewer than twice the batch size {}",
                data.nrows(),
                self.config.batch_size
            )));
        }
        if let Some((lo, hi)) = self.config.output_activation.output_range() {
            if data.iter().any(|&v| !(lo..=hi).contains(&v)) {
                return Err(Error::Config(format!(
                    "training data must lie in the generator output range [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Alternating 1:1 discriminator/generator minibatch updates with the
    /// non-saturating generator loss.
    pub fn train(&mut self, data: ArrayView2<f64>, seed: u64) -> Result<GanHistory> {
        self.check_data(&data)?;
        let mut history = GanHistory::default();
        if self.config.epochs == 0 {
            return Ok(history);
        }
        let mut rng = rng_from_seed(seed);
        let mut g_opt = Adam::new(self.config.generator_adam)?;
        let mut d_opt = Adam::new(self.config.discriminator_adam)?;
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let b = self.config.batch_size;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let (mut d_sum, mut g_sum, mut steps) = (0.0, 0.0, 0usize);
            for chunk in order.chunks(b).filter(|c| c.len() >= 2) {
                let real = data.select(Axis(0), chunk);
                let (d_loss, g_loss) = self.step(real.view(), &mut g_opt, &mut d_opt, &mut rng)?;
                d_sum += d_loss;
                g_sum += g_loss;
                steps += 1;
            }
            let (d_mean, g_mean) = (d_sum / steps as f64, g_sum / steps as f64);
            if !d_mean.is_finite() || !g_mean.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: format!("GAN losses D = {d_mean}, G = {g_mean}"),
                });
            }
            history.discriminator.push(d_mean);
            history.generator.push(g_mean);
        }
        Ok(history)
    }

    fn step(
        &mut self,
        real: ArrayView2<f64>,
        g_opt: &mut Adam,
        d_opt: &mut Adam,
        rng: &mut Rng,
    ) -> Result<(f64, f64)> {
        let b = real.nrows();

        // Discriminator: real -> 1, generated -> 0.
        let z = self.prior.sample(b, rng);
        let fake = self.generator.forward_train(z.view())?.into_output();
        let real_cache = self.discriminator.forward_train(real)?;
        let (loss_real, grad_real) = loss::bce_with_logits_const(real_cache.output().view(), 1.0)?;
        let fake_cache = self.discriminator.forward_train(fake.view())?;
        let (loss_fake, grad_fake) = loss::bce_with_logits_const(fake_cache.output().view(), 0.0)?;
        let (mut d_grads, _) = self.discriminator.backward(&real_cache, grad_real.view())?;
        let (fake_grads, _) = self.discriminator.backward(&fake_cache, grad_fake.view())?;
        d_grads.add_assign(&fake_grads)?;
        d_opt.step(&mut self.discriminator, &d_grads)?;

        // Generator through the frozen discriminator: generated -> 1.
        let z = self.prior.sample(b, rng);
        let g_cache = self.generator.forward_train(z.view())?;
        let d_cache = self
            .discriminator
            .forward(g_cache.output().view(), Mode::Train)?;
        let (loss_gen, grad_logit) = loss::bce_with_logits_const(d_cache.output().view(), 1.0)?;
        let (_, grad_sample) = self.discriminator.backward(&d_cache, grad_logit.view())?;
        let (g_grads, _) = self.generator.backward(&g_cache, grad_sample.view())?;
        g_opt.step(&mut self.generator, &g_grads)?;

        Ok((loss_real + loss_fake, loss_gen))
    }

    /// `count` synthetic rows from the eval-mode generator.
    pub fn generate(&self, count: usize, seed: u64) -> Result<DataMatrix> {
        if count == 0 {
            return Ok(Array2::zeros((0, self.data_dim())));
        }
        let z = sample_prior(&self.prior, count, seed);
        self.generator.predict(z.view())
    }

    pub fn checkpoint(&self, client_id: usize) -> GanCheckpoint {
        GanCheckpoint {
            client_id,
            prior: self.prior,
            generator: NetworkCheckpoint::from_network(&self.generator)
                .with_tag("client", client_id.to_string())
                .with_tag("role", "generator"),
            discriminator: NetworkCheckpoint::from_network(&self.discriminator)
                .with_tag("client", client_id.to_string())
                .with_tag("role", "discriminator"),
        }
    }
}

/// Trains a copy of `model` on `local_data`.
pub fn train_gan(
    local_data: ArrayView2<f64>,
    model: &GanModel,
    seed: u64,
) -> Result<(GanModel, GanHistory)> {
    let mut trained = model.clone();
    let history = trained.train(local_data, seed)?;
    Ok((trained, history))
}

/// Finite-difference check of the generator gradient of the non-saturating
/// loss `BCE(D(G(z)), 1)`, backpropagated through a frozen discriminator.
pub fn composed_gradient_check(
    generator: &MlpSpec,
    discriminator: &MlpSpec,
    prior: &MixturePrior,
    seed: u64,
) -> Result<f64> {
    let mut g = Mlp::new(generator.clone(), derive_seed(seed, 0))?;
    let mut d = Mlp::new(discriminator.clone(), derive_seed(seed, 1))?;
    randomize_biases(&mut g, derive_seed(seed, 3));
    randomize_biases(&mut d, derive_seed(seed, 4));
    let z = sample_prior(prior, 8, derive_seed(seed, 2));
    let objective = |g: &Mlp| -> Result<f64> {
        let x = g.forward(z.view(), Mode::Train)?.into_output();
        let logits = d.forward(x.view(), Mode::Train)?.into_output();
        Ok(loss::bce_with_logits_const(logits.view(), 1.0)?.0)
    };
    let g_cache = g.forward(z.view(), Mode::Train)?;
    let d_cache = d.forward(g_cache.output().view(), Mode::Train)?;
    let (value, grad_logit) = loss::bce_with_logits_const(d_cache.output().view(), 1.0)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss is {value}")));
    }
    let (_, grad_x) = d.backward(&d_cache, grad_logit.view())?;
    let (analytic, _) = g.backward(&g_cache, grad_x.view())?;
    compare_with_finite_differences(&mut g, &analytic, objective)
}
