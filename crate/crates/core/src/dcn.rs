//! Deep clustering network: a stacked autoencoder trained jointly with a
//! K-means objective in its latent space.
//!
//! Loss per sample: `|x - f_d(f_e(x))|^2 + lambda / 2 * |f_e(x) - c_{s}|^2`.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    assign_nearest, kmeans_fit, objective_of, reseed_empty_clusters, update_centroids, KMeansConfig,
};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{load_json, save_json, ArrayBlock};
use crate::nn::{loss, Activation, Adam, AdamConfig, LayerSpec, Mlp, MlpSpec, NetworkCheckpoint};
use crate::rng::{derive_seed, rng_from_seed};
use crate::DataMatrix;

const SHUFFLE_STREAM: u64 = 0x5348;
const CENTROID_STREAM: u64 = 0x4345;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidUpdate {
    /// Centroid = mean of its assigned codes, once per epoch.
    #[default]
    BatchMean,
    /// Per-sample step `c -= (c - z) / count` with counts kept across epochs.
    Online,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcnConfig {
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Batch norm on the hidden layers after the first.
    pub batch_norm: bool,
    pub latent_activation: Activation,
    pub latent_batch_norm: bool,
    pub lambda: f64,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    /// Minibatch size as a fraction of the training set.
    pub batch_fraction: f64,
    pub min_batch_size: usize,
    pub adam: AdamConfig,
    pub centroid_update: CentroidUpdate,
    /// K-means restarts for the initial latent centroids.
    pub init_restarts: usize,
}

impl Default for DcnConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![500, 500, 2000],
            latent_dim: 10,
            batch_norm: true,
            latent_activation: Activation::Identity,
            latent_batch_norm: false,
            lambda: 0.5,
            pretrain_epochs: 100,
            joint_epochs: 100,
            batch_fraction: 0.01,
            min_batch_size: 16,
            adam: AdamConfig::new(2e-3, 0.9, 0.999),
            centroid_update: CentroidUpdate::BatchMean,
            init_restarts: 10,
        }
    }
}

impl DcnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be a non-negative number, got {}",
                self.lambda
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "batch fraction must lie in (0, 1], got {}",
                self.batch_fraction
            )));
        }
        if self.min_batch_size < 2 {
            return Err(Error::Config(
                "minimum batch size must be at least 2".into(),
            ));
        }
        self.adam.validate()
    }

    /// `batch_fraction * n`, at least `min_batch_size`, at most `n`.
    pub fn batch_size(&self, n: usize) -> usize {
        ((self.batch_fraction * n as f64).round() as usize)
            .max(self.min_batch_size)
            .min(n)
    }

    /// The first hidden layer never has batch norm.
    pub fn encoder_spec(&self, input_dim: usize) -> MlpSpec {
        let mut layers: Vec<LayerSpec> = self
            .encoder_hidden
            .iter()
            .enumerate()
            .map(|(i, &w)| LayerSpec::new(w, Activation::Relu, self.batch_norm && i > 0))
            .collect();
        layers.push(LayerSpec::new(
            self.latent_dim,
            self.latent_activation,
            self.latent_batch_norm,
        ));
        MlpSpec::new(input_dim, layers)
    }

    /// Mirror of the encoder with a linear output layer.
    pub fn decoder_spec(&self, output_dim: usize) -> MlpSpec {
        let mut layers: Vec<LayerSpec> = self
            .encoder_hidden
            .iter()
            .rev()
            .map(|&w| LayerSpec::new(w, Activation::Relu, self.batch_norm))
            .collect();
        layers.push(LayerSpec::new(output_dim, Activation::Identity, false));
        MlpSpec::new(self.latent_dim, layers)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DcnModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// `k × latent_dim`
    pub centroids: Array2<f64>,
    pub lambda: f64,
    pub config: DcnConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DcnHistory {
    /// Mean minibatch reconstruction loss per pretraining epoch.
    pub reconstruction: Vec<f64>,
    /// Full-data joint objective (per-sample mean) after each joint epoch.
    pub joint: Vec<f64>,
}

impl DcnModel {
    pub fn new(input_dim: usize, k: usize, config: DcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 clusters, got {k}")));
        }
        let encoder = Mlp::new(config.encoder_spec(input_dim), derive_seed(seed, 0))?;
        let decoder = Mlp::new(config.decoder_spec(input_dim), derive_seed(seed, 1))?;
        Ok(Self {
            encoder,
            decoder,
            centroids: Array2::zeros((k, config.latent_dim)),
            lambda: config.lambda,
            config,
        })
    }

    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_width()
    }

    fn check_data(&self, data: &ArrayView2<f64>) -> Result<()> {
        if data.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "data has {} features, encoder expects {}",
                data.ncols(),
                self.input_dim()
            )));
        }
        if data.nrows() < self.k().max(2) {
            return Err(Error::Config(format!(
                "{} rows are too few for k = {}",
                data.nrows(),
                self.k()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "training data contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Latent codes in eval mode.
    pub fn encode(&self, data: ArrayView2<f64>) -> Result<DataMatrix> {
        self.encoder.predict(data)
    }

    pub fn reconstruct(&self, data: ArrayView2<f64>) -> Result<DataMatrix> {
        self.decoder.predict(self.encode(data)?.view())
    }

    /// Nearest centroid in latent space; ties go to the lowest index.
    pub fn assign(&self, data: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(assign_nearest(self.encode(data)?.view(), self.centroids.view()).0)
    }

    /// Per-sample mean of the joint loss over `data`, in eval mode.
    pub fn joint_objective(&self, data: ArrayView2<f64>, assignment: &[usize]) -> Result<f64> {
        let codes = self.encode(data)?;
        let recon = self.decoder.predict(codes.view())?;
        let (rec, _) = loss::reconstruction(recon.view(), data)?;
        let dist =
            objective_of(codes.view(), self.centroids.view(), assignment) / data.nrows() as f64;
        Ok(rec + 0.5 * self.lambda * dist)
    }

    /// One pass over shuffled minibatches. With `target` set, each row is
    /// pulled toward its assigned centroid.
    fn network_epoch(
        &mut self,
        data: ArrayView2<f64>,
        order: &[usize],
        target: Option<&[usize]>,
        enc_opt: &mut Adam,
        dec_opt: &mut Adam,
    ) -> Result<f64> {
        let b = self.config.batch_size(data.nrows());
        let (mut sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(b).filter(|c| c.len() >= 2) {
            let x = data.select(Axis(0), chunk);
            let enc_cache = self.encoder.forward_train(x.view())?;
            let dec_cache = self.decoder.forward_train(enc_cache.output().view())?;
            let (mut batch_loss, grad_out) =
                loss::reconstruction(dec_cache.output().view(), x.view())?;
            let (dec_grads, mut grad_code) = self.decoder.backward(&dec_cache, grad_out.view())?;
            if let Some(assignment) = target.filter(|_| self.lambda != 0.0) {
                let codes = enc_cache.output();
                let scale = self.lambda / chunk.len() as f64;
                let mut dist = 0.0;
                for (r, &i) in chunk.iter().enumerate() {
                    let c = self.centroids.row(assignment[i]);
                    for (j, g) in grad_code.row_mut(r).iter_mut().enumerate() {
                        let diff = codes[[r, j]] - c[j];
                        dist += diff * diff;
                        *g += scale * diff;
                    }
                }
                batch_loss += 0.5 * self.lambda * dist / chunk.len() as f64;
            }
            let (enc_grads, _) = self.encoder.backward(&enc_cache, grad_code.view())?;
            dec_opt.step(&mut self.decoder, &dec_grads)?;
            enc_opt.step(&mut self.encoder, &enc_grads)?;
            sum += batch_loss;
            steps += 1;
        }
        Ok(sum / steps.max(1) as f64)
    }

    /// Reconstruction-only training for `pretrain_epochs` epochs.
    pub fn pretrain(&mut self, data: ArrayView2<f64>, seed: u64) -> Result<Vec<f64>> {
        self.check_data(&data)?;
        let mut rng = rng_from_seed(derive_seed(seed, SHUFFLE_STREAM));
        let mut enc_opt = Adam::new(self.config.adam)?;
        let mut dec_opt = Adam::new(self.config.adam)?;
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut history = Vec::with_capacity(self.config.pretrain_epochs);
        for epoch in 0..self.config.pretrain_epochs {
            order.shuffle(&mut rng);
            let l = self.network_epoch(data, &order, None, &mut enc_opt, &mut dec_opt)?;
            if !l.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: format!("reconstruction loss {l}"),
                });
            }
            log::debug!("sae epoch {epoch}: {l:.6}");
            history.push(l);
        }
        Ok(history)
    }

    /// Initializes centroids by K-means on the current codes, then alternates
    /// network, assignment and centroid steps for `joint_epochs` epochs.
    /// Returns the joint objective after each epoch.
    pub fn train_joint(&mut self, data: ArrayView2<f64>, seed: u64) -> Result<Vec<f64>> {
        self.check_data(&data)?;
        let k = self.k();
        let codes = self.encode(data)?;
        let mut init = KMeansConfig::new(k, derive_seed(seed, CENTROID_STREAM));
        init.restarts = self.config.init_restarts.max(1);
        let fit = kmeans_fit(codes.view(), &init)?;
        self.centroids = fit.centroids;
        let mut assignment = fit.assignment;
        let mut counts = vec![0usize; k];

        let mut rng = rng_from_seed(derive_seed(seed, SHUFFLE_STREAM));
        let mut enc_opt = Adam::new(self.config.adam)?;
        let mut dec_opt = Adam::new(self.config.adam)?;
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut history = Vec::with_capacity(self.config.joint_epochs);
        for epoch in 0..self.config.joint_epochs {
            order.shuffle(&mut rng);
            let l =
                self.network_epoch(data, &order, Some(&assignment), &mut enc_opt, &mut dec_opt)?;
            if !l.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: format!("joint loss {l}"),
                });
            }
            let codes = self.encode(data)?;
            assignment = assign_nearest(codes.view(), self.centroids.view()).0;
            match self.config.centroid_update {
                CentroidUpdate::BatchMean => {
                    update_centroids(codes.view(), &mut assignment, &mut self.centroids)
                }
                CentroidUpdate::Online => {
                    for &i in &order {
                        let j = assignment[i];
                        counts[j] += 1;
                        let step = 1.0 / counts[j] as f64;
                        let mut c = self.centroids.row_mut(j);
                        c.zip_mut_with(&codes.row(i), |c, &z| *c -= step * (*c - z));
                    }
                    reseed_empty_clusters(codes.view(), &mut assignment, &mut self.centroids);
                }
            }
            if self.centroids.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    what: "non-finite centroid".into(),
                });
            }
            let objective = self.joint_objective(data, &assignment)?;
            if !objective.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: format!("joint objective {objective}"),
                });
            }
            log::debug!("dcn epoch {epoch}: {objective:.6}");
            history.push(objective);
        }
        Ok(history)
    }

    /// Pretraining followed by joint training.
    pub fn fit(&mut self, data: ArrayView2<f64>, seed: u64) -> Result<DcnHistory> {
        let reconstruction = self.pretrain(data, derive_seed(seed, 0))?;
        let joint = self.train_joint(data, derive_seed(seed, 1))?;
        Ok(DcnHistory {
            reconstruction,
            joint,
        })
    }

    pub fn checkpoint(&self) -> DcnCheckpoint {
        DcnCheckpoint {
            encoder: NetworkCheckpoint::from_network(&self.encoder).with_tag("role", "encoder"),
            decoder: NetworkCheckpoint::from_network(&self.decoder).with_tag("role", "decoder"),
            centroids: ArrayBlock::from_matrix("centroids", &self.centroids),
            lambda: self.lambda,
            config: self.config.clone(),
        }
    }
}

pub fn pretrain_sae(
    data: ArrayView2<f64>,
    model: &DcnModel,
    seed: u64,
) -> Result<(DcnModel, Vec<f64>)> {
    let mut trained = model.clone();
    let history = trained.pretrain(data, seed)?;
    Ok((trained, history))
}

pub fn dcn_train(
    data: ArrayView2<f64>,
    model: &DcnModel,
    seed: u64,
) -> Result<(DcnModel, Vec<f64>)> {
    let mut trained = model.clone();
    let history = trained.train_joint(data, seed)?;
    Ok((trained, history))
}

/// Everything a client needs to label its data, plus the decoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcnCheckpoint {
    pub encoder: NetworkCheckpoint,
    pub decoder: NetworkCheckpoint,
    pub centroids: ArrayBlock,
    pub lambda: f64,
    pub config: DcnConfig,
}

impl DcnCheckpoint {
    pub fn to_model(&self) -> Result<DcnModel> {
        let encoder = self.encoder.to_network()?;
        let decoder = self.decoder.to_network()?;
        let centroids = self.centroids.to_matrix()?;
        if centroids.ncols() != encoder.output_width()
            || decoder.input_width() != encoder.output_width()
        {
            return Err(Error::Dimension(
                "encoder, decoder and centroid widths disagree".into(),
            ));
        }
        Ok(DcnModel {
            encoder,
            decoder,
            centroids,
            lambda: self.lambda,
            config: self.config.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}
