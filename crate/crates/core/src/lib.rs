//! Simulation framework for privacy-preserving federated deep clustering.
//!
//! Clients train local GANs and upload synthetic samples; the server fits a
//! deep clustering network on the pooled synthetic data and broadcasts the
//! encoder and centroids back for local assignment. k-FED and federated
//! fuzzy c-means baselines, non-IID partitioning, device failures, metrics
//! and the synthetic-sample privacy ratio are included.

pub mod clustering;
pub mod config;
pub mod data;
pub mod dcn;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod gan;
pub mod nn;
pub mod parallel;
pub mod privacy;
pub mod rng;

pub use config::{ExperimentConfig, PartitionScheme};
pub use data::{load_dataset, DatasetSource, LabeledDataset};
pub use dcn::{DcnConfig, DcnModel};
pub use error::{Error, Result};
pub use federation::{FederatedPartition, FederatedRunResult, Method, PipelineConfig};
pub use gan::{GanConfig, GanModel};

/// Row-major `n × d` sample matrix.
pub type DataMatrix = ndarray::Array2<f64>;
