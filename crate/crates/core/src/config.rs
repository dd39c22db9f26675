//! Experiment description, read from TOML.
//!
//! ```toml
//! name = "pendigits"
//! dataset = "data/pendigits.csv"   # or "builtin:blobs2"
//! m = 10
//! p = [0.0, 1.0]
//! rates = [0.0, 0.3]
//! methods = ["kmeans", "kfed", "ppfcgan"]
//! seeds = [1, 2, 3]
//! output = "results/pendigits"
//!
//! [pipeline.dcn]
//! lambda = 0.5
//! ```
//!
//! Relative `dataset` and `output` paths resolve against the directory of
//! the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetSource;
use crate::error::{Error, Result};
use crate::federation::{Method, PipelineConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    /// Own-cluster draws with level `p`.
    #[default]
    NonIid,
    /// Fixed two-client tails/cores split; `p` is ignored.
    ToyAdversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: String,
    /// Expected class count; checked against the data when given.
    #[serde(default)]
    pub k: Option<usize>,
    /// Client count; the class count when unset.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_rates")]
    pub rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub partition: PartitionScheme,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

fn default_name() -> String {
    "experiment".to_string()
}

fn default_p() -> Vec<f64> {
    vec![0.0]
}

fn default_rates() -> Vec<f64> {
    vec![0.0]
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses and validates a config file, resolving relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSource::Csv(p) = DatasetSource::parse(&self.dataset) {
            if p.is_relative() {
                self.dataset = base.join(p).to_string_lossy().into_owned();
            }
        }
        if self.output.is_relative() {
            self.output = base.join(&self.output);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn dataset_source(&self) -> DatasetSource {
        DatasetSource::parse(&self.dataset)
    }

    pub fn has_federated_methods(&self) -> bool {
        self.methods.iter().any(|m| !m.is_centralized())
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!(
                "invalid experiment name {:?}",
                self.name
            )));
        }
        if self.has_federated_methods() {
            if self.p.is_empty() || self.rates.is_empty() {
                return Err(Error::Config(
                    "federated methods need at least one p and one rate".into(),
                ));
            }
            if let Some(&bad) = self.p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Config(format!("p = {bad} is outside [0, 1]")));
            }
            if let Some(&bad) = self.rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
                return Err(Error::Config(format!("rate = {bad} is outside [0, 1)")));
            }
        }
        if self.m == Some(0) {
            return Err(Error::Config("m must be positive".into()));
        }
        if self.partition == PartitionScheme::ToyAdversarial && self.m.is_some_and(|m| m != 2) {
            return Err(Error::Config(
                "the adversarial toy split has exactly 2 clients".into(),
            ));
        }
        self.pipeline.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        dataset = "builtin:blobs2"
        methods = ["kmeans", "ppfcgan_seq"]
        seeds = [1, 2]
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.p, vec![0.0]);
        assert_eq!(c.rates, vec![0.0]);
        assert_eq!(c.methods, vec![Method::Kmeans, Method::PpfcganSeq]);
        assert_eq!(c.pipeline, PipelineConfig::default());
        assert_eq!(c.pipeline.dcn.encoder_hidden, vec![500, 500, 2000]);
        assert_eq!(c.pipeline.gan.batch_size, 64);
    }

    #[test]
    fn nested_overrides() {
        let text = format!("{MINIMAL}\n[pipeline.dcn]\nlambda = 1.5\n[pipeline.gan]\nepochs = 7\n");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c.pipeline.dcn.lambda, 1.5);
        assert_eq!(c.pipeline.gan.epochs, 7);
        assert_eq!(c.pipeline.gan.noise_dim, 5);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = [
            "dataset = \"builtin:blobs2\"\nmethods = []\nseeds = [1]",
            "dataset = \"builtin:blobs2\"\nmethods = [\"kmeans\"]\nseeds = []",
            "dataset = \"builtin:blobs2\"\nmethods = [\"kfed\"]\nseeds = [1]\np = [1.5]",
            "dataset = \"builtin:blobs2\"\nmethods = [\"kfed\"]\nseeds = [1]\nrates = [1.0]",
            "dataset = \"builtin:blobs2\"\nmethods = [\"kfed\"]\nseeds = [1]\npartition = \"toy_adversarial\"\nm = 3",
        ];
        for text in bad {
            let c = ExperimentConfig::from_toml(text).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{text}");
        }
        assert!(ExperimentConfig::from_toml("dataset = 1").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
        assert!(
            ExperimentConfig::from_toml("dataset = \"x\"\nmethods = [\"dec\"]\nseeds = [1]")
                .is_err()
        );
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c =
            ExperimentConfig::from_toml("dataset = \"d.csv\"\nmethods = [\"kmeans\"]\nseeds = [1]")
                .unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.dataset, "/cfg/d.csv");
        assert_eq!(c.output, PathBuf::from("/cfg/results"));
    }
}
