//! Versioned JSON parameter container. Every block is a shape-tagged array of
//! f64; floats are written in shortest round-trip form so save/load is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{BatchNorm, DenseLayer, Mlp};
use super::spec::MlpSpec;
use crate::error::{Error, Result};

pub const FORMAT: &str = "fedclust-params";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayBlock {
    pub fn from_matrix(name: impl Into<String>, m: &Array2<f64>) -> Self {
        Self {
            name: name.into(),
            shape: vec![m.nrows(), m.ncols()],
            data: m.iter().copied().collect(),
        }
    }

    pub fn from_vector(name: impl Into<String>, v: &Array1<f64>) -> Self {
        Self {
            name: name.into(),
            shape: vec![v.len()],
            data: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Result<Array2<f64>> {
        match self.shape[..] {
            [r, c] => Array2::from_shape_vec((r, c), self.data.clone())
                .map_err(|e| Error::Dimension(format!("block {}: {e}", self.name))),
            _ => Err(Error::Dimension(format!(
                "block {} is not a matrix",
                self.name
            ))),
        }
    }

    pub fn to_vector(&self) -> Result<Array1<f64>> {
        match self.shape[..] {
            [n] if n == self.data.len() => Ok(Array1::from(self.data.clone())),
            _ => Err(Error::Dimension(format!(
                "block {} is not a vector",
                self.name
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub format: String,
    pub version: u32,
    pub spec: MlpSpec,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    pub blocks: Vec<ArrayBlock>,
}

impl NetworkCheckpoint {
    pub fn from_network(net: &Mlp) -> Self {
        let mut blocks = Vec::new();
        for (i, l) in net.layers().iter().enumerate() {
            blocks.push(ArrayBlock::from_matrix(
                format!("layer{i}.weight"),
                &l.weight,
            ));
            blocks.push(ArrayBlock::from_vector(format!("layer{i}.bias"), &l.bias));
            if let Some(bn) = &l.batch_norm {
                blocks.push(ArrayBlock::from_vector(
                    format!("layer{i}.bn.gamma"),
                    &bn.gamma,
                ));
                blocks.push(ArrayBlock::from_vector(
                    format!("layer{i}.bn.beta"),
                    &bn.beta,
                ));
                blocks.push(ArrayBlock::from_vector(
                    format!("layer{i}.bn.running_mean"),
                    &bn.running_mean,
                ));
                blocks.push(ArrayBlock::from_vector(
                    format!("layer{i}.bn.running_var"),
                    &bn.running_var,
                ));
                blocks.push(ArrayBlock {
                    name: format!("layer{i}.bn.hyper"),
                    shape: vec![2],
                    data: vec![bn.momentum, bn.epsilon],
                });
            }
        }
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            spec: net.spec().clone(),
            tags: BTreeMap::new(),
            blocks,
        }
    }

    pub fn with_tag(mut self, key: &str, value: impl Into<String>) -> Self {
        self.tags.insert(key.to_string(), value.into());
        self
    }

    pub fn to_network(&self) -> Result<Mlp> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Serde(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let by_name: BTreeMap<&str, &ArrayBlock> =
            self.blocks.iter().map(|b| (b.name.as_str(), b)).collect();
        let get = |name: String| {
            by_name
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::Serde(format!("checkpoint missing block {name}")))
        };
        let mut layers = Vec::with_capacity(self.spec.layers.len());
        for (i, ls) in self.spec.layers.iter().enumerate() {
            let batch_norm = if ls.batch_norm {
                let hyper = get(format!("layer{i}.bn.hyper"))?.to_vector()?;
                if hyper.len() != 2 {
                    return Err(Error::Dimension(format!(
                        "layer{i}.bn.hyper must hold 2 values"
                    )));
                }
                Some(BatchNorm {
                    gamma: get(format!("layer{i}.bn.gamma"))?.to_vector()?,
                    beta: get(format!("layer{i}.bn.beta"))?.to_vector()?,
                    running_mean: get(format!("layer{i}.bn.running_mean"))?.to_vector()?,
                    running_var: get(format!("layer{i}.bn.running_var"))?.to_vector()?,
                    momentum: hyper[0],
                    epsilon: hyper[1],
                })
            } else {
                None
            };
            layers.push(DenseLayer {
                weight: get(format!("layer{i}.weight"))?.to_matrix()?,
                bias: get(format!("layer{i}.bias"))?.to_vector()?,
                activation: ls.activation,
                batch_norm,
            });
        }
        Mlp::from_layers(self.spec.clone(), layers)
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
