use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise nonlinearity applied after the (optionally batch-normalized)
/// affine map of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    Identity,
}

// Saturated sigmoid/tanh outputs are kept strictly inside the open range.
const SATURATION_MARGIN: f64 = f64::EPSILON / 2.0;

impl Activation {
    pub const fn leaky_relu() -> Self {
        Activation::LeakyRelu { slope: 0.2 }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => sigmoid(x).clamp(f64::MIN_POSITIVE, 1.0 - SATURATION_MARGIN),
            Activation::Tanh => x
                .tanh()
                .clamp(-1.0 + SATURATION_MARGIN, 1.0 - SATURATION_MARGIN),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    /// Open output range, if bounded.
    pub fn output_range(self) -> Option<(f64, f64)> {
        match self {
            Activation::Sigmoid => Some((0.0, 1.0)),
            Activation::Tanh => Some((-1.0, 1.0)),
            _ => None,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation, batch_norm: bool) -> Self {
        Self {
            width,
            activation,
            batch_norm,
        }
    }
}

/// Architecture of a fully connected network: input width plus one entry per
/// dense layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_width,
            layers,
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.width)
    }

    pub fn output_activation(&self) -> Option<Activation> {
        self.layers.last().map(|l| l.activation)
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let mut fan_in = self.input_width;
        let mut total = 0;
        for layer in &self.layers {
            total += layer.width * fan_in + layer.width;
            if layer.batch_norm {
                total += 2 * layer.width;
            }
            fan_in = layer.width;
        }
        total
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if self.input_width == 0 {
            return Err(Error::Config("input width must be positive".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.width == 0 {
                return Err(Error::Config(format!("layer {i} has zero width")));
            }
            if let Activation::LeakyRelu { slope } = layer.activation {
                if !(slope > 0.0 && slope < 1.0) {
                    return Err(Error::Config(format!(
                        "layer {i}: leaky-relu slope {slope} outside (0, 1)"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_includes_batch_norm() {
        let spec = MlpSpec::new(
            3,
            vec![
                LayerSpec::new(4, Activation::Relu, true),
                LayerSpec::new(1, Activation::Identity, false),
            ],
        );
        assert_eq!(spec.parameter_count(), 3 * 4 + 4 + 8 + 4 + 1);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(MlpSpec::new(3, vec![]).validate().is_err());
        assert!(
            MlpSpec::new(3, vec![LayerSpec::new(0, Activation::Relu, false)])
                .validate()
                .is_err()
        );
        let bad_slope = LayerSpec::new(2, Activation::LeakyRelu { slope: 1.5 }, false);
        assert!(MlpSpec::new(3, vec![bad_slope]).validate().is_err());
    }

    #[test]
    fn saturated_outputs_stay_open() {
        assert!(Activation::Sigmoid.apply(800.0) < 1.0);
        assert!(Activation::Sigmoid.apply(-800.0) > 0.0);
        assert!(Activation::Tanh.apply(50.0) < 1.0);
        assert!(Activation::Tanh.apply(-50.0) > -1.0);
    }
}
