use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{softmax_unchecked, ProbVector, RngStream};

/// Width of the hidden layer when none is given.
pub const DEFAULT_HIDDEN_UNITS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    /// Softmax regression, `F -> K`.
    #[default]
    Linear,
    /// `F -> hidden -> K` with a ReLU in between.
    OneHidden { hidden_units: usize },
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if let Architecture::OneHidden { hidden_units: 0 } = self {
            return Err(Error::config(
                "train.architecture.hidden_units",
                "a hidden layer needs at least one unit",
            ));
        }
        Ok(())
    }
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero bias.
    fn init(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let std = 1.0 / (inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| std * rng.gaussian()).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn init(
        architecture: Architecture,
        input_dim: usize,
        num_classes: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        architecture.validate()?;
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::invalid(format!(
                "model needs F >= 1 and K >= 2, got F = {input_dim}, K = {num_classes}"
            )));
        }
        let layers = match architecture {
            Architecture::Linear => vec![Layer::init(input_dim, num_classes, rng)],
            Architecture::OneHidden { hidden_units } => vec![
                Layer::init(input_dim, hidden_units, rng),
                Layer::init(hidden_units, num_classes, rng),
            ],
        };
        Ok(Self {
            architecture,
            input_dim,
            num_classes,
            layers,
        })
    }

    /// Checks layer shapes against the architecture and that every weight is
    /// finite.
    pub fn validate(&self) -> Result<()> {
        let dims: Vec<(usize, usize)> = match self.architecture {
            Architecture::Linear => vec![(self.input_dim, self.num_classes)],
            Architecture::OneHidden { hidden_units } => vec![
                (self.input_dim, hidden_units),
                (hidden_units, self.num_classes),
            ],
        };
        if dims.len() != self.layers.len() {
            return Err(Error::invalid(format!(
                "expected {} layers, found {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (i, ((inputs, outputs), layer)) in dims.iter().zip(&self.layers).enumerate() {
            if layer.inputs != *inputs
                || layer.outputs != *outputs
                || layer.weights.len() != inputs * outputs
                || layer.bias.len() != *outputs
            {
                return Err(Error::invalid(format!("layer {i} has inconsistent dimensions")));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("layer {i} has a non-finite parameter")));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        match self.layers.as_slice() {
            [out] => out.forward(x),
            [hidden, out] => {
                let mut h = hidden.forward(x);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                out.forward(&h)
            }
            _ => unreachable!("models have one or two layers"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> ProbVector {
        ProbVector::new(softmax_unchecked(&self.logits(x)))
            .expect("softmax of finite logits is a distribution")
    }

    /// Adds `d loss / d params` for one input to `grad`, given
    /// `d loss / d logits`. `grad` uses the layout of [`Self::params_mut`].
    pub(crate) fn accumulate_gradient(&self, x: &[f64], dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        match self.layers.as_slice() {
            [out] => accumulate_layer(out, x, dlogits, scale, grad),
            [hidden, out] => {
                let pre = hidden.forward(x);
                let h: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let (g_hidden, g_out) = grad.split_at_mut(hidden.param_count());
                accumulate_layer(out, &h, dlogits, scale, g_out);
                let mut dpre = vec![0.0; hidden.outputs];
                for (k, dz) in dlogits.iter().enumerate() {
                    let row = &out.weights[k * out.inputs..(k + 1) * out.inputs];
                    for (j, w) in row.iter().enumerate() {
                        dpre[j] += w * dz;
                    }
                }
                for (d, p) in dpre.iter_mut().zip(&pre) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate_layer(hidden, x, &dpre, scale, g_hidden);
            }
            _ => unreachable!("models have one or two layers"),
        }
    }

    /// Every parameter in a fixed order: per layer, weights then bias.
    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

fn accumulate_layer(layer: &Layer, input: &[f64], dout: &[f64], scale: f64, grad: &mut [f64]) {
    let (gw, gb) = grad.split_at_mut(layer.weights.len());
    for (k, dz) in dout.iter().enumerate() {
        let s = scale * dz;
        if s == 0.0 {
            continue;
        }
        let row = &mut gw[k * layer.inputs..(k + 1) * layer.inputs];
        for (g, v) in row.iter_mut().zip(input) {
            *g += s * v;
        }
        gb[k] += s;
    }
}
