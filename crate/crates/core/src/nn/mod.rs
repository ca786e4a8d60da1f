//! Minimal stacked-LSTM classifier.
//!
//! The network is `seq_len` timesteps of `hidden_layers` stacked LSTM cells
//! followed by a dense softmax layer applied to the top layer's final hidden
//! state. All parameters live in one flat `f64` vector so federated aggregation
//! and checkpointing operate on plain slices.

mod lstm;
mod train;

pub use lstm::{backward, cross_entropy, forward, softmax_rows, ForwardCache};
pub use train::{train_local, LocalUpdate, OptimizerKind, TrainConfig};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::Seed;

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelArch {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub output_dim: usize,
    pub seq_len: usize,
}

impl Default for ModelArch {
    fn default() -> Self {
        ModelArch {
            input_dim: 45,
            hidden_layers: 5,
            hidden_units: 128,
            output_dim: 6,
            seq_len: 1,
        }
    }
}

impl ModelArch {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("input_dim", self.input_dim),
            ("hidden_layers", self.hidden_layers),
            ("hidden_units", self.hidden_units),
            ("seq_len", self.seq_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.output_dim < 2 {
            return Err(Error::Config(format!(
                "output_dim must be >= 2, got {}",
                self.output_dim
            )));
        }
        Ok(())
    }

    /// Width of one input row: `input_dim * seq_len`.
    pub fn row_width(&self) -> usize {
        self.input_dim * self.seq_len
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerLayout {
    pub in_dim: usize,
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
}

/// Offsets of each tensor inside the flat parameter vector.
///
/// Per LSTM layer: input weights `4H x in`, recurrent weights `4H x H`, bias `4H`,
/// with gate blocks ordered input, forget, cell, output. Then the output layer:
/// weights `O x H` and bias `O`.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub layers: Vec<LayerLayout>,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(arch: &ModelArch) -> Self {
        let h = arch.hidden_units;
        let mut off = 0;
        let mut layers = Vec::with_capacity(arch.hidden_layers);
        for l in 0..arch.hidden_layers {
            let in_dim = if l == 0 { arch.input_dim } else { h };
            let wx = off;
            let wh = wx + 4 * h * in_dim;
            let b = wh + 4 * h * h;
            off = b + 4 * h;
            layers.push(LayerLayout { in_dim, wx, wh, b });
        }
        let out_w = off;
        let out_b = out_w + arch.output_dim * h;
        let total = out_b + arch.output_dim;
        Layout {
            layers,
            out_w,
            out_b,
            total,
        }
    }
}

/// Model parameters: an architecture plus its flat parameter vector.
///
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: ModelArch,
    values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: ModelArch) -> Result<Self> {
        arch.validate()?;
        Ok(ModelParams {
            values: vec![0.0; arch.param_count()],
            arch,
        })
    }

    /// Rebuilds parameters from a flat vector produced by [`ModelParams::flatten`].
    pub fn unflatten(arch: ModelArch, values: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let expected = arch.param_count();
        if values.len() != expected {
            return Err(Error::Shape {
                expected: format!("{expected} parameters"),
                got: format!("{} parameters", values.len()),
            });
        }
        Ok(ModelParams { arch, values })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    /// Output-layer bias.
    pub fn output_bias(&self) -> &[f64] {
        let layout = self.layout();
        &self.values[layout.out_b..layout.total]
    }

    /// Bias vector (`4H`, gates ordered i, f, g, o) of LSTM layer `layer`.
    pub fn lstm_bias(&self, layer: usize) -> &[f64] {
        let l = self.layout().layers[layer];
        &self.values[l.b..l.b + 4 * self.arch.hidden_units]
    }
}

/// Deterministic initialisation.
///
/// Weights are drawn uniformly from `[-sqrt(3 / fan_in), sqrt(3 / fan_in)]` where
/// `fan_in` is the number of inputs feeding the unit (`in + H` for LSTM gates, `H`
/// for the output layer). Biases are zero except the LSTM forget gate, which
/// starts at 1.
pub fn init_params(arch: ModelArch, seed: Seed) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(arch)?;
    let layout = params.layout();
    let h = arch.hidden_units;
    let mut rng = seed.child("init").rng();
    for l in &layout.layers {
        let bound = (3.0 / (l.in_dim + h) as f64).sqrt();
        for w in &mut params.values[l.wx..l.b] {
            *w = rng.random_range(-bound..bound);
        }
        for b in &mut params.values[l.b + h..l.b + 2 * h] {
            *b = 1.0;
        }
    }
    let bound = (3.0 / h as f64).sqrt();
    for w in &mut params.values[layout.out_w..layout.out_b] {
        *w = rng.random_range(-bound..bound);
    }
    Ok(params)
}

/// Class index of the largest value in each row; ties go to the lowest index.
pub fn argmax_rows(values: &Matrix) -> Vec<usize> {
    (0..values.rows())
        .map(|r| {
            let row = values.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

const PREDICT_CHUNK: usize = 4096;

/// Predicted class per row.
pub fn predict(params: &ModelParams, batch: &Matrix) -> Result<Vec<usize>> {
    check_width(params, batch)?;
    let mut out = Vec::with_capacity(batch.rows());
    let mut start = 0;
    while start < batch.rows() {
        let end = (start + PREDICT_CHUNK).min(batch.rows());
        let idx: Vec<usize> = (start..end).collect();
        let (logits, _) = forward(params, &batch.select_rows(&idx))?;
        out.extend(argmax_rows(&logits));
        start = end;
    }
    Ok(out)
}

pub(crate) fn check_width(params: &ModelParams, batch: &Matrix) -> Result<()> {
    let width = params.arch.row_width();
    if batch.cols() != width {
        return Err(Error::Shape {
            expected: format!("{width} columns (input_dim x seq_len)"),
            got: format!("{} columns", batch.cols()),
        });
    }
    Ok(())
}

/// Feature rows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Shape {
                expected: format!("{} labels", features.rows()),
                got: format!("{} labels", labels.len()),
            });
        }
        Ok(Dataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let feats: Vec<&Matrix> = parts.iter().map(|d| &d.features).collect();
        Ok(Dataset {
            features: Matrix::vstack(&feats)?,
            labels: parts
                .iter()
                .flat_map(|d| d.labels.iter().copied())
                .collect(),
        })
    }
}
