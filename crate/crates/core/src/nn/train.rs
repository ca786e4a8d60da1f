//! Mini-batch training with SGD or Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{backward, forward, Dataset, ModelParams};
use crate::error::{Error, Result};
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Local training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: Seed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 16,
            local_epochs: 100,
            optimizer: OptimizerKind::Adam,
            seed: Seed::new(0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be >= 1".into()));
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        t: i32,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                t: 0,
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam { lr, t, m, v } => {
                *t += 1;
                let bc1 = 1.0 - BETA1.powi(*t);
                let bc2 = 1.0 - BETA2.powi(*t);
                for k in 0..params.len() {
                    let g = grad[k];
                    m[k] = BETA1 * m[k] + (1.0 - BETA1) * g;
                    v[k] = BETA2 * v[k] + (1.0 - BETA2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    params[k] -= *lr * m_hat / (v_hat.sqrt() + EPSILON);
                }
            }
        }
    }
}

/// Result of one client's local training.
#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub params: ModelParams,
    pub samples: usize,
    pub wall_clock: f64,
}

/// Trains `params` on `data` for `cfg.local_epochs` epochs of shuffled
/// mini-batches. Optimizer state starts fresh on every call.
pub fn train_local(params: &ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<LocalUpdate> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let classes = params.arch().output_dim;
    if let Some(&label) = data.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Label { label, classes });
    }
    let start = Instant::now();
    let mut current = params.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, current.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = cfg.seed.child("shuffle").rng();
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.subset(chunk);
            let (_, cache) = forward(&current, &batch.features)?;
            let grad = backward(&current, &cache, &batch.labels)?;
            opt.step(current.as_mut_slice(), grad.as_slice());
        }
    }
    Ok(LocalUpdate {
        params: current,
        samples: data.len(),
        wall_clock: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::nn::{cross_entropy, init_params, predict, ModelArch};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, n: usize) -> Dataset {
        let mut rng = Seed::new(seed).rng();
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let centre = if y == 0 {
                [0.2, 0.25, 0.3]
            } else {
                [0.8, 0.7, 0.75]
            };
            rows.push(centre.map(|c| c + noise.sample(&mut rng)));
            labels.push(y);
        }
        Dataset::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap()
    }

    fn small_arch() -> ModelArch {
        ModelArch {
            input_dim: 3,
            hidden_layers: 1,
            hidden_units: 8,
            output_dim: 2,
            seq_len: 1,
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            local_epochs: 0,
            ..TrainConfig::default()
        };
        let p = init_params(small_arch(), Seed::new(0)).unwrap();
        assert!(matches!(
            train_local(&p, &blobs(1, 10), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_dataset_rejected() {
        let p = init_params(small_arch(), Seed::new(0)).unwrap();
        let empty = Dataset::new(Matrix::zeros(0, 3), vec![]).unwrap();
        assert!(matches!(
            train_local(&p, &empty, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(7, 200);
        let cfg = TrainConfig {
            local_epochs: 20,
            seed: Seed::new(3),
            ..TrainConfig::default()
        };
        let p = init_params(small_arch(), Seed::new(1)).unwrap();
        let out = train_local(&p, &data, &cfg).unwrap();
        assert_eq!(out.samples, 200);
        assert!(out.wall_clock >= 0.0);
        let pred = predict(&out.params, &data.features).unwrap();
        let correct = pred
            .iter()
            .zip(&data.labels)
            .filter(|(a, b)| a == b)
            .count();
        assert!(correct as f64 / 200.0 >= 0.95, "accuracy {correct}/200");
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(2, 50);
        let cfg = TrainConfig {
            local_epochs: 3,
            seed: Seed::new(8),
            ..TrainConfig::default()
        };
        let p = init_params(small_arch(), Seed::new(1)).unwrap();
        let a = train_local(&p, &data, &cfg).unwrap();
        let b = train_local(&p, &data, &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn full_batch_sgd_loss_is_non_increasing() {
        let data = blobs(4, 64);
        let mut rng = Seed::new(12).rng();
        for trial in 0..5 {
            let mut p = init_params(small_arch(), Seed::new(trial)).unwrap();
            // Scale features into [0, 1] as the pipeline does.
            let _ = rng.random::<u8>();
            let cfg = TrainConfig {
                learning_rate: 1e-3,
                batch_size: 64,
                local_epochs: 1,
                optimizer: OptimizerKind::Sgd,
                seed: Seed::new(trial),
            };
            let mut prev = {
                let (_, c) = forward(&p, &data.features).unwrap();
                cross_entropy(c.probs(), &data.labels).unwrap()
            };
            for _ in 0..20 {
                p = train_local(&p, &data, &cfg).unwrap().params;
                let (_, c) = forward(&p, &data.features).unwrap();
                let l = cross_entropy(c.probs(), &data.labels).unwrap();
                assert!(l <= prev + 1e-15, "loss rose from {prev} to {l}");
                prev = l;
            }
        }
    }
}
