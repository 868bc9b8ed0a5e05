//! Mini-batch Adam training with early stopping on validation MSE.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{backward, predict_normalized, to_channels_last, NetworkSpec, Params};
use super::real::Real;
use crate::error::{Error, Result};

/// Inputs in file layout (`[sample][channel][t]`) with scalar targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Data {
    pub channels: usize,
    pub length: usize,
    pub inputs: Vec<f32>,
    pub targets: Vec<f64>,
}

impl Data {
    pub fn new(channels: usize, length: usize) -> Self {
        Data {
            channels,
            length,
            inputs: vec![],
            targets: vec![],
        }
    }

    pub fn push(&mut self, input: &[f32], target: f64) -> Result<()> {
        if input.len() != self.channels * self.length {
            return Err(Error::Shape(format!(
                "sample has {} values, expected {}×{}",
                input.len(),
                self.channels,
                self.length
            )));
        }
        self.inputs.extend_from_slice(input);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn width(&self) -> usize {
        self.channels * self.length
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.width()..(i + 1) * self.width()]
    }

    pub fn subset(&self, idx: &[usize]) -> Data {
        let mut d = Data::new(self.channels, self.length);
        for &i in idx {
            d.inputs.extend_from_slice(self.input(i));
            d.targets.push(self.targets[i]);
        }
        d
    }

    /// Channels-last batch buffer for the given sample indices.
    pub fn batch<T: Real>(&self, idx: &[usize]) -> Vec<T> {
        let w = self.width();
        let mut out = vec![T::ZERO; idx.len() * w];
        for (k, &i) in idx.iter().enumerate() {
            to_channels_last(self.input(i), self.channels, self.length, &mut out[k * w..(k + 1) * w]);
        }
        out
    }
}

/// Target z-scoring statistics from the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub target_mean: f64,
    pub target_std: f64,
}

impl NormStats {
    /// Population mean and standard deviation; a zero spread falls back to 1
    /// so constant targets still normalize to 0.
    pub fn from_targets(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyInput("no training targets".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let target_std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
        Ok(NormStats {
            target_mean: mean,
            target_std,
        })
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 200,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch, normalized target units.
    pub train_loss: Vec<f64>,
    /// Validation MSE per epoch, target units².
    pub val_mse: Vec<f64>,
    /// Best validation MSE seen up to each epoch.
    pub best_so_far: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: Params<f32>,
    pub norm: NormStats,
    pub history: TrainHistory,
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    fn new(p: &Params<f32>) -> Self {
        let z: Vec<Vec<f32>> = p.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            m: z.clone(),
            v: z,
            step: 0,
        }
    }

    fn update(&mut self, p: &mut Params<f32>, grads: &[Vec<f32>], scale: f32, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate as f32;
        let eps = cfg.epsilon as f32;
        for (((w, g), m), v) in p.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..w.len() {
                let gi = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

const EVAL_BATCH: usize = 256;

/// Normalized-space predictions for every sample.
pub fn predict_data(p: &Params<f32>, data: &Data) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let x = data.batch::<f32>(chunk);
        out.extend(predict_normalized(p, &x, chunk.len())?);
    }
    Ok(out)
}

/// MSE in target units.
pub fn mse_on(p: &Params<f32>, norm: &NormStats, data: &Data) -> Result<f64> {
    let z = predict_data(p, data)?;
    Ok(z.iter()
        .zip(&data.targets)
        .map(|(z, y)| {
            let e = norm.denormalize(*z as f64) - y;
            e * e
        })
        .sum::<f64>()
        / data.len() as f64)
}

/// Trains one network. Gradients are averaged over each mini-batch (the
/// summed-error gradient scaled by 1/batch). Deterministic for a seed: the
/// seed drives both initialization and the per-epoch shuffle.
pub fn train(spec: &NetworkSpec, train: &Data, val: &Data, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("training and validation splits must be non-empty".into()));
    }
    if train.width() != spec.sample_width() || val.width() != spec.sample_width() {
        return Err(Error::Shape(format!(
            "data is {}×{}, network expects {}×{}",
            train.channels, train.length, spec.in_channels, spec.input_length
        )));
    }
    let norm = NormStats::from_targets(&train.targets)?;
    let z: Vec<f32> = train.targets.iter().map(|&y| norm.normalize(y) as f32).collect();
    let mut params = Params::<f32>::he_init(spec, seed);
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = params.clone();
    let mut history = TrainHistory {
        best_val_mse: f64::INFINITY,
        ..TrainHistory::default()
    };
    let mut since_best = 0;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = train.batch::<f32>(chunk);
            let y: Vec<f32> = chunk.iter().map(|&i| z[i]).collect();
            let (loss, grads) = backward(&params, &x, &y, chunk.len())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: format!("batch loss {loss} at Adam step {}", adam.step + 1),
                });
            }
            epoch_loss += loss as f64;
            adam.update(&mut params, &grads, 1.0 / chunk.len() as f32, cfg);
        }
        let val_mse = mse_on(&params, &norm, val)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("validation MSE {val_mse}"),
            });
        }
        history.train_loss.push(epoch_loss / train.len() as f64);
        history.val_mse.push(val_mse);
        if val_mse < history.best_val_mse {
            history.best_val_mse = val_mse;
            history.best_epoch = epoch;
            best.clone_from(&params);
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.best_so_far.push(history.best_val_mse);
        log::debug!("epoch {epoch}: train {:.4e} val {val_mse:.4e}", epoch_loss / train.len() as f64);
        if since_best >= cfg.patience {
            break;
        }
    }
    Ok(TrainedModel {
        params: best,
        norm,
        history,
    })
}
