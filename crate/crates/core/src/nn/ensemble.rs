//! Deep ensembles: independently seeded members whose spread is the
//! epistemic uncertainty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{NetworkSpec, Params, Task};
use super::train::{predict_data, train, Data, NormStats, TrainConfig, TrainHistory};
use crate::error::{Error, Result};

/// 95% interval half-width in standard deviations.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    /// Population variance across members, target units².
    pub variance: f64,
    pub ci95: [f64; 2],
}

impl Prediction {
    pub fn sigma(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Mean, population variance and 95% interval of member predictions.
/// Identical members give exactly zero variance.
pub fn ensemble_stats(preds: &[f64]) -> Result<Prediction> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("no member predictions".into()));
    }
    let (mean, variance) = if preds.iter().all(|&p| p == preds[0]) {
        (preds[0], 0.0)
    } else {
        let m = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / m;
        (mean, preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / m)
    };
    let half = Z95 * variance.sqrt();
    Ok(Prediction {
        mean,
        variance,
        ci95: [mean - half, mean + half],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub task: Task,
    pub spec: NetworkSpec,
    pub norm: NormStats,
    pub train_config: TrainConfig,
    pub member_seeds: Vec<u64>,
    pub members: Vec<Params<f32>>,
    pub histories: Vec<TrainHistory>,
}

/// Seed of member `k` for an ensemble seed.
pub fn member_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64 + 1)
}

/// Trains `m` members. With `jobs != 1` members train concurrently; each
/// member depends only on its own seed, so the result is the same either way.
#[allow(clippy::too_many_arguments)]
pub fn train_ensemble(
    task: Task,
    spec: &NetworkSpec,
    train_data: &Data,
    val: &Data,
    cfg: &TrainConfig,
    m: usize,
    seed: u64,
    jobs: usize,
) -> Result<EnsembleModel> {
    if m == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one member".into()));
    }
    if spec.in_channels != task.in_channels() {
        return Err(Error::Shape(format!(
            "{task} takes {} channel(s), network has {}",
            task.in_channels(),
            spec.in_channels
        )));
    }
    if m == 1 {
        log::warn!("single-member ensemble: epistemic variance will be zero");
    }
    let seeds: Vec<u64> = (0..m).map(|k| member_seed(seed, k)).collect();
    let run = |s: &u64| {
        log::info!("training {task} member with seed {s}");
        train(spec, train_data, val, cfg, *s)
    };
    let trained: Vec<_> = if jobs == 1 {
        seeds.iter().map(run).collect()
    } else {
        let work = || seeds.par_iter().map(run).collect::<Vec<_>>();
        if jobs == 0 {
            work()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
                .install(work)
        }
    };
    let trained = trained.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        task,
        spec: spec.clone(),
        norm: trained[0].norm,
        train_config: *cfg,
        member_seeds: seeds,
        histories: trained.iter().map(|t| t.history.clone()).collect(),
        members: trained.into_iter().map(|t| t.params).collect(),
    })
}

impl EnsembleModel {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `[member][sample]` predictions in target units.
    pub fn member_predictions(&self, data: &Data) -> Result<Vec<Vec<f64>>> {
        if data.width() != self.spec.sample_width() {
            return Err(Error::Shape(format!(
                "inputs are {}×{}, model expects {}×{}",
                data.channels, data.length, self.spec.in_channels, self.spec.input_length
            )));
        }
        self.members
            .iter()
            .map(|p| {
                Ok(predict_data(p, data)?
                    .into_iter()
                    .map(|z| self.norm.denormalize(z as f64))
                    .collect())
            })
            .collect()
    }

    pub fn predict(&self, data: &Data) -> Result<Vec<Prediction>> {
        if self.len() == 1 {
            log::warn!("single-member ensemble: epistemic variance is zero by construction");
        }
        let per_member = self.member_predictions(data)?;
        let mut column = vec![0.0; self.len()];
        (0..data.len())
            .map(|i| {
                for (c, m) in column.iter_mut().zip(&per_member) {
                    *c = m[i];
                }
                ensemble_stats(&column)
            })
            .collect()
    }

    /// Prediction for one sample in file layout (`[channel][t]`).
    pub fn predict_with_uncertainty(&self, input: &[f32]) -> Result<Prediction> {
        let mut d = Data::new(self.spec.in_channels, self.spec.input_length);
        d.push(input, 0.0)?;
        Ok(self.predict(&d)?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let p = ensemble_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(p.mean, 3.0);
        assert_eq!(p.variance, 2.0);
        assert_eq!(p.ci95, [3.0 - 1.96 * 2f64.sqrt(), 3.0 + 1.96 * 2f64.sqrt()]);
    }

    #[test]
    fn identical_members() {
        let p = ensemble_stats(&[0.1; 3]).unwrap();
        assert_eq!(p.variance, 0.0);
        assert_eq!(p.mean, 0.1);
        assert_eq!(ensemble_stats(&[7.5]).unwrap().variance, 0.0);
        assert!(ensemble_stats(&[]).is_err());
    }
}
