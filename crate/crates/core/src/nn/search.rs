//! K-fold cross-validated search over network width scaling factors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::NetworkSpec;
use super::train::{train, Data, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub factor: f64,
    pub param_count: usize,
    /// Best validation MSE on each held-out fold.
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub k: usize,
    pub seed: u64,
    pub entries: Vec<SearchEntry>,
    pub selected: f64,
}

/// Contiguous folds over a seeded permutation; fold sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect()
}

/// For every factor, trains on k−1 folds and scores the held-out fold (which
/// also drives early stopping). Every fold of a factor uses the same
/// initialization seed, so the folds differ only in their data.
pub fn kfold_scaling_search(data: &Data, factors: &[f64], k: usize, cfg: &TrainConfig, seed: u64) -> Result<SearchReport> {
    if k < 2 || data.len() < 2 * k {
        return Err(Error::InsufficientData(format!("{} samples for {k}-fold search", data.len())));
    }
    if factors.is_empty() {
        return Err(Error::EmptyInput("no scaling factors".into()));
    }
    let folds = kfold_indices(data.len(), k, seed);
    let mut entries = Vec::with_capacity(factors.len());
    for &factor in factors {
        let spec = NetworkSpec::with_length(data.channels, data.length, factor)?;
        let mut fold_mse = Vec::with_capacity(k);
        for (f, held) in folds.iter().enumerate() {
            let rest: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            let model = train(&spec, &data.subset(&rest), &data.subset(held), cfg, seed)?;
            log::info!("factor {factor} fold {f}: {:.4e}", model.history.best_val_mse);
            fold_mse.push(model.history.best_val_mse);
        }
        entries.push(SearchEntry {
            factor,
            param_count: spec.param_count(),
            mean_mse: fold_mse.iter().sum::<f64>() / k as f64,
            fold_mse,
        });
    }
    let selected = entries
        .iter()
        .min_by(|a, b| a.mean_mse.total_cmp(&b.mean_mse))
        .map(|e| e.factor)
        .expect("factors are non-empty");
    Ok(SearchReport {
        k,
        seed,
        entries,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition() {
        let folds = kfold_indices(23, 5, 9);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| f.len() == 4 || f.len() == 5));
    }
}
