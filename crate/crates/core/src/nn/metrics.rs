//! Test-set metrics for an ensemble.

use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleModel;
use super::network::Task;
use super::train::Data;
use crate::error::{Error, Result};

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64
}

/// Coefficient of determination. A constant target gives 1 for a perfect
/// fit and 0 otherwise.
pub fn r2(pred: &[f64], target: &[f64]) -> f64 {
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let sse: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum();
    let sst: f64 = target.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Pearson correlation; `None` when either series has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub target: f64,
    pub mean: f64,
    pub sigma: f64,
}

/// Anchor values from a full 3D-flow training set, printed beside the
/// measured metrics for comparison. Never asserted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub mse: f64,
    pub r2: f64,
    pub mean_epistemic_variance: f64,
    pub pearson_abs_error_sigma: f64,
}

pub fn reference_row(task: Task) -> ReferenceRow {
    match task {
        Task::Imr => ReferenceRow {
            mse: 1.015,
            r2: 0.989,
            mean_epistemic_variance: 0.446,
            pearson_abs_error_sigma: 0.479,
        },
        Task::Cfr => ReferenceRow {
            mse: 0.010,
            r2: 0.967,
            mean_epistemic_variance: 0.052,
            pearson_abs_error_sigma: 0.441,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub n: usize,
    pub members: usize,
    pub mse: f64,
    pub r2: f64,
    pub mean_epistemic_variance: f64,
    /// Correlation between |error| and the ensemble standard deviation.
    pub pearson_abs_error_sigma: Option<f64>,
    pub reference: ReferenceRow,
    pub scatter: Vec<ScatterPoint>,
}

pub fn evaluate(model: &EnsembleModel, test: &Data) -> Result<Report> {
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test split".into()));
    }
    let preds = model.predict(test)?;
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let abs_err: Vec<f64> = means.iter().zip(&test.targets).map(|(m, y)| (m - y).abs()).collect();
    let sigma: Vec<f64> = preds.iter().map(|p| p.sigma()).collect();
    Ok(Report {
        task: model.task,
        n: test.len(),
        members: model.len(),
        mse: mse(&means, &test.targets),
        r2: r2(&means, &test.targets),
        mean_epistemic_variance: preds.iter().map(|p| p.variance).sum::<f64>() / preds.len() as f64,
        pearson_abs_error_sigma: pearson(&abs_err, &sigma),
        reference: reference_row(model.task),
        scatter: preds
            .iter()
            .zip(&test.targets)
            .map(|(p, &y)| ScatterPoint {
                target: y,
                mean: p.mean,
                sigma: p.sigma(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_definitions() {
        let y = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(mse(&y, &y), 0.0);
        assert_eq!(r2(&y, &y), 1.0);
        assert_eq!(r2(&[3.5; 4], &y), 0.0);
        assert!((pearson(&y, &[2.0, 4.0, 8.0, 14.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&y, &[1.0; 4]), None);
    }
}
