//! Contrast intensity profiles: a projected-area surrogate of the bright
//! pixel count of an angiographic view, normalized and resampled to a fixed
//! length.
//!
//! There is no 3D embedding of the tree, so instead of projecting and
//! thresholding an image, every cell whose concentration exceeds the
//! threshold contributes its side-view area `2·r·Δx`. View-angle overlap and
//! foreshortening are therefore absent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpm::PhysioState;
use crate::transport::ConcentrationField;
use crate::units::MG_PER_ML;
use crate::vessel::VesselTree;

pub const CIP_LENGTH: usize = 256;

/// 1 mg/mL, in mg/mm³.
pub const DEFAULT_THRESHOLD: f64 = 1.0 * MG_PER_ML;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CipScope {
    /// Segments feeding any left-tree outlet.
    #[default]
    LeftTree,
    Whole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cip {
    pub values: Vec<f64>,
    /// Injection onset, s.
    pub window_start: f64,
    /// Simulation end, s.
    pub window_end: f64,
    pub state: PhysioState,
    /// mg/mm³.
    pub threshold: f64,
}

impl Cip {
    /// Metadata columns followed by the 256 values.
    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["state", "window_start", "window_end", "threshold"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(value_columns(""));
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.state.to_string(),
            self.window_start.to_string(),
            self.window_end.to_string(),
            self.threshold.to_string(),
        ];
        r.extend(self.values.iter().map(|v| format_value(*v)));
        r
    }

    pub fn from_csv_record(header: &csv::StringRecord, rec: &csv::StringRecord) -> Result<Cip> {
        let get = |name: &str| -> Result<&str> {
            header
                .iter()
                .position(|h| h == name)
                .and_then(|i| rec.get(i))
                .ok_or_else(|| Error::Parse(format!("missing column {name}")))
        };
        let num = |name: &str| -> Result<f64> {
            get(name)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("column {name}: {e}")))
        };
        let values = value_columns("")
            .iter()
            .map(|c| parse_value(get(c)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Cip {
            values,
            window_start: num("window_start")?,
            window_end: num("window_end")?,
            state: get("state")?.parse()?,
            threshold: num("threshold")?,
        })
    }

    /// Sample times of the 256 values.
    pub fn times(&self) -> Vec<f64> {
        let n = self.values.len();
        (0..n)
            .map(|i| self.window_start + (self.window_end - self.window_start) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Elapsed time from window start to the peak.
    pub fn time_to_peak(&self) -> f64 {
        let (i, _) = argmax(&self.values);
        self.times()[i] - self.window_start
    }

    /// Elapsed time from window start until the profile drops below half its
    /// peak for the last time (the washout), linearly interpolated. Dips
    /// that recover above half do not count. `None` if it never drops.
    pub fn half_decay_time(&self) -> Option<f64> {
        let (_, peak) = argmax(&self.values);
        let half = 0.5 * peak;
        let t = self.times();
        let j = self.values.iter().rposition(|&v| v > half)?;
        let b = *self.values.get(j + 1)?;
        let a = self.values[j];
        let f = (a - half) / (a - b);
        Some(t[j] + f * (t[j + 1] - t[j]) - self.window_start)
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
}

/// Column names `{prefix}c000` … `{prefix}c255`.
pub fn value_columns(prefix: &str) -> Vec<String> {
    (0..CIP_LENGTH).map(|i| format!("{prefix}c{i:03}")).collect()
}

/// Profile values are stored at single precision (shortest round-trip form).
pub fn format_value(v: f64) -> String {
    (v as f32).to_string()
}

pub fn parse_value(s: &str) -> Result<f64> {
    s.parse::<f32>()
        .map(f64::from)
        .map_err(|e| Error::Parse(format!("profile value `{s}`: {e}")))
}

/// Linear interpolation of a uniformly sampled series onto `n` uniform
/// abscissae spanning it.
pub fn resample(series: &[f64], n: usize) -> Result<Vec<f64>> {
    if series.len() < 2 || n < 2 {
        return Err(Error::DegenerateSeries(format!(
            "resample needs at least 2 input and output points (got {} → {n})",
            series.len()
        )));
    }
    let m = series.len() - 1;
    Ok((0..n)
        .map(|i| {
            let x = i as f64 * m as f64 / (n - 1) as f64;
            let j = (x.floor() as usize).min(m - 1);
            let f = x - j as f64;
            series[j] + f * (series[j + 1] - series[j])
        })
        .collect())
}

/// Linear interpolation of `(t, v)` onto `n` uniform times spanning
/// `[t0, t1]`. `t` must be increasing; values outside it are clamped.
pub fn resample_window(t: &[f64], v: &[f64], t0: f64, t1: f64, n: usize) -> Result<Vec<f64>> {
    if t.len() < 2 || n < 2 || t.len() != v.len() {
        return Err(Error::DegenerateSeries("resample_window needs matching series of length ≥ 2".into()));
    }
    let mut j = 0;
    Ok((0..n)
        .map(|i| {
            let x = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
            while j + 2 < t.len() && t[j + 1] < x {
                j += 1;
            }
            let (ta, tb) = (t[j], t[j + 1]);
            let f = ((x - ta) / (tb - ta)).clamp(0.0, 1.0);
            v[j] + f * (v[j + 1] - v[j])
        })
        .collect())
}

/// Projected bright area at every snapshot, mm².
pub fn pixel_area_series(
    field: &ConcentrationField,
    tree: &VesselTree,
    scope: CipScope,
    threshold: f64,
) -> Vec<f64> {
    let segs: Vec<usize> = (0..tree.segments().len())
        .filter(|&s| scope == CipScope::Whole || tree.feeds_left(s))
        .collect();
    (0..field.times.len())
        .map(|k| {
            segs.iter()
                .map(|&s| {
                    let g = &field.grids[s];
                    let lit = field.segment_cells(k, s).iter().filter(|&&c| c > threshold).count();
                    2.0 * g.radius * g.dx * lit as f64
                })
                .sum()
        })
        .collect()
}

/// Extracts the normalized 256-sample profile over [injection onset,
/// simulation end].
pub fn extract_cip(field: &ConcentrationField, tree: &VesselTree, scope: CipScope, threshold: f64) -> Result<Cip> {
    let window_start = field.injection.t_start;
    let window_end = field.times.last().copied().unwrap_or(window_start);
    let first = field.times.first().copied().unwrap_or(window_end);
    if !(window_end > window_start) || window_start < first {
        return Err(Error::EmptyWindow(format!(
            "window [{window_start}, {window_end}] not covered by the field"
        )));
    }
    let p = pixel_area_series(field, tree, scope, threshold);
    let mut values = resample_window(&field.times, &p, window_start, window_end, CIP_LENGTH)?;
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(Cip {
        values,
        window_start,
        window_end,
        state: field.state,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_cases() {
        assert_eq!(resample(&[2.0; 7], 4).unwrap(), vec![2.0; 4]);
        let s: Vec<f64> = (0..9).map(|i| i as f64 * 0.3).collect();
        assert_eq!(resample(&s, 9).unwrap(), s);
        let r = resample(&[0.0, 1.0], 5).unwrap();
        assert_eq!(r, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(matches!(resample(&[1.0], 5), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn windowed_resample() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [0.0, 10.0, 20.0, 30.0];
        let r = resample_window(&t, &v, 0.5, 2.5, 5).unwrap();
        assert_eq!(r, vec![5.0, 10.0, 15.0, 20.0, 25.0]);
    }

    #[test]
    fn decay_times() {
        let cip = Cip {
            values: vec![0.0, 0.5, 1.0, 0.8, 0.4, 0.0],
            window_start: 1.0,
            window_end: 6.0,
            state: PhysioState::Rest,
            threshold: DEFAULT_THRESHOLD,
        };
        assert_eq!(cip.time_to_peak(), 2.0);
        assert!((cip.half_decay_time().unwrap() - 3.75).abs() < 1e-12);
        let dip = Cip {
            values: vec![0.0, 1.0, 0.2, 1.0, 0.0],
            ..cip.clone()
        };
        assert!((dip.half_decay_time().unwrap() - 4.375).abs() < 1e-12);
        let rising = Cip {
            values: vec![0.0, 0.5, 1.0],
            ..cip
        };
        assert_eq!(rising.half_decay_time(), None);
    }

    #[test]
    fn csv_round_trip() {
        let cip = Cip {
            values: (0..CIP_LENGTH).map(|i| (i as f64 / 255.0) as f32 as f64).collect(),
            window_start: 2.37,
            window_end: 8.0,
            state: PhysioState::Hyperemia,
            threshold: DEFAULT_THRESHOLD,
        };
        let header = csv::StringRecord::from(Cip::csv_header());
        let rec = csv::StringRecord::from(cip.csv_record());
        assert_eq!(Cip::from_csv_record(&header, &rec).unwrap(), cip);
    }
}
