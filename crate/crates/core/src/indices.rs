//! Mean transit times and the derived microvascular indices (IMR, CFR),
//! plus FFR from the hemodynamic solution.
//!
//! A vessel's transit time is the mean age of the contrast mass leaving its
//! outlet, where age is time since the mass entered the tree. The transport
//! solver carries an age-mass tracer alongside the concentration, so the
//! mean is exact for the discrete solution and does not depend on the
//! snapshot rate or on when during the cycle the bolus was injected. At
//! steady flow it equals the concentration-weighted moment of the distal
//! curve taken from the injection centroid, and it is always positive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hemo::{cycle_mean, SimulationResult};
use crate::transport::{ConcentrationField, InjectionSpec};
use crate::units::pa_to_mmhg;
use crate::vessel::BranchLabel;

/// `∫(t − t_origin)·c dt / ∫c dt` by the trapezoidal rule.
pub fn mean_transit_time(t: &[f64], c: &[f64], t_origin: f64) -> Result<f64> {
    if t.len() != c.len() {
        return Err(Error::Shape(format!("{} times vs {} values", t.len(), c.len())));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        num += 0.5 * h * ((t[k] - t_origin) * c[k] + (t[k - 1] - t_origin) * c[k - 1]);
        den += 0.5 * h * (c[k] + c[k - 1]);
    }
    if !(den > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(num / den)
}

/// mmHg·s.
pub fn imr_per_vessel(p_d_hyper_mmhg: f64, t_mn_hyper: f64) -> f64 {
    p_d_hyper_mmhg * t_mn_hyper
}

pub fn cfr_per_vessel(t_mn_rest: f64, t_mn_hyper: f64) -> f64 {
    t_mn_rest / t_mn_hyper
}

/// Per-branch transit times of one run, for all six outlets.
pub fn transit_times(field: &ConcentrationField) -> Result<BTreeMap<BranchLabel, f64>> {
    if !(field.mass_injected.last().copied().unwrap_or(0.0) > 0.0) {
        return Err(Error::ZeroMass);
    }
    BranchLabel::OUTLETS
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            if !(field.outlet_exit_mass[k] > 0.0) {
                return Err(Error::ZeroMass);
            }
            let tm = field.outlet_mean_age[k];
            if !(tm > 0.0) {
                return Err(Error::InvalidParameter(format!("non-positive transit time {tm} for {b}")));
            }
            Ok((b, tm))
        })
        .collect()
}

/// Onset plus half the injection duration.
pub fn injection_centroid(inj: &InjectionSpec) -> f64 {
    inj.t_start + 0.5 * inj.duration()
}

/// Cycle-mean distal pressure per branch over the final full cycle, mmHg.
pub fn distal_pressures(result: &SimulationResult) -> Result<BTreeMap<BranchLabel, f64>> {
    let r = result.final_cycle()?;
    Ok(BranchLabel::OUTLETS
        .iter()
        .enumerate()
        .map(|(k, &b)| (b, pa_to_mmhg(cycle_mean(&result.p_d[k], r.clone()))))
        .collect())
}

/// Mean over the four left-tree branches.
pub fn average_left(values: &BTreeMap<BranchLabel, f64>) -> Result<f64> {
    let mut sum = 0.0;
    for b in BranchLabel::LEFT {
        sum += values.get(&b).ok_or_else(|| Error::MissingBranch(b.to_string()))?;
    }
    Ok(sum / BranchLabel::LEFT.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdIndices {
    pub t_mn_rest: BTreeMap<BranchLabel, f64>,
    pub t_mn_hyper: BTreeMap<BranchLabel, f64>,
    /// Hyperemic cycle-mean distal pressure, mmHg.
    pub p_d: BTreeMap<BranchLabel, f64>,
    pub imr_i: BTreeMap<BranchLabel, f64>,
    pub cfr_i: BTreeMap<BranchLabel, f64>,
    pub imr: f64,
    pub cfr: f64,
    pub n_branches: usize,
}

/// Per-vessel IMR and CFR for every branch present in all inputs, averaged
/// over the left tree.
pub fn average_indices(
    t_mn_rest: &BTreeMap<BranchLabel, f64>,
    t_mn_hyper: &BTreeMap<BranchLabel, f64>,
    p_d_hyper: &BTreeMap<BranchLabel, f64>,
) -> Result<CmdIndices> {
    let mut imr_i = BTreeMap::new();
    let mut cfr_i = BTreeMap::new();
    for (&b, &th) in t_mn_hyper {
        if let Some(&p) = p_d_hyper.get(&b) {
            imr_i.insert(b, imr_per_vessel(p, th));
        }
        if let Some(&tr) = t_mn_rest.get(&b) {
            cfr_i.insert(b, cfr_per_vessel(tr, th));
        }
    }
    Ok(CmdIndices {
        imr: average_left(&imr_i)?,
        cfr: average_left(&cfr_i)?,
        t_mn_rest: t_mn_rest.clone(),
        t_mn_hyper: t_mn_hyper.clone(),
        p_d: p_d_hyper.clone(),
        imr_i,
        cfr_i,
        n_branches: BranchLabel::LEFT.len(),
    })
}

/// Left-tree averaged IMR of one hyperemic run.
pub fn averaged_imr(t_mn_hyper: &BTreeMap<BranchLabel, f64>, p_d_hyper: &BTreeMap<BranchLabel, f64>) -> Result<f64> {
    let mut imr = BTreeMap::new();
    for b in BranchLabel::LEFT {
        let t = t_mn_hyper.get(&b).ok_or_else(|| Error::MissingBranch(b.to_string()))?;
        let p = p_d_hyper.get(&b).ok_or_else(|| Error::MissingBranch(b.to_string()))?;
        imr.insert(b, imr_per_vessel(*p, *t));
    }
    average_left(&imr)
}

/// Left-tree averaged CFR of a (rest, hyperemia) pair.
pub fn averaged_cfr(t_mn_rest: &BTreeMap<BranchLabel, f64>, t_mn_hyper: &BTreeMap<BranchLabel, f64>) -> Result<f64> {
    let mut cfr = BTreeMap::new();
    for b in BranchLabel::LEFT {
        let r = t_mn_rest.get(&b).ok_or_else(|| Error::MissingBranch(b.to_string()))?;
        let h = t_mn_hyper.get(&b).ok_or_else(|| Error::MissingBranch(b.to_string()))?;
        cfr.insert(b, cfr_per_vessel(*r, *h));
    }
    average_left(&cfr)
}

/// Cycle-mean distal pressure over cycle-mean aortic root pressure, final
/// full cycle.
pub fn ffr(result_hyper: &SimulationResult, branch: BranchLabel) -> Result<f64> {
    let r = result_hyper.final_cycle()?;
    let p_d = result_hyper.p_d(branch)?;
    Ok(cycle_mean(p_d, r.clone()) / cycle_mean(&result_hyper.p_ao, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn transit_time_cases() {
        let t = grid(0.0, 6.0, 601);
        let rect: Vec<f64> = t.iter().map(|&x| if (2.0..=4.0).contains(&x) { 1.0 } else { 0.0 }).collect();
        assert!((mean_transit_time(&t, &rect, 0.0).unwrap() - 3.0).abs() < 1e-9);

        let t = grid(0.0, 1.0, 1001);
        let ramp = t.clone();
        // Trapezoid on the ramp: the first moment carries an h²/6 error.
        assert!((mean_transit_time(&t, &ramp, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-6);

        let t = grid(0.0, 3.0, 301);
        let pulse: Vec<f64> = (0..301).map(|i| if i == 150 { 1.0 } else { 0.0 }).collect();
        assert!((mean_transit_time(&t, &pulse, 0.5).unwrap() - 1.0).abs() < 1e-12);

        assert!(matches!(mean_transit_time(&t, &vec![0.0; 301], 0.0), Err(Error::ZeroMass)));
    }

    #[test]
    fn per_vessel_arithmetic() {
        assert_eq!(imr_per_vessel(80.0, 0.5), 40.0);
        assert!((cfr_per_vessel(0.9, 0.3) - 3.0).abs() < 1e-12);
        assert_eq!(cfr_per_vessel(0.7, 0.7), 1.0);
    }

    #[test]
    fn averaging() {
        let m: BTreeMap<_, _> = BranchLabel::LEFT.iter().map(|&b| (b, 30.0)).collect();
        assert_eq!(average_left(&m).unwrap(), 30.0);
        let m: BTreeMap<_, _> = BranchLabel::LEFT.iter().zip([20.0, 30.0, 40.0, 50.0]).map(|(&b, v)| (b, v)).collect();
        assert_eq!(average_left(&m).unwrap(), 35.0);
        let mut with_right = m.clone();
        with_right.insert(BranchLabel::Rca, 1000.0);
        with_right.insert(BranchLabel::Am, -5.0);
        assert_eq!(average_left(&with_right).unwrap(), 35.0);
        let mut missing = m;
        missing.remove(&BranchLabel::Om2);
        assert!(matches!(average_left(&missing), Err(Error::MissingBranch(_))));
    }

    #[test]
    fn averaged_indices_record() {
        let tr: BTreeMap<_, _> = BranchLabel::OUTLETS.iter().map(|&b| (b, 0.9)).collect();
        let th: BTreeMap<_, _> = BranchLabel::OUTLETS.iter().map(|&b| (b, 0.3)).collect();
        let pd: BTreeMap<_, _> = BranchLabel::OUTLETS.iter().map(|&b| (b, 80.0)).collect();
        let idx = average_indices(&tr, &th, &pd).unwrap();
        assert!((idx.imr - 24.0).abs() < 1e-12);
        assert!((idx.cfr - 3.0).abs() < 1e-12);
        assert_eq!(idx.n_branches, 4);
        assert!((averaged_imr(&th, &pd).unwrap() - 24.0).abs() < 1e-12);
        assert!((averaged_cfr(&tr, &th).unwrap() - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn translation_covariant(shift in -5.0f64..5.0, width in 0.2f64..1.0) {
            let t = grid(0.0, 4.0, 401);
            let c: Vec<f64> = t.iter().map(|&x| (-(x - 2.0).powi(2) / width).exp()).collect();
            let shifted: Vec<f64> = t.iter().map(|x| x + shift).collect();
            let a = mean_transit_time(&t, &c, 0.3).unwrap();
            let b = mean_transit_time(&shifted, &c, 0.3 + shift).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn average_is_permutation_invariant(
            (v, w) in proptest::collection::vec(1.0f64..100.0, 4)
                .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
        ) {
            let a: BTreeMap<_, _> = BranchLabel::LEFT.iter().zip(&v).map(|(&b, &x)| (b, x)).collect();
            let b: BTreeMap<_, _> = BranchLabel::LEFT.iter().zip(&w).map(|(&b, &x)| (b, x)).collect();
            prop_assert!((average_left(&a).unwrap() - average_left(&b).unwrap()).abs() < 1e-12);
        }
    }
}
