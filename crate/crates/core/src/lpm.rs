//! Lumped-parameter models: heart with time-varying elastance, systemic
//! three-element Windkessel, and the six coronary outlet models.
//!
//! Units: resistances Pa·s/mm³, inductances Pa·s²/mm³, compliances mm³/Pa,
//! elastances Pa/mm³, pressures Pa, volumes mm³.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::vessel::BranchLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PhysioState {
    Rest,
    Hyperemia,
}

impl PhysioState {
    pub fn as_str(self) -> &'static str {
        match self {
            PhysioState::Rest => "REST",
            PhysioState::Hyperemia => "HYPEREMIA",
        }
    }
}

impl fmt::Display for PhysioState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhysioState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rest" => Ok(PhysioState::Rest),
            "hyperemia" | "hyper" => Ok(PhysioState::Hyperemia),
            other => Err(Error::Parse(format!("unknown state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElastanceParams {
    pub e_max: f64,
    pub e_min: f64,
    pub t_max: f64,
    pub t_r: f64,
    pub period: f64,
}

impl ElastanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_max > self.e_min && self.e_min > 0.0) {
            return Err(Error::InvalidParameter("elastance requires e_max > e_min > 0".into()));
        }
        if !(0.0 < self.t_max && self.t_max < self.t_r && self.t_r < self.period) {
            return Err(Error::InvalidParameter("elastance requires 0 < t_max < t_r < period".into()));
        }
        Ok(())
    }
}

/// Normalized activation in [0, 1] at time `t` within the cycle.
fn activation(p: &ElastanceParams, t: f64) -> f64 {
    let tc = t.rem_euclid(p.period);
    if tc <= p.t_max {
        0.5 * (1.0 - (PI * tc / p.t_max).cos())
    } else if tc <= p.t_r {
        0.5 * (1.0 + (PI * (tc - p.t_max) / (p.t_r - p.t_max)).cos())
    } else {
        0.0
    }
}

/// Two-cosine ventricular elastance: rise to `e_max` at `t_max`, relax to
/// `e_min` at `t_r`, flat through diastole. Periodic in `t`.
pub fn elastance(params: &ElastanceParams, t: f64) -> f64 {
    params.e_min + (params.e_max - params.e_min) * activation(params, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartParams {
    pub r_mv: f64,
    pub l_mv: f64,
    pub r_av: f64,
    pub l_av: f64,
    pub p_la: f64,
    pub elastance: ElastanceParams,
    pub v_unstressed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindkesselParams {
    pub c_s: f64,
    pub r_sp: f64,
    pub r_sd: f64,
    #[serde(default)]
    pub p_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoronaryOutletParams {
    pub r_a: f64,
    pub r_ap: f64,
    pub r_ad: f64,
    pub c_a: f64,
    pub c_im: f64,
    /// Fraction of LV pressure acting as intramyocardial pressure.
    pub im_coupling: f64,
    #[serde(default)]
    pub p_v: f64,
}

impl CoronaryOutletParams {
    pub fn total_resistance(&self) -> f64 {
        self.r_a + self.r_ap + self.r_ad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpmParameterSet {
    pub state: PhysioState,
    pub heart: HeartParams,
    pub windkessel: WindkesselParams,
    pub coronary: BTreeMap<BranchLabel, CoronaryOutletParams>,
    pub period: f64,
}

/// Intramyocardial coupling for left-ventricle-fed branches.
pub const LEFT_IM_COUPLING: f64 = 1.0;
/// Intramyocardial coupling for right-side branches.
pub const RIGHT_IM_COUPLING: f64 = 0.2;

const VALVE_R_MV: f64 = 3.9e-4;
const VALVE_L: f64 = 1.0e-5;
const RELAXATION_SPAN: f64 = 0.1;

impl LpmParameterSet {
    pub fn validate(&self) -> Result<()> {
        self.heart.elastance.validate()?;
        let h = &self.heart;
        if !(h.r_mv > 0.0 && h.l_mv > 0.0 && h.r_av > 0.0 && h.l_av > 0.0 && h.p_la > 0.0) {
            return Err(Error::InvalidParameter("heart valve parameters must be positive".into()));
        }
        if h.v_unstressed < 0.0 {
            return Err(Error::InvalidParameter("v_unstressed must be non-negative".into()));
        }
        let w = &self.windkessel;
        if !(w.c_s > 0.0 && w.r_sp > 0.0 && w.r_sd > 0.0 && w.p_ref >= 0.0) {
            return Err(Error::InvalidParameter("Windkessel parameters must be positive".into()));
        }
        if (self.period - h.elastance.period).abs() > 1e-12 {
            return Err(Error::InvalidParameter("period disagrees with elastance period".into()));
        }
        for b in BranchLabel::OUTLETS {
            let c = self
                .coronary
                .get(&b)
                .ok_or_else(|| Error::MissingBranch(b.to_string()))?;
            let positive = [c.r_a, c.r_ap, c.r_ad, c.c_a, c.c_im];
            if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter(format!("coronary {b} parameters must be positive")));
            }
            if !(0.0..=1.0).contains(&c.im_coupling) {
                return Err(Error::InvalidParameter(format!("coronary {b} coupling outside [0, 1]")));
            }
        }
        if self.coronary.len() != 6 {
            return Err(Error::InvalidParameter("expected six coronary outlets".into()));
        }
        Ok(())
    }

    pub fn outlet(&self, branch: BranchLabel) -> Result<&CoronaryOutletParams> {
        self.coronary
            .get(&branch)
            .ok_or_else(|| Error::UnknownBranch(branch.to_string()))
    }
}

/// Calibrated reference parameter set for the requested state.
pub fn reference_parameters(state: PhysioState) -> LpmParameterSet {
    use BranchLabel::*;
    // (c_s, r_sp, r_sd, e_max, e_min, t_max, p_la)
    let (c_s, r_sp, r_sd, e_max, e_min, t_max, p_la, period) = match state {
        PhysioState::Rest => (18.382, 0.009, 0.158, 0.190, 0.015, 0.390, 2286.880, 1.0),
        PhysioState::Hyperemia => (16.361, 0.005, 0.087, 0.228, 0.015, 0.409, 2376.910, 0.73),
    };
    // (r_a, r_ap, r_ad, c_a, c_im)
    let table: [(BranchLabel, [f64; 5]); 6] = match state {
        PhysioState::Rest => [
            (Lad, [4.544, 1.363, 12.696, 0.014, 0.135]),
            (Om1, [3.732, 1.120, 10.429, 0.014, 0.135]),
            (Om2, [7.153, 2.146, 19.989, 0.007, 0.135]),
            (Lcx, [6.398, 1.919, 17.878, 0.007, 0.135]),
            (Am, [4.757, 1.427, 13.293, 0.012, 0.189]),
            (Rca, [3.199, 0.960, 8.939, 0.012, 0.189]),
        ],
        PhysioState::Hyperemia => [
            (Lad, [1.159, 0.348, 3.239, 0.014, 0.128]),
            (Om1, [0.952, 0.286, 2.660, 0.014, 0.128]),
            (Om2, [1.825, 0.547, 5.099, 0.007, 0.128]),
            (Lcx, [1.632, 0.490, 4.561, 0.007, 0.128]),
            (Am, [1.214, 0.364, 3.391, 0.011, 0.180]),
            (Rca, [0.816, 0.245, 2.280, 0.011, 0.180]),
        ],
    };
    let coronary = table
        .iter()
        .map(|&(b, [r_a, r_ap, r_ad, c_a, c_im])| {
            let im_coupling = if b.is_left() { LEFT_IM_COUPLING } else { RIGHT_IM_COUPLING };
            (
                b,
                CoronaryOutletParams {
                    r_a,
                    r_ap,
                    r_ad,
                    c_a,
                    c_im,
                    im_coupling,
                    p_v: 0.0,
                },
            )
        })
        .collect();
    LpmParameterSet {
        state,
        heart: HeartParams {
            r_mv: VALVE_R_MV,
            l_mv: VALVE_L,
            r_av: VALVE_L,
            l_av: VALVE_L,
            p_la,
            elastance: ElastanceParams {
                e_max,
                e_min,
                t_max,
                t_r: t_max + RELAXATION_SPAN,
                period,
            },
            v_unstressed: 0.0,
        },
        windkessel: WindkesselParams {
            c_s,
            r_sp,
            r_sd,
            p_ref: 0.0,
        },
        coronary,
        period,
    }
}

/// Multiplies every coronary outlet's (R_a, R_ap) by `x1`, R_ad by `x2` and
/// (C_a, C_im) by `x3`. No range checks.
pub fn scale_coronary(base: &LpmParameterSet, x1: f64, x2: f64, x3: f64) -> LpmParameterSet {
    let mut out = base.clone();
    for c in out.coronary.values_mut() {
        c.r_a *= x1;
        c.r_ap *= x1;
        c.r_ad *= x2;
        c.c_a *= x3;
        c.c_im *= x3;
    }
    out
}

/// Applies a design point's microvascular scalings to a base parameter set.
/// The injection timing `x4` is carried by the design point itself.
pub fn scale_parameters(base: &LpmParameterSet, x: &DesignPoint) -> Result<LpmParameterSet> {
    if x.state != base.state {
        return Err(Error::Range(format!(
            "design point state {} does not match base state {}",
            x.state, base.state
        )));
    }
    x.check_range()?;
    Ok(scale_coronary(base, x.x1, x.x2, x.x3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn elastance_landmarks() {
        let p = reference_parameters(PhysioState::Rest).heart.elastance;
        assert_eq!(elastance(&p, 0.0), 0.015);
        assert!((elastance(&p, 0.390) - 0.190).abs() < 1e-15);
        assert!((elastance(&p, p.t_r) - 0.015).abs() < 1e-15);
        let eps = 1e-9;
        assert!((elastance(&p, p.t_max - eps) - elastance(&p, p.t_max + eps)).abs() < 1e-8);
        assert!((elastance(&p, p.t_r - eps) - elastance(&p, p.t_r + eps)).abs() < 1e-8);
        assert_eq!(elastance(&p, 0.8), 0.015);
    }

    #[test]
    fn reference_values() {
        let r = reference_parameters(PhysioState::Rest);
        r.validate().unwrap();
        assert_eq!(r.heart.elastance.e_max, 0.190);
        assert_eq!(r.windkessel.c_s, 18.382);
        assert_eq!(r.windkessel.r_sp, 0.009);
        assert_eq!(r.windkessel.r_sd, 0.158);
        assert_eq!(r.heart.p_la, 2286.880);
        let lad = r.coronary[&BranchLabel::Lad];
        assert_eq!((lad.r_a, lad.r_ap, lad.r_ad), (4.544, 1.363, 12.696));
        assert_eq!(r.period, 1.0);

        let h = reference_parameters(PhysioState::Hyperemia);
        h.validate().unwrap();
        let lad = h.coronary[&BranchLabel::Lad];
        assert_eq!((lad.r_a, lad.r_ap, lad.r_ad), (1.159, 0.348, 3.239));
        assert_eq!(lad.c_im, 0.128);
        assert_eq!(h.period, 0.73);
        assert!((h.heart.elastance.t_r - 0.509).abs() < 1e-12);

        for s in [r, h] {
            assert_eq!(s.heart.r_av, 1e-5);
            assert_eq!(s.heart.l_av, 1e-5);
            assert_eq!(s.heart.l_mv, 1e-5);
            assert_eq!(s.heart.r_mv, 3.9e-4);
            assert_eq!(s.heart.v_unstressed, 0.0);
            assert_eq!(s.coronary[&BranchLabel::Lad].im_coupling, 1.0);
            assert_eq!(s.coronary[&BranchLabel::Rca].im_coupling, 0.2);
        }
    }

    #[test]
    fn scaling_examples() {
        let h = reference_parameters(PhysioState::Hyperemia);
        let id = DesignPoint::new(PhysioState::Hyperemia, 1.0, 1.0, 1.0, 0.0);
        assert_eq!(scale_parameters(&h, &id).unwrap(), h);
        let x = DesignPoint::new(PhysioState::Hyperemia, 1.0, 5.0, 1.0, 0.3);
        let s = scale_parameters(&h, &x).unwrap();
        assert!((s.coronary[&BranchLabel::Lad].r_ad - 16.195).abs() < 1e-12);
        assert_eq!(s.heart, h.heart);
        assert_eq!(s.windkessel, h.windkessel);

        let r = reference_parameters(PhysioState::Rest);
        let x = DesignPoint::new(PhysioState::Rest, 1.0, 1.0, 0.5, 0.0);
        let s = scale_parameters(&r, &x).unwrap();
        assert!((s.coronary[&BranchLabel::Lad].c_im - 0.0675).abs() < 1e-15);
        for (b, c) in &s.coronary {
            assert_eq!(c.c_im, r.coronary[b].c_im * 0.5);
        }

        let bad = DesignPoint::new(PhysioState::Rest, 3.0, 1.0, 1.0, 0.0);
        assert!(matches!(scale_parameters(&r, &bad), Err(Error::Range(_))));
        let wrong_state = DesignPoint::new(PhysioState::Hyperemia, 1.0, 1.0, 1.0, 0.0);
        assert!(scale_parameters(&r, &wrong_state).is_err());
    }

    proptest! {
        #[test]
        fn elastance_periodic_and_bounded(t in -5.0f64..20.0) {
            for state in [PhysioState::Rest, PhysioState::Hyperemia] {
                let p = reference_parameters(state).heart.elastance;
                let e = elastance(&p, t);
                prop_assert!(e >= p.e_min && e <= p.e_max);
                // The period is exactly representable for rest; allow rounding of t mod T otherwise.
                prop_assert!((e - elastance(&p, t + p.period)).abs() < 1e-9);
            }
        }

        #[test]
        fn scaling_is_multiplicative(
            a in (0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0),
            b in (0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0),
        ) {
            let base = reference_parameters(PhysioState::Hyperemia);
            let two_step = scale_coronary(&scale_coronary(&base, a.0, a.1, a.2), b.0, b.1, b.2);
            let one_step = scale_coronary(&base, a.0 * b.0, a.1 * b.1, a.2 * b.2);
            for (k, c) in &two_step.coronary {
                let d = one_step.coronary[k];
                for (u, v) in [(c.r_a, d.r_a), (c.r_ap, d.r_ap), (c.r_ad, d.r_ad), (c.c_a, d.c_a), (c.c_im, d.c_im)] {
                    prop_assert!((u - v).abs() <= 1e-14 * v.abs());
                }
            }
            two_step.validate().unwrap();
        }
    }
}
