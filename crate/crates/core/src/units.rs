//! Unit conventions and conversion constants.
//!
//! Internally everything is SI-ish on the millimetre scale: pressure in Pa,
//! volume in mm³, flow in mm³/s, time in s, concentration in mg/mm³.

/// Pa per mmHg.
pub const PA_PER_MMHG: f64 = 133.322;

/// Blood dynamic viscosity, Pa·s.
pub const BLOOD_VISCOSITY: f64 = 0.004;

/// Blood density, kg/m³. Only reported; the resistive network does not use it.
pub const BLOOD_DENSITY: f64 = 1060.0;

/// Contrast agent diffusivity in blood, mm²/s.
pub const CONTRAST_DIFFUSIVITY: f64 = 0.00203;

/// mg/mL expressed in mg/mm³.
pub const MG_PER_ML: f64 = 1.0e-3;

pub fn pa_to_mmhg(p: f64) -> f64 {
    p / PA_PER_MMHG
}

pub fn mmhg_to_pa(p: f64) -> f64 {
    p * PA_PER_MMHG
}

/// mm³/s to L/min.
pub fn flow_to_l_per_min(q: f64) -> f64 {
    q * 60.0 / 1.0e6
}

/// mm³ to mL.
pub fn volume_to_ml(v: f64) -> f64 {
    v / 1.0e3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert!((pa_to_mmhg(mmhg_to_pa(97.5)) - 97.5).abs() < 1e-12);
        assert!((flow_to_l_per_min(83_033.333) - 4.982).abs() < 1e-6);
        assert_eq!(volume_to_ml(2000.0), 2.0);
    }
}
