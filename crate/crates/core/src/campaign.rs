//! Batch simulation over design points: scale the outlet models, simulate,
//! transport contrast, extract the CIP and the per-branch indices.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cip::{extract_cip, Cip, CipScope, DEFAULT_THRESHOLD};
use crate::design::DesignPoint;
use crate::error::{Error, Result};
use crate::hemo::{protocol_cycles, simulate, SimulationConfig, SimulationResult};
use crate::indices::{averaged_imr, distal_pressures, transit_times};
use crate::lpm::{scale_parameters, LpmParameterSet, PhysioState};
use crate::transport::{transport_with, ConcentrationField, InjectionSpec, TransportConfig};
use crate::vessel::VesselTree;

/// 1-based cardiac cycle in which contrast is injected.
pub fn injection_cycle(state: PhysioState) -> usize {
    match state {
        PhysioState::Rest => 3,
        PhysioState::Hyperemia => 5,
    }
}

/// Injection onset for a cycle fraction `x4`, rounded to the integration step.
pub fn injection_onset(state: PhysioState, period: f64, x4: f64, dt: f64) -> f64 {
    let t = ((injection_cycle(state) - 1) as f64 + x4) * period;
    (t / dt).round() * dt
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub transport: TransportConfig,
    /// mg/mm³.
    pub threshold: f64,
    pub scope: CipScope,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    /// Largest tolerated fraction of failed runs.
    pub max_failure_fraction: f64,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            transport: TransportConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            scope: CipScope::LeftTree,
            jobs: 0,
            max_failure_fraction: 0.01,
        }
    }
}

/// Physics checks recorded for every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub mass_balance_error: f64,
    pub min_concentration: f64,
    pub max_concentration: f64,
    pub min_valve_flow: f64,
    pub junction_residual: f64,
    /// Contrast mass that entered the tree, mg.
    pub injected_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub run_id: usize,
    pub design: DesignPoint,
    pub cip: Cip,
    /// Per-branch mean transit time, s.
    pub t_mn: BTreeMap<crate::vessel::BranchLabel, f64>,
    /// Hyperemic per-branch distal pressure, mmHg.
    pub p_d: Option<BTreeMap<crate::vessel::BranchLabel, f64>>,
    /// Left-tree averaged IMR for hyperemic runs, mmHg·s.
    pub imr: Option<f64>,
    pub diagnostics: RunDiagnostics,
}

/// Everything produced by one run.
pub struct RunOutput {
    pub hemo: SimulationResult,
    pub field: ConcentrationField,
    pub sample: Sample,
}

/// Simulation configuration for a design point: protocol cycle count and
/// full-rate output for transport.
pub fn run_config(point: &DesignPoint, base: &LpmParameterSet, tree: &VesselTree) -> Result<SimulationConfig> {
    let params = scale_parameters(base, point)?;
    let mut cfg = SimulationConfig::new(tree.clone(), params, protocol_cycles(point.state));
    cfg.output_stride = 1;
    cfg.injection = Some(InjectionSpec::protocol(injection_onset(
        point.state,
        cfg.params.period,
        point.x4,
        cfg.dt,
    )));
    Ok(cfg)
}

pub fn run_point_full(
    run_id: usize,
    point: &DesignPoint,
    base: &LpmParameterSet,
    tree: &VesselTree,
    opts: &CampaignOptions,
) -> Result<RunOutput> {
    let cfg = run_config(point, base, tree)?;
    let hemo = simulate(&cfg)?;
    run_from_hemo(run_id, point, &cfg, hemo, opts)
}

/// Transport and post-processing on an existing full-rate hemodynamic run.
pub fn run_from_hemo(
    run_id: usize,
    point: &DesignPoint,
    cfg: &SimulationConfig,
    hemo: SimulationResult,
    opts: &CampaignOptions,
) -> Result<RunOutput> {
    let inj = cfg
        .injection
        .ok_or_else(|| Error::InvalidParameter("configuration has no injection".into()))?;
    let field = transport_with(&hemo, &cfg.tree, &inj, &opts.transport)?;
    let cip = extract_cip(&field, &cfg.tree, opts.scope, opts.threshold)?;
    let t_mn = transit_times(&field)?;
    let (p_d, imr) = match point.state {
        PhysioState::Hyperemia => {
            let p_d = distal_pressures(&hemo)?;
            let imr = averaged_imr(&t_mn, &p_d)?;
            (Some(p_d), Some(imr))
        }
        PhysioState::Rest => (None, None),
    };
    let min_valve_flow = hemo.q_av.iter().chain(&hemo.q_mv).copied().fold(f64::INFINITY, f64::min);
    let diagnostics = RunDiagnostics {
        mass_balance_error: field.mass_balance_error(),
        min_concentration: field.min_concentration,
        max_concentration: field.max_concentration,
        min_valve_flow,
        junction_residual: hemo.junction_residual(&cfg.tree),
        injected_mass: field.mass_injected.last().copied().unwrap_or(0.0),
    };
    let sample = Sample {
        run_id,
        design: *point,
        cip,
        t_mn,
        p_d,
        imr,
        diagnostics,
    };
    Ok(RunOutput { hemo, field, sample })
}

pub fn run_point(
    run_id: usize,
    point: &DesignPoint,
    base: &LpmParameterSet,
    tree: &VesselTree,
    opts: &CampaignOptions,
) -> Result<Sample> {
    run_point_full(run_id, point, base, tree, opts).map(|o| o.sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: usize,
    pub design: DesignPoint,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub samples: Vec<Sample>,
    pub failures: Vec<RunFailure>,
}

/// Runs every point, in parallel when `opts.jobs != 1`. Results are ordered
/// by point index regardless of scheduling. Failed runs are logged and
/// reported; the campaign errors if they exceed the tolerated fraction.
pub fn run_campaign(
    points: &[DesignPoint],
    base: &LpmParameterSet,
    tree: &VesselTree,
    opts: &CampaignOptions,
) -> Result<CampaignReport> {
    if let Some(p) = points.iter().find(|p| p.state != base.state) {
        return Err(Error::InvalidParameter(format!(
            "design point for {} on a {} base",
            p.state, base.state
        )));
    }
    let work = || -> Vec<Result<Sample>> {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(i, p, base, tree, opts))
            .collect()
    };
    let results = if opts.jobs == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)
    };
    let mut samples = Vec::with_capacity(points.len());
    let mut failures = vec![];
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => {
                log::warn!("run {i} ({:?}) failed: {e}", points[i]);
                failures.push(RunFailure {
                    run_id: i,
                    design: points[i],
                    error: e.to_string(),
                });
            }
        }
    }
    if failures.len() as f64 > opts.max_failure_fraction * points.len() as f64 {
        return Err(Error::CampaignFailed {
            failed: failures.len(),
            total: points.len(),
        });
    }
    Ok(CampaignReport { samples, failures })
}
