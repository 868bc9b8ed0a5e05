//! 1D advection–diffusion of contrast on the vessel tree.
//!
//! Each segment carries a uniform finite-volume grid. Advection is
//! first-order upwind with the direction taken from the sign of the segment
//! flow, diffusion is explicit and centered (no flux through segment ends),
//! and the two are operator-split inside CFL-limited sub-steps. Junctions mix
//! the incoming mass fluxes: the node concentration is the flow-weighted
//! mean of everything entering it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hemo::SimulationResult;
use crate::lpm::PhysioState;
use crate::units::{CONTRAST_DIFFUSIVITY, MG_PER_ML};
use crate::vessel::{BranchLabel, VesselTree};

/// Contrast injection at the tree inlet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    /// Contrast concentration, mg/mm³.
    pub c0: f64,
    /// Injection rate, mm³/s.
    pub rate: f64,
    /// Injected volume, mm³.
    pub volume: f64,
    /// Onset, s.
    pub t_start: f64,
}

impl InjectionSpec {
    /// 2 mL of 400 mg/mL contrast at 1000 mm³/s.
    pub fn protocol(t_start: f64) -> Self {
        InjectionSpec {
            c0: 400.0 * MG_PER_ML,
            rate: 1000.0,
            volume: 2000.0,
            t_start,
        }
    }

    pub fn duration(&self) -> f64 {
        self.volume / self.rate
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration()
    }

    /// Nominal injected mass `c0 · volume`, mg.
    pub fn nominal_mass(&self) -> f64 {
        self.c0 * self.volume
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.rate > 0.0 && self.volume > 0.0 && self.t_start >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid injection {self:?}")));
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end()
    }

    /// Mixed concentration entering the tree at time `t` for inlet flow `q`.
    pub fn inlet_concentration(&self, q_inlet: f64, t: f64) -> f64 {
        if self.is_active(t) && q_inlet > 0.0 {
            self.c0 * self.rate / (self.rate + q_inlet)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    /// mm²/s.
    pub diffusivity: f64,
    /// Upper bound on cell width, mm.
    pub max_dx: f64,
    /// Lower bound on cells per segment.
    pub min_cells: usize,
    /// Interval between recorded snapshots, s.
    pub snapshot_interval: f64,
    pub max_cfl: f64,
    pub max_diffusion_number: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            diffusivity: CONTRAST_DIFFUSIVITY,
            max_dx: 0.5,
            min_cells: 10,
            snapshot_interval: 0.01,
            max_cfl: 0.9,
            max_diffusion_number: 0.4,
        }
    }
}

/// Finite-volume grid of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub n_cells: usize,
    pub dx: f64,
    pub area: f64,
    pub radius: f64,
    /// Offset of the segment's first cell in a flattened snapshot.
    pub offset: usize,
}

impl SegmentGrid {
    fn new(length: f64, radius: f64, cfg: &TransportConfig, offset: usize) -> Self {
        let target = cfg.max_dx.min(length / cfg.min_cells as f64);
        let n_cells = (length / target).ceil().max(cfg.min_cells as f64) as usize;
        SegmentGrid {
            n_cells,
            dx: length / n_cells as f64,
            area: std::f64::consts::PI * radius * radius,
            radius,
            offset,
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.area * self.dx
    }
}

/// Recorded concentration field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationField {
    pub state: PhysioState,
    pub injection: InjectionSpec,
    pub grids: Vec<SegmentGrid>,
    /// Snapshot times, s.
    pub times: Vec<f64>,
    /// `cells[k]` is every cell concentration at `times[k]`, segment by
    /// segment, proximal to distal.
    pub cells: Vec<Vec<f64>>,
    /// Concentration in the most distal cell of each outlet segment,
    /// [`BranchLabel::OUTLETS`] order.
    pub distal: Vec<Vec<f64>>,
    /// Concentration entering the tree inlet.
    pub inlet: Vec<f64>,
    /// Contrast mass in the tree, mg.
    pub mass_domain: Vec<f64>,
    /// Cumulative mass that left through outlets or back through the inlet, mg.
    pub mass_exited: Vec<f64>,
    /// Cumulative mass that entered through the inlet, mg.
    pub mass_injected: Vec<f64>,
    /// Largest concentration seen in any cell at any sub-step.
    pub max_concentration: f64,
    /// Smallest concentration seen in any cell at any sub-step.
    pub min_concentration: f64,
    /// Mass that left through each outlet, mg.
    pub outlet_exit_mass: [f64; 6],
    /// Mean time the contrast leaving each outlet spent in the tree, s.
    pub outlet_mean_age: [f64; 6],
}

impl ConcentrationField {
    pub fn total_cells(&self) -> usize {
        self.grids.iter().map(|g| g.n_cells).sum()
    }

    pub fn segment_cells(&self, snapshot: usize, seg: usize) -> &[f64] {
        let g = &self.grids[seg];
        &self.cells[snapshot][g.offset..g.offset + g.n_cells]
    }

    /// Largest relative mass-balance error over all snapshots, relative to
    /// the final injected mass.
    pub fn mass_balance_error(&self) -> f64 {
        let scale = self.mass_injected.last().copied().unwrap_or(0.0).max(1e-300);
        (0..self.times.len())
            .map(|k| (self.mass_injected[k] - self.mass_domain[k] - self.mass_exited[k]).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

/// Transport with the default grid and snapshot settings.
pub fn transport(
    hemo: &SimulationResult,
    tree: &VesselTree,
    inj: &InjectionSpec,
    diffusivity: f64,
) -> Result<ConcentrationField> {
    let cfg = TransportConfig {
        diffusivity,
        ..TransportConfig::default()
    };
    transport_with(hemo, tree, inj, &cfg)
}

struct Solver<'a> {
    tree: &'a VesselTree,
    grids: Vec<SegmentGrid>,
    outlets: [usize; 6],
    /// Concentration, mg/mm³.
    c: Vec<f64>,
    /// Age density: concentration times the mean time since the contrast
    /// entered the tree, mg·s/mm³.
    age: Vec<f64>,
    flux_c: Vec<f64>,
    flux_age: Vec<f64>,
    node_flow: Vec<f64>,
    node_c: Vec<f64>,
    node_age: Vec<f64>,
    diffusivity: f64,
    injected: f64,
    exited: f64,
    /// Mass and age-mass that left through each outlet.
    outlet_mass: [f64; 6],
    outlet_age: [f64; 6],
    c_max: f64,
    c_min: f64,
}

/// Upwind face fluxes for one segment, positive proximal → distal.
fn face_fluxes(qs: f64, cells: &[f64], upstream: f64, downstream: f64, flux: &mut [f64]) {
    let n = cells.len();
    if qs >= 0.0 {
        flux[0] = qs * upstream;
        for j in 1..=n {
            flux[j] = qs * cells[j - 1];
        }
    } else {
        for j in 0..n {
            flux[j] = qs * cells[j];
        }
        flux[n] = qs * downstream;
    }
}

/// Flux-form update followed by explicit diffusion with no-flux ends.
fn advect_diffuse(cells: &mut [f64], flux: &[f64], k: f64, r: f64) {
    let n = cells.len();
    for j in 0..n {
        cells[j] -= k * (flux[j + 1] - flux[j]);
    }
    if r > 0.0 && n > 1 {
        let mut left = 0.0;
        for j in 0..n {
            let cur = cells[j];
            let right = if j + 1 < n { r * (cells[j + 1] - cur) } else { 0.0 };
            cells[j] = cur + right - left;
            left = right;
        }
    }
}

impl<'a> Solver<'a> {
    /// One operator-split sub-step with segment flows `q` and inlet
    /// boundary concentration `c_in`. Both tracers share the operator; age
    /// additionally grows at the local concentration, and fresh contrast
    /// enters with zero age.
    fn substep(&mut self, q: &[f64], c_in: f64, dt: f64) {
        let tree = self.tree;
        let inlet = tree.inlet_index();
        // Node mixing from everything flowing into each node.
        self.node_c.iter_mut().for_each(|v| *v = 0.0);
        self.node_age.iter_mut().for_each(|v| *v = 0.0);
        self.node_flow.iter_mut().for_each(|v| *v = 0.0);
        for (s, g) in self.grids.iter().enumerate() {
            let qs = q[s];
            let (node, cell) = if qs > 0.0 {
                (tree.distal_node(s), g.offset + g.n_cells - 1)
            } else if qs < 0.0 {
                (tree.proximal_node(s), g.offset)
            } else {
                continue;
            };
            self.node_c[node] += qs.abs() * self.c[cell];
            self.node_age[node] += qs.abs() * self.age[cell];
            self.node_flow[node] += qs.abs();
        }
        for n in 0..self.node_c.len() {
            if self.node_flow[n] > 0.0 {
                self.node_c[n] /= self.node_flow[n];
                self.node_age[n] /= self.node_flow[n];
            }
        }

        for (s, g) in self.grids.iter().enumerate() {
            let qs = q[s];
            let range = g.offset..g.offset + g.n_cells;
            let n = g.n_cells;
            let outlet = self.outlets.iter().position(|&o| o == s);
            // Backflow into an outlet segment carries unlabeled blood.
            let (up_c, up_age) = if s == inlet {
                (c_in, 0.0)
            } else {
                let p = tree.proximal_node(s);
                (self.node_c[p], self.node_age[p])
            };
            let (down_c, down_age) = if outlet.is_some() {
                (0.0, 0.0)
            } else {
                let d = tree.distal_node(s);
                (self.node_c[d], self.node_age[d])
            };
            face_fluxes(qs, &self.c[range.clone()], up_c, down_c, &mut self.flux_c[..=n]);
            face_fluxes(qs, &self.age[range.clone()], up_age, down_age, &mut self.flux_age[..=n]);
            if s == inlet {
                if self.flux_c[0] > 0.0 {
                    self.injected += self.flux_c[0] * dt;
                } else {
                    self.exited -= self.flux_c[0] * dt;
                }
            }
            if let Some(j) = outlet {
                self.exited += self.flux_c[n] * dt;
                self.outlet_mass[j] += self.flux_c[n] * dt;
                self.outlet_age[j] += self.flux_age[n] * dt;
            }
            let k = dt / g.cell_volume();
            let r = self.diffusivity * dt / (g.dx * g.dx);
            advect_diffuse(&mut self.c[range.clone()], &self.flux_c[..=n], k, r);
            advect_diffuse(&mut self.age[range.clone()], &self.flux_age[..=n], k, r);
            for (a, &v) in self.age[range.clone()].iter_mut().zip(&self.c[range]) {
                *a += dt * v;
                self.c_max = self.c_max.max(v);
                self.c_min = self.c_min.min(v);
            }
        }
    }

    fn domain_mass(&self) -> f64 {
        self.grids
            .iter()
            .map(|g| g.cell_volume() * self.c[g.offset..g.offset + g.n_cells].iter().sum::<f64>())
            .sum()
    }
}

/// Solves contrast transport on the recorded hemodynamics. Segment flows are
/// taken as the mean of the two bracketing samples on each sample interval.
/// Snapshots are spaced `snapshot_interval` apart with one at the sample
/// nearest the injection onset, and always include the last sample.
pub fn transport_with(
    hemo: &SimulationResult,
    tree: &VesselTree,
    inj: &InjectionSpec,
    cfg: &TransportConfig,
) -> Result<ConcentrationField> {
    inj.validate()?;
    let n_seg = tree.segments().len();
    if hemo.q_seg.len() != n_seg {
        return Err(Error::Mismatch(format!(
            "hemodynamics carry {} segments, tree has {n_seg}",
            hemo.q_seg.len()
        )));
    }
    if hemo.len() < 2 {
        return Err(Error::InsufficientData("need at least two hemodynamic samples".into()));
    }
    let t_last = *hemo.t.last().unwrap();
    if inj.t_start < hemo.t[0] || inj.t_end() > t_last + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "injection window [{}, {}] outside simulated [{}, {t_last}]",
            inj.t_start,
            inj.t_end(),
            hemo.t[0]
        )));
    }

    let mut grids = Vec::with_capacity(n_seg);
    let mut offset = 0;
    for s in tree.segments() {
        let g = SegmentGrid::new(s.length, s.radius, cfg, offset);
        offset += g.n_cells;
        grids.push(g);
    }
    let total_cells = offset;
    let max_cells = grids.iter().map(|g| g.n_cells).max().unwrap_or(0);
    let min_dx = grids.iter().map(|g| g.dx).fold(f64::INFINITY, f64::min);

    let mut solver = Solver {
        tree,
        grids: grids.clone(),
        outlets: tree.outlet_segments(),
        c: vec![0.0; total_cells],
        age: vec![0.0; total_cells],
        flux_c: vec![0.0; max_cells + 1],
        flux_age: vec![0.0; max_cells + 1],
        node_flow: vec![0.0; tree.node_count()],
        node_c: vec![0.0; tree.node_count()],
        node_age: vec![0.0; tree.node_count()],
        diffusivity: cfg.diffusivity,
        injected: 0.0,
        exited: 0.0,
        outlet_mass: [0.0; 6],
        outlet_age: [0.0; 6],
        c_max: 0.0,
        c_min: 0.0,
    };

    let h = hemo.sample_interval();
    let snap_every = ((cfg.snapshot_interval / h).round() as usize).max(1);
    let n_samples = hemo.len();
    let n_snap = (n_samples - 1) / snap_every + 2;
    // Snapshots are phased on the injection onset so that one falls on it.
    let k_start = ((inj.t_start - hemo.t[0]) / h).round() as usize;
    let phase = k_start % snap_every;
    let mut field = ConcentrationField {
        state: hemo.state,
        injection: *inj,
        grids,
        times: Vec::with_capacity(n_snap),
        cells: Vec::with_capacity(n_snap),
        distal: (0..6).map(|_| Vec::with_capacity(n_snap)).collect(),
        inlet: Vec::with_capacity(n_snap),
        mass_domain: Vec::with_capacity(n_snap),
        mass_exited: Vec::with_capacity(n_snap),
        mass_injected: Vec::with_capacity(n_snap),
        max_concentration: 0.0,
        min_concentration: 0.0,
        outlet_exit_mass: [0.0; 6],
        outlet_mean_age: [0.0; 6],
    };
    let outlet_last: Vec<usize> = tree
        .outlet_segments()
        .iter()
        .map(|&s| field.grids[s].offset + field.grids[s].n_cells - 1)
        .collect();
    let inlet = tree.inlet_index();
    let diff_limit = if cfg.diffusivity > 0.0 {
        cfg.max_diffusion_number * min_dx * min_dx / cfg.diffusivity
    } else {
        f64::INFINITY
    };

    let mut q = vec![0.0; n_seg];
    for k in 0..n_samples {
        if k % snap_every == phase || k + 1 == n_samples {
            let t = hemo.t[k];
            field.times.push(t);
            field.cells.push(solver.c.clone());
            for (j, &idx) in outlet_last.iter().enumerate() {
                field.distal[j].push(solver.c[idx]);
            }
            field.inlet.push(inj.inlet_concentration(hemo.q_seg[inlet][k], t));
            field.mass_domain.push(solver.domain_mass());
            field.mass_exited.push(solver.exited);
            field.mass_injected.push(solver.injected);
        }
        if k + 1 == n_samples {
            break;
        }
        let (t0, t1) = (hemo.t[k], hemo.t[k + 1]);
        let dt = t1 - t0;
        let mut rate_max: f64 = 0.0;
        for s in 0..n_seg {
            q[s] = 0.5 * (hemo.q_seg[s][k] + hemo.q_seg[s][k + 1]);
            let g = &solver.grids[s];
            rate_max = rate_max.max(q[s].abs() / (g.area * g.dx));
        }
        let adv_limit = if rate_max > 0.0 { cfg.max_cfl / rate_max } else { f64::INFINITY };
        let limit = adv_limit.min(diff_limit);
        let n_sub = (dt / limit).ceil().max(1.0) as usize;
        let sub = dt / n_sub as f64;
        if sub < dt / 1.0e4 {
            return Err(Error::CflViolation(format!(
                "sub-step {sub:e} s below floor at t = {t0}"
            )));
        }
        let q_in = q[inlet];
        for i in 0..n_sub {
            let t_mid = t0 + (i as f64 + 0.5) * sub;
            let c_in = inj.inlet_concentration(q_in, t_mid);
            solver.substep(&q, c_in, sub);
        }
    }
    field.max_concentration = solver.c_max;
    field.min_concentration = solver.c_min;
    field.outlet_exit_mass = solver.outlet_mass;
    for j in 0..6 {
        field.outlet_mean_age[j] = solver.outlet_age[j] / solver.outlet_mass[j].max(f64::MIN_POSITIVE);
    }
    Ok(field)
}

/// Concentration at the most distal cell of a branch's outlet segment, at
/// the snapshot times.
pub fn distal_series(field: &ConcentrationField, branch: BranchLabel) -> Result<&[f64]> {
    branch
        .outlet_index()
        .map(|k| field.distal[k].as_slice())
        .ok_or_else(|| Error::UnknownBranch(branch.to_string()))
}
