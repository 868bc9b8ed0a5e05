//! Closed-loop 0D hemodynamics: ventricle with valves, systemic Windkessel,
//! resistive epicardial tree and six coronary outlet models, integrated with
//! fixed-step RK4.
//!
//! The epicardial tree has no storage, so at every stage evaluation its node
//! pressures follow from a linear nodal solve with the aortic-valve flow
//! injected at the root and the Windkessel and coronary capacitor pressures
//! as boundary values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpm::{elastance, LpmParameterSet, PhysioState};
use crate::transport::InjectionSpec;
use crate::units::{flow_to_l_per_min, pa_to_mmhg, volume_to_ml, BLOOD_VISCOSITY};
use crate::vessel::{BranchLabel, VesselTree};

/// Integration step, s.
pub const DEFAULT_DT: f64 = 1.0e-4;
/// Recorded every 100th step (100 Hz at the default step).
pub const DEFAULT_OUTPUT_STRIDE: usize = 100;

/// Cold-start LV volume, mm³.
pub const COLD_START_LV_VOLUME: f64 = 120_000.0;
/// Cold-start capacitor pressure, Pa.
pub const COLD_START_PRESSURE: f64 = 10_000.0;

/// Dynamic state. `p_cim` holds the pressure across each intramyocardial
/// compliance; the microvascular node sits at `p_cim + γ·P_LV`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HemoState {
    pub v_lv: f64,
    pub q_av: f64,
    pub q_mv: f64,
    pub p_cs: f64,
    pub p_ca: [f64; 6],
    pub p_cim: [f64; 6],
    pub av_open: bool,
    pub mv_open: bool,
}

impl HemoState {
    pub fn cold_start() -> Self {
        HemoState {
            v_lv: COLD_START_LV_VOLUME,
            q_av: 0.0,
            q_mv: 0.0,
            p_cs: COLD_START_PRESSURE,
            p_ca: [COLD_START_PRESSURE; 6],
            p_cim: [COLD_START_PRESSURE; 6],
            av_open: false,
            mv_open: false,
        }
    }

    fn to_vec(self) -> [f64; NSTATE] {
        let mut y = [0.0; NSTATE];
        y[0] = self.v_lv;
        y[1] = self.q_av;
        y[2] = self.q_mv;
        y[3] = self.p_cs;
        y[4..10].copy_from_slice(&self.p_ca);
        y[10..16].copy_from_slice(&self.p_cim);
        y
    }

    fn set_vec(&mut self, y: &[f64; NSTATE]) {
        self.v_lv = y[0];
        self.q_av = y[1];
        self.q_mv = y[2];
        self.p_cs = y[3];
        self.p_ca.copy_from_slice(&y[4..10]);
        self.p_cim.copy_from_slice(&y[10..16]);
    }

    fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

const NSTATE: usize = 16;

/// What drives the aortic root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InletDrive {
    /// Ventricle and valves.
    Heart,
    /// Prescribed constant root inflow (mm³/s); the ventricle is frozen and
    /// intramyocardial pressure is zero. Used for steady-state checks.
    ConstantFlow(f64),
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub tree: VesselTree,
    pub params: LpmParameterSet,
    pub dt: f64,
    pub n_cycles: usize,
    pub output_stride: usize,
    pub injection: Option<InjectionSpec>,
    pub viscosity: f64,
    pub drive: InletDrive,
}

impl SimulationConfig {
    pub fn new(tree: VesselTree, params: LpmParameterSet, n_cycles: usize) -> Self {
        SimulationConfig {
            tree,
            params,
            dt: DEFAULT_DT,
            n_cycles,
            output_stride: DEFAULT_OUTPUT_STRIDE,
            injection: None,
            viscosity: BLOOD_VISCOSITY,
            drive: InletDrive::Heart,
        }
    }

    /// Protocol cycle counts: 8 at rest, 9 at hyperemia.
    pub fn reference(state: PhysioState, tree: VesselTree) -> Self {
        let params = crate::lpm::reference_parameters(state);
        SimulationConfig::new(tree, params, protocol_cycles(state))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.n_cycles < 3 {
            return Err(Error::InvalidParameter("n_cycles must be at least 3".into()));
        }
        if self.output_stride == 0 {
            return Err(Error::InvalidParameter("output_stride must be at least 1".into()));
        }
        if !(self.viscosity > 0.0) {
            return Err(Error::InvalidParameter("viscosity must be positive".into()));
        }
        self.params.validate()
    }

    pub fn steps_per_cycle(&self) -> usize {
        (self.params.period / self.dt).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_cycle() * self.n_cycles
    }
}

pub fn protocol_cycles(state: PhysioState) -> usize {
    match state {
        PhysioState::Rest => 8,
        PhysioState::Hyperemia => 9,
    }
}

/// Precomputed network operators for one configuration.
#[derive(Debug, Clone)]
pub struct Network {
    n_nodes: usize,
    /// Inverse nodal conductance matrix, row-major.
    g_inv: Vec<f64>,
    seg_nodes: Vec<(usize, usize)>,
    seg_conductance: Vec<f64>,
    outlet_nodes: [usize; 6],
    r_a: [f64; 6],
    r_ap: [f64; 6],
    r_ad: [f64; 6],
    c_a: [f64; 6],
    c_im: [f64; 6],
    gamma: [f64; 6],
    p_v: [f64; 6],
}

impl Network {
    pub fn new(tree: &VesselTree, params: &LpmParameterSet, viscosity: f64) -> Result<Self> {
        let n = tree.node_count();
        let mut g = vec![0.0; n * n];
        let res = tree.resistances(viscosity);
        let mut seg_nodes = Vec::with_capacity(res.len());
        let mut seg_conductance = Vec::with_capacity(res.len());
        for (i, r) in res.iter().enumerate() {
            let (a, b) = (tree.proximal_node(i), tree.distal_node(i));
            let c = 1.0 / r;
            g[a * n + a] += c;
            g[b * n + b] += c;
            g[a * n + b] -= c;
            g[b * n + a] -= c;
            seg_nodes.push((a, b));
            seg_conductance.push(c);
        }
        g[0] += 1.0 / params.windkessel.r_sp;

        let mut outlet_nodes = [0; 6];
        let mut r_a = [0.0; 6];
        let mut r_ap = [0.0; 6];
        let mut r_ad = [0.0; 6];
        let mut c_a = [0.0; 6];
        let mut c_im = [0.0; 6];
        let mut gamma = [0.0; 6];
        let mut p_v = [0.0; 6];
        for (k, b) in BranchLabel::OUTLETS.iter().enumerate() {
            let o = params.outlet(*b)?;
            let node = tree.distal_node(tree.outlet_segment(*b)?);
            outlet_nodes[k] = node;
            g[node * n + node] += 1.0 / o.r_a;
            r_a[k] = o.r_a;
            r_ap[k] = o.r_ap;
            r_ad[k] = o.r_ad;
            c_a[k] = o.c_a;
            c_im[k] = o.c_im;
            gamma[k] = o.im_coupling;
            p_v[k] = o.p_v;
        }
        let g_inv = invert(&g, n)
            .ok_or_else(|| Error::InvalidParameter("singular nodal conductance matrix".into()))?;
        Ok(Network {
            n_nodes: n,
            g_inv,
            seg_nodes,
            seg_conductance,
            outlet_nodes,
            r_a,
            r_ap,
            r_ad,
            c_a,
            c_im,
            gamma,
            p_v,
        })
    }

    /// Node pressures for a root inflow and capacitor boundary pressures.
    fn solve_nodes(&self, q_root: f64, p_cs: f64, r_sp: f64, p_ca: &[f64; 6], out: &mut [f64]) {
        let n = self.n_nodes;
        let mut rhs = vec![0.0; n];
        rhs[0] = q_root + p_cs / r_sp;
        for k in 0..6 {
            rhs[self.outlet_nodes[k]] += p_ca[k] / self.r_a[k];
        }
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.g_inv[i * n..(i + 1) * n];
            *o = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn segment_count(&self) -> usize {
        self.seg_nodes.len()
    }
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
        }
        let d = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Instantaneous algebraic quantities at one state.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub p_lv: f64,
    pub p_node: Vec<f64>,
    pub q_seg: Vec<f64>,
    pub q_sys: f64,
    pub q_outlet: [f64; 6],
}

/// Stateful integrator for one configuration.
pub struct Integrator<'a> {
    cfg: &'a SimulationConfig,
    net: Network,
    scratch: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(cfg: &'a SimulationConfig) -> Result<Self> {
        let net = Network::new(&cfg.tree, &cfg.params, cfg.viscosity)?;
        let scratch = vec![0.0; net.n_nodes];
        Ok(Integrator { cfg, net, scratch })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    fn p_lv(&self, v_lv: f64, t: f64) -> f64 {
        match self.cfg.drive {
            InletDrive::Heart => {
                let h = &self.cfg.params.heart;
                elastance(&h.elastance, t) * (v_lv - h.v_unstressed)
            }
            InletDrive::ConstantFlow(_) => 0.0,
        }
    }

    fn root_inflow(&self, q_av: f64) -> f64 {
        match self.cfg.drive {
            InletDrive::Heart => q_av,
            InletDrive::ConstantFlow(q) => q,
        }
    }

    fn derivatives(&mut self, y: &[f64; NSTATE], t: f64, av_open: bool, mv_open: bool) -> [f64; NSTATE] {
        let p = &self.cfg.params;
        let h = &p.heart;
        let wk = &p.windkessel;
        let p_lv = self.p_lv(y[0], t);
        let mut p_ca = [0.0; 6];
        p_ca.copy_from_slice(&y[4..10]);
        self.net
            .solve_nodes(self.root_inflow(y[1]), y[3], wk.r_sp, &p_ca, &mut self.scratch);
        let p_root = self.scratch[0];

        let mut dy = [0.0; NSTATE];
        if let InletDrive::Heart = self.cfg.drive {
            dy[1] = if av_open { (p_lv - p_root - h.r_av * y[1]) / h.l_av } else { 0.0 };
            dy[2] = if mv_open { (h.p_la - p_lv - h.r_mv * y[2]) / h.l_mv } else { 0.0 };
            dy[0] = y[2] - y[1];
        }
        let q_sys = (p_root - y[3]) / wk.r_sp;
        dy[3] = (q_sys - (y[3] - wk.p_ref) / wk.r_sd) / wk.c_s;
        let net = &self.net;
        for k in 0..6 {
            let p_d = self.scratch[net.outlet_nodes[k]];
            let q_a = (p_d - y[4 + k]) / net.r_a[k];
            let p_im_node = y[10 + k] + net.gamma[k] * p_lv;
            let q_ap = (y[4 + k] - p_im_node) / net.r_ap[k];
            let q_ad = (p_im_node - net.p_v[k]) / net.r_ad[k];
            dy[4 + k] = (q_a - q_ap) / net.c_a[k];
            dy[10 + k] = (q_ap - q_ad) / net.c_im[k];
        }
        dy
    }

    /// Algebraic quantities (pressures and flows) at a state.
    pub fn snapshot(&mut self, s: &HemoState, t: f64) -> Snapshot {
        let wk = self.cfg.params.windkessel;
        let p_lv = self.p_lv(s.v_lv, t);
        self.net
            .solve_nodes(self.root_inflow(s.q_av), s.p_cs, wk.r_sp, &s.p_ca, &mut self.scratch);
        let p_node = self.scratch.clone();
        let q_seg = self
            .net
            .seg_nodes
            .iter()
            .zip(&self.net.seg_conductance)
            .map(|(&(a, b), g)| (p_node[a] - p_node[b]) * g)
            .collect();
        let mut q_outlet = [0.0; 6];
        for k in 0..6 {
            q_outlet[k] = (p_node[self.net.outlet_nodes[k]] - s.p_ca[k]) / self.net.r_a[k];
        }
        Snapshot {
            p_lv,
            q_sys: (p_node[0] - s.p_cs) / wk.r_sp,
            p_node,
            q_seg,
            q_outlet,
        }
    }

    /// Advances one RK4 step with valve open/close logic.
    pub fn step(&mut self, state: &HemoState, t: f64) -> Result<HemoState> {
        let dt = self.cfg.dt;
        let h = self.cfg.params.heart;
        let mut s = *state;
        if let InletDrive::Heart = self.cfg.drive {
            let p_lv = self.p_lv(s.v_lv, t);
            let wk = self.cfg.params.windkessel;
            self.net.solve_nodes(s.q_av, s.p_cs, wk.r_sp, &s.p_ca, &mut self.scratch);
            let p_root = self.scratch[0];
            if !s.av_open && p_lv > p_root {
                s.av_open = true;
            }
            if !s.mv_open && h.p_la > p_lv {
                s.mv_open = true;
            }
            if !s.av_open {
                s.q_av = 0.0;
            }
            if !s.mv_open {
                s.q_mv = 0.0;
            }
        }
        let y0 = s.to_vec();
        let (av, mv) = (s.av_open, s.mv_open);
        let k1 = self.derivatives(&y0, t, av, mv);
        let y1 = axpy(&y0, 0.5 * dt, &k1);
        let k2 = self.derivatives(&y1, t + 0.5 * dt, av, mv);
        let y2 = axpy(&y0, 0.5 * dt, &k2);
        let k3 = self.derivatives(&y2, t + 0.5 * dt, av, mv);
        let y3 = axpy(&y0, dt, &k3);
        let k4 = self.derivatives(&y3, t + dt, av, mv);
        let mut y = y0;
        for i in 0..NSTATE {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s.set_vec(&y);
        if s.av_open && s.q_av <= 0.0 {
            s.q_av = 0.0;
            s.av_open = false;
        }
        if s.mv_open && s.q_mv <= 0.0 {
            s.q_mv = 0.0;
            s.mv_open = false;
        }
        if !s.is_finite() {
            return Err(Error::NumericalDivergence {
                t: t + dt,
                what: "non-finite state".into(),
            });
        }
        Ok(s)
    }
}

fn axpy(y: &[f64; NSTATE], a: f64, k: &[f64; NSTATE]) -> [f64; NSTATE] {
    let mut out = *y;
    for i in 0..NSTATE {
        out[i] += a * k[i];
    }
    out
}

/// Advances one step; convenience wrapper building the network on the fly.
pub fn step(state: &HemoState, t: f64, cfg: &SimulationConfig) -> Result<HemoState> {
    Integrator::new(cfg)?.step(state, t)
}

/// Recorded hemodynamic time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub state: PhysioState,
    pub period: f64,
    pub n_cycles: usize,
    /// Integration step, s.
    pub dt: f64,
    /// Integration steps between recorded samples.
    pub stride: usize,
    pub t: Vec<f64>,
    /// `p_node[node][sample]`; node 0 is the aortic root.
    pub p_node: Vec<Vec<f64>>,
    /// `q_seg[segment][sample]`, positive from proximal to distal.
    pub q_seg: Vec<Vec<f64>>,
    /// Flow from the aortic root into the systemic Windkessel.
    pub q_sys: Vec<f64>,
    /// Inflow of each coronary outlet model, [`BranchLabel::OUTLETS`] order.
    pub q_outlet: Vec<Vec<f64>>,
    pub q_av: Vec<f64>,
    pub q_mv: Vec<f64>,
    pub v_lv: Vec<f64>,
    pub p_lv: Vec<f64>,
    pub p_ao: Vec<f64>,
    /// Distal pressure at each outlet node, [`BranchLabel::OUTLETS`] order.
    pub p_d: Vec<Vec<f64>>,
    /// Sample index of every cycle boundary, `n_cycles + 1` entries.
    pub cycle_starts: Vec<usize>,
}

impl SimulationResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn p_d(&self, branch: BranchLabel) -> Result<&[f64]> {
        branch
            .outlet_index()
            .map(|k| self.p_d[k].as_slice())
            .ok_or_else(|| Error::UnknownBranch(branch.to_string()))
    }

    /// Sample range of the last complete cycle.
    pub fn final_cycle(&self) -> Result<std::ops::Range<usize>> {
        let n = self.cycle_starts.len();
        if n < 3 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 complete cycles, have {}",
                n.saturating_sub(1)
            )));
        }
        Ok(self.cycle_starts[n - 2]..self.cycle_starts[n - 1])
    }

    pub fn cycle_range(&self, cycle: usize) -> Option<std::ops::Range<usize>> {
        if cycle + 1 < self.cycle_starts.len() {
            Some(self.cycle_starts[cycle]..self.cycle_starts[cycle + 1])
        } else {
            None
        }
    }

    /// Keeps every `factor`-th sample.
    pub fn downsample(&self, factor: usize) -> SimulationResult {
        let factor = factor.max(1);
        let pick = |v: &Vec<f64>| v.iter().step_by(factor).copied().collect::<Vec<_>>();
        let pick_all = |v: &Vec<Vec<f64>>| v.iter().map(pick).collect::<Vec<_>>();
        SimulationResult {
            state: self.state,
            period: self.period,
            n_cycles: self.n_cycles,
            dt: self.dt,
            stride: self.stride * factor,
            t: pick(&self.t),
            p_node: pick_all(&self.p_node),
            q_seg: pick_all(&self.q_seg),
            q_sys: pick(&self.q_sys),
            q_outlet: pick_all(&self.q_outlet),
            q_av: pick(&self.q_av),
            q_mv: pick(&self.q_mv),
            v_lv: pick(&self.v_lv),
            p_lv: pick(&self.p_lv),
            p_ao: pick(&self.p_ao),
            p_d: pick_all(&self.p_d),
            cycle_starts: self.cycle_starts.iter().map(|c| c.div_ceil(factor)).collect(),
        }
    }

    /// Largest relative flow-balance residual over all samples and nodes.
    /// Flows are scaled by the peak root inflow.
    pub fn junction_residual(&self, tree: &VesselTree) -> f64 {
        let n_nodes = tree.node_count();
        let scale = self
            .q_av
            .iter()
            .chain(&self.q_seg[tree.inlet_index()])
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-30);
        let outlets = tree.outlet_segments();
        let mut worst = 0.0f64;
        let mut balance = vec![0.0; n_nodes];
        for k in 0..self.len() {
            balance.iter_mut().for_each(|b| *b = 0.0);
            balance[0] += self.q_sys[k] - self.q_av[k];
            for (i, q) in self.q_seg.iter().enumerate() {
                balance[tree.proximal_node(i)] += q[k];
                balance[tree.distal_node(i)] -= q[k];
            }
            for (j, &seg) in outlets.iter().enumerate() {
                balance[tree.distal_node(seg)] += self.q_outlet[j][k];
            }
            worst = balance.iter().fold(worst, |m, b| m.max(b.abs()));
        }
        worst / scale
    }
}

/// Runs the configured number of cycles from the cold start.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationResult> {
    cfg.validate()?;
    simulate_from(cfg, HemoState::cold_start())
}

pub fn simulate_from(cfg: &SimulationConfig, initial: HemoState) -> Result<SimulationResult> {
    let mut integ = Integrator::new(cfg)?;
    let n_seg = cfg.tree.segments().len();
    let n_nodes = cfg.tree.node_count();
    let total = cfg.total_steps();
    let spc = cfg.steps_per_cycle();
    let stride = cfg.output_stride;
    let n_samples = total / stride + 1;

    let mut res = SimulationResult {
        state: cfg.params.state,
        period: cfg.params.period,
        n_cycles: cfg.n_cycles,
        dt: cfg.dt,
        stride,
        t: Vec::with_capacity(n_samples),
        p_node: (0..n_nodes).map(|_| Vec::with_capacity(n_samples)).collect(),
        q_seg: (0..n_seg).map(|_| Vec::with_capacity(n_samples)).collect(),
        q_sys: Vec::with_capacity(n_samples),
        q_outlet: (0..6).map(|_| Vec::with_capacity(n_samples)).collect(),
        q_av: Vec::with_capacity(n_samples),
        q_mv: Vec::with_capacity(n_samples),
        v_lv: Vec::with_capacity(n_samples),
        p_lv: Vec::with_capacity(n_samples),
        p_ao: Vec::with_capacity(n_samples),
        p_d: (0..6).map(|_| Vec::with_capacity(n_samples)).collect(),
        cycle_starts: (0..=cfg.n_cycles).map(|c| (c * spc).div_ceil(stride)).collect(),
    };
    let outlet_nodes = integ.network().outlet_nodes;
    let mut s = initial;
    for k in 0..=total {
        let t = k as f64 * cfg.dt;
        if k % stride == 0 {
            let snap = integ.snapshot(&s, t);
            res.t.push(t);
            for (i, p) in snap.p_node.iter().enumerate() {
                res.p_node[i].push(*p);
            }
            for (i, q) in snap.q_seg.iter().enumerate() {
                res.q_seg[i].push(*q);
            }
            for j in 0..6 {
                res.q_outlet[j].push(snap.q_outlet[j]);
                res.p_d[j].push(snap.p_node[outlet_nodes[j]]);
            }
            res.q_sys.push(snap.q_sys);
            res.q_av.push(match cfg.drive {
                InletDrive::Heart => s.q_av,
                InletDrive::ConstantFlow(q) => q,
            });
            res.q_mv.push(s.q_mv);
            res.v_lv.push(s.v_lv);
            res.p_lv.push(snap.p_lv);
            res.p_ao.push(snap.p_node[0]);
        }
        if k < total {
            s = integ.step(&s, t)?;
        }
    }
    Ok(res)
}

/// Hemodynamic summary over the final full cycle. Flows in L/min,
/// pressures in mmHg, volumes in mL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemoMetrics {
    pub q_mean: f64,
    pub q_max: f64,
    pub p_sys: f64,
    pub p_dia: f64,
    pub edv: f64,
    pub esv: f64,
    pub sv: f64,
    /// Ejection fraction in percent.
    pub ef: f64,
    pub q_lct: f64,
    pub q_rct: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn summarize_hemodynamics(result: &SimulationResult) -> Result<HemoMetrics> {
    let r = result.final_cycle()?;
    if r.is_empty() {
        return Err(Error::InsufficientData("empty final cycle".into()));
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let q = &result.q_av[r.clone()];
    let p = &result.p_ao[r.clone()];
    let v = &result.v_lv[r.clone()];
    let edv = max(v);
    let esv = min(v);
    let outlet_mean = |b: BranchLabel| mean(&result.q_outlet[b.outlet_index().unwrap()][r.clone()]);
    let q_lct: f64 = BranchLabel::LEFT.iter().map(|&b| outlet_mean(b)).sum();
    let q_rct: f64 = BranchLabel::RIGHT.iter().map(|&b| outlet_mean(b)).sum();
    Ok(HemoMetrics {
        q_mean: flow_to_l_per_min(mean(q)),
        q_max: flow_to_l_per_min(max(q)),
        p_sys: pa_to_mmhg(max(p)),
        p_dia: pa_to_mmhg(min(p)),
        edv: volume_to_ml(edv),
        esv: volume_to_ml(esv),
        sv: volume_to_ml(edv - esv),
        ef: 100.0 * (edv - esv) / edv,
        q_lct: flow_to_l_per_min(q_lct),
        q_rct: flow_to_l_per_min(q_rct),
    })
}

/// Cycle-mean of a series over the given cycle.
pub fn cycle_mean(series: &[f64], range: std::ops::Range<usize>) -> f64 {
    mean(&series[range])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpm::reference_parameters;

    fn synthetic(p_ao: Vec<f64>, v_lv: Vec<f64>) -> SimulationResult {
        let n = p_ao.len();
        let mut res = SimulationResult {
            state: PhysioState::Rest,
            period: 1.0,
            n_cycles: 2,
            dt: 0.01,
            stride: 1,
            t: (0..n).map(|i| i as f64 * 0.01).collect(),
            p_node: vec![p_ao.clone()],
            q_seg: vec![],
            q_sys: vec![0.0; n],
            q_outlet: vec![vec![1000.0; n]; 6],
            q_av: vec![0.0; n],
            q_mv: vec![0.0; n],
            v_lv,
            p_lv: vec![0.0; n],
            p_ao,
            p_d: vec![vec![0.0; n]; 6],
            cycle_starts: vec![0, n / 2, n - 1],
        };
        res.q_seg.clear();
        res
    }

    #[test]
    fn constant_pressure_summary() {
        let n = 201;
        let p = vec![crate::units::mmhg_to_pa(100.0); n];
        let v: Vec<f64> = (0..n)
            .map(|i| if i % 100 == 10 { 77_563.0 } else if i % 100 == 60 { 160_608.0 } else { 120_000.0 })
            .collect();
        let m = summarize_hemodynamics(&synthetic(p, v)).unwrap();
        assert!((m.p_sys - 100.0).abs() < 1e-12);
        assert!((m.p_dia - 100.0).abs() < 1e-12);
        assert!((m.sv - 83.045).abs() < 1e-9);
        assert!((m.ef - 51.707).abs() < 1e-3);
        // four left outlets at 1000 mm³/s each
        assert!((m.q_lct - 0.24).abs() < 1e-12);
        assert!((m.q_rct - 0.12).abs() < 1e-12);
    }

    #[test]
    fn insufficient_cycles() {
        let mut r = synthetic(vec![1.0; 10], vec![1.0; 10]);
        r.cycle_starts = vec![0, 9];
        assert!(matches!(summarize_hemodynamics(&r), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn closed_valve_stays_pinned() {
        let cfg = SimulationConfig::reference(PhysioState::Rest, VesselTree::default_tree());
        let mut s = HemoState::cold_start();
        // Diastole at t = 0.8 s: LV pressure far below aortic pressure.
        s.v_lv = 100_000.0;
        let next = step(&s, 0.8, &cfg).unwrap();
        assert!(!next.av_open);
        assert_eq!(next.q_av, 0.0);
    }

    #[test]
    fn unforced_system_decays() {
        let mut params = reference_parameters(PhysioState::Rest);
        params.heart.elastance.e_max = 10.0;
        params.heart.elastance.e_min = 10.0;
        params.heart.p_la = 0.0;
        let mut cfg = SimulationConfig::new(VesselTree::default_tree(), params, 3);
        cfg.dt = 1e-4;
        let mut integ = Integrator::new(&cfg).unwrap();
        let mut s = HemoState::cold_start();
        let steps = 600_000;
        for k in 0..steps {
            s = integ.step(&s, k as f64 * cfg.dt).unwrap();
        }
        let snap = integ.snapshot(&s, steps as f64 * cfg.dt);
        assert!(snap.p_node.iter().all(|p| p.abs() < 1e-3), "{:?}", snap.p_node);
        assert!(snap.q_seg.iter().all(|q| q.abs() < 1e-3));
        assert!(s.q_av.abs() < 1e-3 && s.q_mv == 0.0);
        assert!(s.p_ca.iter().chain(&s.p_cim).all(|p| p.abs() < 1e-3));
    }

    /// Analytic DC operating point: capacitors carry no current, so the root
    /// sees the Windkessel resistance in parallel with the tree + outlet
    /// resistances.
    fn dc_root_pressure(cfg: &SimulationConfig, q: f64) -> f64 {
        let tree = &cfg.tree;
        let r = tree.resistances(cfg.viscosity);
        // Equivalent resistance below each segment's distal node.
        let n = tree.segments().len();
        let mut below = vec![f64::INFINITY; n];
        for &i in tree.topological_order().iter().rev() {
            let children: Vec<usize> = (0..n).filter(|&j| tree.parent_of(j) == Some(i)).collect();
            below[i] = if children.is_empty() {
                let label = tree.segments()[i].label;
                cfg.params.coronary[&label].total_resistance()
            } else {
                1.0 / children.iter().map(|&c| 1.0 / (r[c] + below[c])).sum::<f64>()
            };
        }
        let root = tree.inlet_index();
        let g = 1.0 / (cfg.params.windkessel.r_sp + cfg.params.windkessel.r_sd) + 1.0 / (r[root] + below[root]);
        q / g
    }

    #[test]
    fn constant_inflow_steady_state() {
        let q = 80_000.0;
        let mut cfg = SimulationConfig::reference(PhysioState::Rest, VesselTree::default_tree());
        cfg.drive = InletDrive::ConstantFlow(q);
        cfg.n_cycles = 40;
        cfg.output_stride = 1000;
        let res = simulate(&cfg).unwrap();
        let p_end = *res.p_ao.last().unwrap();
        let expect = dc_root_pressure(&cfg, q);
        assert!((p_end - expect).abs() / expect < 1e-6, "{p_end} vs {expect}");

        // Coronary outlets effectively closed: pure three-element Windkessel.
        for c in cfg.params.coronary.values_mut() {
            c.r_a *= 1e12;
            c.r_ap *= 1e12;
            c.r_ad *= 1e12;
        }
        let res = simulate(&cfg).unwrap();
        let wk = cfg.params.windkessel;
        let expect = q * (wk.r_sp + wk.r_sd) + wk.p_ref;
        let p_end = *res.p_ao.last().unwrap();
        assert!((p_end - expect).abs() / expect < 1e-6, "{p_end} vs {expect}");
    }
}
