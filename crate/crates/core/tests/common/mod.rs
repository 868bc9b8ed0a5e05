#![allow(dead_code)]

use coronary_cip::hemo::SimulationResult;
use coronary_cip::lpm::PhysioState;
use coronary_cip::nn::network::{backward, NetworkSpec, Params};
use coronary_cip::transport::{transport_with, ConcentrationField, InjectionSpec, TransportConfig};
use coronary_cip::vessel::{BranchLabel, VesselTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Constant outlet flows on the default tree; every upstream segment
/// carries the sum of the flows below it.
pub fn steady_hemo(tree: &VesselTree, q_out: [f64; 6], t_end: f64, h: f64) -> SimulationResult {
    let n = (t_end / h).round() as usize + 1;
    let mut q_seg = vec![0.0; tree.segments().len()];
    for (k, &s) in tree.outlet_segments().iter().enumerate() {
        let mut seg = Some(s);
        while let Some(i) = seg {
            q_seg[i] += q_out[k];
            seg = tree.parent_of(i);
        }
    }
    SimulationResult {
        state: PhysioState::Rest,
        period: t_end,
        n_cycles: 1,
        dt: h,
        stride: 1,
        t: (0..n).map(|i| i as f64 * h).collect(),
        p_node: vec![vec![0.0; n]; tree.node_count()],
        q_seg: q_seg.iter().map(|&q| vec![q; n]).collect(),
        q_sys: vec![0.0; n],
        q_outlet: q_out.iter().map(|&q| vec![q; n]).collect(),
        q_av: vec![0.0; n],
        q_mv: vec![0.0; n],
        v_lv: vec![0.0; n],
        p_lv: vec![0.0; n],
        p_ao: vec![0.0; n],
        p_d: vec![vec![0.0; n]; 6],
        cycle_starts: vec![0, n - 1],
    }
}

pub fn short_bolus(t_start: f64) -> InjectionSpec {
    InjectionSpec {
        c0: 0.4,
        rate: 1000.0,
        volume: 50.0,
        t_start,
    }
}

/// Volume over flow summed along the path from the inlet to an outlet.
pub fn plug_transit(tree: &VesselTree, hemo: &SimulationResult, branch: BranchLabel) -> f64 {
    let mut seg = Some(tree.outlet_segment(branch).unwrap());
    let mut t = 0.0;
    while let Some(i) = seg {
        t += tree.segments()[i].volume() / hemo.q_seg[i][0];
        seg = tree.parent_of(i);
    }
    t
}

pub fn steady_field(q_out: [f64; 6], t_end: f64) -> (VesselTree, SimulationResult, ConcentrationField) {
    let tree = VesselTree::default_tree();
    let hemo = steady_hemo(&tree, q_out, t_end, 1e-3);
    let field = transport_with(&hemo, &tree, &short_bolus(0.05), &TransportConfig::default()).unwrap();
    (tree, hemo, field)
}

/// Per-tensor gradient check result.
pub struct GradCheck {
    pub tensor: usize,
    pub layer: &'static str,
    pub checked: usize,
    pub max_rel: f64,
}

/// Central differences against the analytic gradient of every parameter,
/// in f64. Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(in_channels: usize, length: usize, batch: usize, seed: u64) -> Vec<GradCheck> {
    let spec = NetworkSpec::with_length(in_channels, length, 0.125).unwrap();
    let mut p = Params::<f64>::he_init(&spec, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    // Non-zero biases so ReLU and pooling see varied activation patterns.
    for (t, shape) in p.tensors.iter_mut().zip(spec.param_shapes()) {
        if shape.len() == 1 {
            t.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let x: Vec<f64> = (0..batch * spec.sample_width()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grads) = backward(&p, &x, &y, batch).unwrap();
    let h = 1e-5;
    let layers = ["conv weight", "conv bias", "dense weight", "dense bias"];
    (0..p.tensors.len())
        .map(|ti| {
            let mut max_rel: f64 = 0.0;
            for j in 0..p.tensors[ti].len() {
                let orig = p.tensors[ti][j];
                p.tensors[ti][j] = orig + h;
                let (lp, _) = backward(&p, &x, &y, batch).unwrap();
                p.tensors[ti][j] = orig - h;
                let (lm, _) = backward(&p, &x, &y, batch).unwrap();
                p.tensors[ti][j] = orig;
                let num = (lp - lm) / (2.0 * h);
                let ana = grads[ti][j];
                max_rel = max_rel.max((ana - num).abs() / ana.abs().max(num.abs()).max(1e-6));
            }
            GradCheck {
                tensor: ti,
                layer: layers[if ti < 8 { 0 } else { 2 } + ti % 2],
                checked: p.tensors[ti].len(),
                max_rel,
            }
        })
        .collect()
}

/// Left-outlet inflow volume over the final cycle, split at the end of
/// ventricular relaxation `t_r`: (diastole, systole), mm³.
pub fn left_flow_by_phase(r: &SimulationResult, t_r: f64) -> (f64, f64) {
    let range = r.final_cycle().unwrap();
    let t0 = r.t[range.start];
    let h = r.sample_interval();
    let (mut dia, mut sys) = (0.0, 0.0);
    for i in range {
        let q: f64 = BranchLabel::LEFT.iter().map(|b| r.q_outlet[b.outlet_index().unwrap()][i]).sum();
        if r.t[i] - t0 > t_r {
            dia += q * h;
        } else {
            sys += q * h;
        }
    }
    (dia, sys)
}
