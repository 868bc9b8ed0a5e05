mod common;

use coronary_cip::hemo::{simulate, summarize_hemodynamics, SimulationConfig};
use coronary_cip::lpm::{reference_parameters, PhysioState};
use coronary_cip::vessel::{BranchLabel, VesselTree};

fn reference(state: PhysioState) -> SimulationConfig {
    SimulationConfig::reference(state, VesselTree::default_tree())
}

#[test]
fn rest_reference_flow_is_diastole_dominated() {
    let cfg = reference(PhysioState::Rest);
    let r = simulate(&cfg).unwrap();
    let (dia, sys) = common::left_flow_by_phase(&r, cfg.params.heart.elastance.t_r);
    assert!(dia > sys, "diastole {dia} vs systole {sys}");
}

#[test]
fn reference_runs_conserve_flow_and_keep_valves_forward() {
    for state in [PhysioState::Rest, PhysioState::Hyperemia] {
        let cfg = reference(state);
        let r = simulate(&cfg).unwrap();
        assert!(r.junction_residual(&cfg.tree) < 1e-9);
        assert!(r.q_av.iter().chain(&r.q_mv).all(|&q| q >= 0.0));
        let m = summarize_hemodynamics(&r).unwrap();
        assert!(m.p_sys > m.p_dia && m.ef > 0.0 && m.ef < 100.0);
    }
}

#[test]
fn raising_coronary_resistance_lowers_every_outlet_flow() {
    let base = reference(PhysioState::Rest);
    let mut stiff = base.clone();
    for o in stiff.params.coronary.values_mut() {
        o.r_a *= 1.5;
        o.r_ap *= 1.5;
        o.r_ad *= 1.5;
    }
    let (a, b) = (simulate(&base).unwrap(), simulate(&stiff).unwrap());
    let range = a.final_cycle().unwrap();
    for br in BranchLabel::OUTLETS {
        let k = br.outlet_index().unwrap();
        let mean = |r: &coronary_cip::hemo::SimulationResult| {
            r.q_outlet[k][range.clone()].iter().sum::<f64>() / range.len() as f64
        };
        assert!(mean(&b) < mean(&a), "{br}");
    }
}

#[test]
fn hyperemia_raises_cardiac_output() {
    let rest = summarize_hemodynamics(&simulate(&reference(PhysioState::Rest)).unwrap()).unwrap();
    let hyper = summarize_hemodynamics(&simulate(&reference(PhysioState::Hyperemia)).unwrap()).unwrap();
    assert!(hyper.q_mean > rest.q_mean);
    assert!(hyper.q_lct > 2.0 * rest.q_lct);
    assert_eq!(reference_parameters(PhysioState::Hyperemia).state, PhysioState::Hyperemia);
}
