mod common;

use common::{plug_transit, short_bolus, steady_field, steady_hemo};
use coronary_cip::indices::transit_times;
use coronary_cip::transport::{transport_with, InjectionSpec, TransportConfig};
use coronary_cip::vessel::{BranchLabel, VesselTree};
use proptest::prelude::*;

const EQUAL: [f64; 6] = [500.0; 6];

#[test]
fn steady_transit_matches_volume_over_flow() {
    let (tree, hemo, field) = steady_field(EQUAL, 10.0);
    let t = transit_times(&field).unwrap();
    for b in BranchLabel::OUTLETS {
        let oracle = plug_transit(&tree, &hemo, b);
        let rel = (t[&b] - oracle).abs() / oracle;
        assert!(rel < 0.02, "{b}: {} vs V/Q {oracle} ({rel:.2e})", t[&b]);
    }
}

#[test]
fn halving_flow_doubles_transit_time() {
    let (_, _, full) = steady_field(EQUAL, 10.0);
    let (_, _, half) = steady_field(EQUAL.map(|q| q / 2.0), 16.0);
    let (a, b) = (transit_times(&full).unwrap(), transit_times(&half).unwrap());
    for br in BranchLabel::OUTLETS {
        let ratio = b[&br] / a[&br];
        assert!((ratio - 2.0).abs() < 0.04, "{br}: ratio {ratio}");
    }
}

#[test]
fn washout_empties_the_tree() {
    let (_, _, field) = steady_field(EQUAL, 10.0);
    let c0 = field.injection.c0;
    let last = field.cells.last().unwrap();
    assert!(last.iter().all(|&c| c < 1e-6 * c0));
    assert!(field.mass_balance_error() < 1e-12);
    let injected = *field.mass_injected.last().unwrap();
    assert!((injected - field.outlet_exit_mass.iter().sum::<f64>()).abs() < 1e-9 * injected);
}

#[test]
fn fast_injection_saturates_inlet_at_c0() {
    let inj = InjectionSpec {
        c0: 0.4,
        rate: 1e12,
        volume: 1e12,
        t_start: 0.0,
    };
    assert!((inj.inlet_concentration(500.0, 0.5) - 0.4).abs() < 1e-9);
    let tree = VesselTree::default_tree();
    let hemo = steady_hemo(&tree, EQUAL, 1.0, 1e-3);
    let field = transport_with(&hemo, &tree, &inj, &TransportConfig::default()).unwrap();
    let first = field.cells.last().unwrap()[tree.inlet_index()];
    assert!(first > 0.999 * 0.4 && first <= 0.4, "inlet cell {first}");
    assert!(field.max_concentration <= 0.4);
}

#[test]
fn rejects_injection_outside_the_run() {
    let tree = VesselTree::default_tree();
    let hemo = steady_hemo(&tree, EQUAL, 0.5, 1e-3);
    assert!(transport_with(&hemo, &tree, &short_bolus(0.49), &TransportConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_closes_and_stays_bounded(
        q in proptest::array::uniform6(100.0f64..2000.0),
        onset in 0.0f64..0.5,
    ) {
        let tree = VesselTree::default_tree();
        let hemo = steady_hemo(&tree, q, 1.5, 1e-3);
        let field = transport_with(&hemo, &tree, &short_bolus(onset), &TransportConfig::default()).unwrap();
        prop_assert!(field.mass_balance_error() < 1e-9);
        prop_assert!(field.min_concentration >= 0.0);
        prop_assert!(field.max_concentration <= field.injection.c0);
    }
}
