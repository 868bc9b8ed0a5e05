use coronary_cip::design::{is_latin_hypercube, lhs_sample, DesignRange};
use coronary_cip::lpm::PhysioState;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_stratum_holds_exactly_one_point(n in 1usize..200, seed: u64, hyper: bool) {
        let state = if hyper { PhysioState::Hyperemia } else { PhysioState::Rest };
        let pts = lhs_sample(n, state, seed);
        prop_assert_eq!(pts.len(), n);
        prop_assert!(is_latin_hypercube(&pts, state));
        let range = DesignRange::for_state(state);
        for dim in 0..4 {
            let mut seen = vec![false; n];
            for p in &pts {
                let s = range.stratum(dim, p.values()[dim], n).unwrap();
                prop_assert!(!seen[s]);
                seen[s] = true;
            }
        }
    }
}

#[test]
fn state_ranges_differ() {
    let rest = DesignRange::for_state(PhysioState::Rest);
    let hyper = DesignRange::for_state(PhysioState::Hyperemia);
    assert_eq!(rest.bounds[1], (1.0, 2.0));
    assert_eq!(hyper.bounds[1], (1.0, 5.0));
    assert_eq!(hyper.bounds[2], (0.1, 1.0));
}
