use std::collections::{BTreeMap, HashSet};

use coronary_cip::campaign::{RunDiagnostics, Sample};
use coronary_cip::cip::{Cip, CIP_LENGTH};
use coronary_cip::dataset::{
    build_cfr_dataset, build_imr_dataset, split_sizes, CfrPairConfig, Dataset, ImrSplitConfig, Split, CFR_CAP,
};
use coronary_cip::design::DesignPoint;
use coronary_cip::lpm::PhysioState;
use coronary_cip::vessel::BranchLabel;

/// Samples whose transit times grow with the run index, so CFR spans the cap.
fn synthetic(state: PhysioState, n: usize) -> Vec<Sample> {
    let (base, step) = match state {
        PhysioState::Hyperemia => (0.1, 0.001),
        PhysioState::Rest => (0.2, 0.005),
    };
    (0..n)
        .map(|i| {
            let t = base + step * i as f64;
            Sample {
                run_id: i,
                design: DesignPoint::new(state, 1.0, 1.0 + i as f64 / n as f64, 0.5, 0.5),
                cip: Cip {
                    values: (0..CIP_LENGTH).map(|k| ((k + i) % 7) as f64).collect(),
                    window_start: 0.0,
                    window_end: 6.0,
                    state,
                    threshold: 1e-3,
                },
                t_mn: BranchLabel::OUTLETS.iter().map(|&b| (b, t)).collect::<BTreeMap<_, _>>(),
                p_d: None,
                imr: (state == PhysioState::Hyperemia).then_some(10.0 + i as f64),
                diagnostics: RunDiagnostics {
                    mass_balance_error: 0.0,
                    min_concentration: 0.0,
                    max_concentration: 0.0,
                    min_valve_flow: 0.0,
                    junction_residual: 0.0,
                    injected_mass: 0.0,
                },
            }
        })
        .collect()
}

fn ids(ds: &Dataset, split: Split, slot: usize) -> HashSet<usize> {
    ds.split(split).iter().map(|r| r.ids[slot]).collect()
}

#[test]
fn imr_split_is_510_30_60_and_disjoint() {
    let ds = build_imr_dataset(&synthetic(PhysioState::Hyperemia, 600), ImrSplitConfig::default(), 42).unwrap();
    let c = ds.manifest.counts;
    assert_eq!((c.train, c.val, c.test), (510, 30, 60));
    let (tr, va) = (ids(&ds, Split::Train, 0), ids(&ds, Split::Val, 0));
    let te = ids(&ds, Split::Test, 0);
    assert_eq!(tr.len() + va.len() + te.len(), 600);
    assert!(tr.is_disjoint(&te) && tr.is_disjoint(&va) && va.is_disjoint(&te));
    assert!(ds.train.iter().all(|r| r.input.len() == CIP_LENGTH && r.target == 10.0 + r.ids[0] as f64));
}

#[test]
fn cfr_pairs_are_capped_and_holdout_runs_stay_out_of_training() {
    let hyper = synthetic(PhysioState::Hyperemia, 600);
    let rest = synthetic(PhysioState::Rest, 100);
    let ds = build_cfr_dataset(&hyper, &rest, CfrPairConfig::default(), 42).unwrap();
    let m = &ds.manifest;
    assert_eq!(m.pre_filter_pairs, Some(48_600));
    let kept = m.counts.train + m.counts.val;
    assert_eq!(kept + m.excluded_pairs.unwrap(), 48_600);
    assert!(m.excluded_pairs.unwrap() > 0);
    assert!(m.counts.test <= 600);
    for s in Split::ALL {
        assert!(ds.split(s).iter().all(|r| r.target <= CFR_CAP && r.input.len() == 2 * CIP_LENGTH));
    }
    for slot in [0, 1] {
        let test = ids(&ds, Split::Test, slot);
        assert!(test.is_disjoint(&ids(&ds, Split::Train, slot)));
        assert!(test.is_disjoint(&ids(&ds, Split::Val, slot)));
    }
    let same = build_cfr_dataset(&hyper, &rest, CfrPairConfig::default(), 42).unwrap();
    assert_eq!(same, ds);
}

#[test]
fn dataset_survives_a_save_load_cycle() {
    let ds = build_imr_dataset(&synthetic(PhysioState::Hyperemia, 40), ImrSplitConfig::default(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    assert_eq!(back.test.len(), ds.test.len());
    for (a, b) in back.train.iter().zip(&ds.train) {
        assert_eq!((&a.ids, &a.input), (&b.ids, &b.input));
        assert!((a.target - b.target).abs() < 1e-12);
    }
}

#[test]
fn rounding_gives_training_the_remainder() {
    let c = split_sizes(101, 0.05, 0.10);
    assert_eq!((c.train, c.val, c.test), (86, 5, 10));
}

#[test]
fn mixed_states_are_rejected() {
    let rest = synthetic(PhysioState::Rest, 10);
    assert!(build_imr_dataset(&rest, ImrSplitConfig::default(), 0).is_err());
    assert!(build_cfr_dataset(&rest, &rest, CfrPairConfig::for_counts(10, 10), 0).is_err());
}
