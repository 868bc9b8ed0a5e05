mod common;

use coronary_cip::nn::bundle;
use coronary_cip::nn::ensemble::ensemble_stats;
use coronary_cip::nn::network::{predict_normalized, to_channels_last};
use coronary_cip::nn::train::NormStats;
use coronary_cip::nn::{train, train_ensemble, Data, NetworkSpec, Params, Task, TrainConfig, SCALING_FACTORS};
use proptest::prelude::*;

#[test]
fn gradients_match_central_differences() {
    for channels in [1, 2] {
        for g in common::gradient_check(channels, 32, 3, 7) {
            assert!(
                g.max_rel < 1e-4,
                "{channels} channel(s), tensor {} ({}): {:.3e}",
                g.tensor,
                g.layer,
                g.max_rel
            );
        }
    }
}

#[test]
fn flatten_is_1024_wide_at_unit_factor() {
    for task in [Task::Imr, Task::Cfr] {
        let spec = NetworkSpec::for_task(task, 1.0).unwrap();
        let trace = spec.shape_trace();
        assert_eq!(trace[0], (task.in_channels(), 256));
        assert_eq!(&trace[1..5], &[(8, 128), (16, 64), (32, 32), (64, 16)]);
        assert_eq!(&trace[5..], &[(1024, 1), (1024, 1), (128, 1), (1, 1)]);
    }
}

#[test]
fn every_scaling_factor_builds() {
    for f in SCALING_FACTORS {
        let spec = NetworkSpec::new(1, f).unwrap();
        assert_eq!(spec.flatten_width(), (1024.0 * f).round() as usize);
    }
    assert!(NetworkSpec::new(1, 3.0).is_err());
}

#[test]
fn ensemble_hand_case_is_exact() {
    let p = ensemble_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert_eq!((p.mean, p.variance), (3.0, 2.0));
    let same = ensemble_stats(&[0.3; 5]).unwrap();
    assert_eq!(same.variance, 0.0);
    assert_eq!(same.ci95, [0.3, 0.3]);
}

proptest! {
    #[test]
    fn ensemble_variance_is_non_negative(v in proptest::collection::vec(-1e3f64..1e3, 1..8)) {
        let p = ensemble_stats(&v).unwrap();
        prop_assert!(p.variance >= 0.0);
        prop_assert!(p.ci95[0] <= p.mean && p.mean <= p.ci95[1]);
        let all_same = v.iter().all(|&x| x == v[0]);
        prop_assert_eq!(p.variance == 0.0, all_same);
    }

    #[test]
    fn normalization_round_trips(y in proptest::collection::vec(-50.0f64..50.0, 2..20), q in -100.0f64..100.0) {
        let n = NormStats::from_targets(&y).unwrap();
        prop_assert!((n.denormalize(n.normalize(q)) - q).abs() < 1e-12 * q.abs().max(1.0));
    }
}

/// Targets are a smooth function of the profile so a small network can fit them.
fn toy_data(n: usize, channels: usize, offset: usize) -> Data {
    let mut d = Data::new(channels, 32);
    for i in 0..n {
        let a = 0.5 + ((i + offset) % 17) as f64 / 17.0;
        let input: Vec<f32> = (0..channels * 32)
            .map(|k| (a * (k % 32) as f64 / 32.0).sin() as f32)
            .collect();
        d.push(&input, 3.0 * a + 1.0).unwrap();
    }
    d
}

#[test]
fn training_lowers_validation_error_and_is_reproducible() {
    let spec = NetworkSpec::with_length(1, 32, 0.25).unwrap();
    let (tr, va) = (toy_data(96, 1, 0), toy_data(24, 1, 5));
    let cfg = TrainConfig {
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let a = train(&spec, &tr, &va, &cfg, 11).unwrap();
    let b = train(&spec, &tr, &va, &cfg, 11).unwrap();
    assert_eq!(a.params, b.params);
    let h = &a.history;
    assert!(h.best_val_mse < h.val_mse[0]);
    assert!(h.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(h.best_val_mse, h.val_mse[h.best_epoch]);
}

#[test]
fn concurrent_and_serial_ensembles_agree_and_round_trip() {
    let spec = NetworkSpec::with_length(2, 32, 0.125).unwrap();
    let (tr, va) = (toy_data(40, 2, 0), toy_data(10, 2, 3));
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let serial = train_ensemble(Task::Cfr, &spec, &tr, &va, &cfg, 3, 5, 1).unwrap();
    let parallel = train_ensemble(Task::Cfr, &spec, &tr, &va, &cfg, 3, 5, 3).unwrap();
    assert_eq!(serial, parallel);
    assert_ne!(serial.members[0], serial.members[1]);

    let dir = tempfile::tempdir().unwrap();
    bundle::save(&serial, dir.path()).unwrap();
    let loaded = bundle::load(dir.path()).unwrap();
    assert_eq!(loaded, serial);
    assert_eq!(loaded.predict(&va).unwrap(), serial.predict(&va).unwrap());
}

#[test]
fn channels_last_layout() {
    let sample: Vec<f32> = (0..6).map(|v| v as f32).collect();
    let mut out = vec![0.0f64; 6];
    to_channels_last(&sample, 2, 3, &mut out);
    assert_eq!(out, vec![0.0, 3.0, 1.0, 4.0, 2.0, 5.0]);
}

#[test]
fn batch_prediction_matches_single_samples() {
    let spec = NetworkSpec::with_length(1, 32, 0.125).unwrap();
    let p = Params::<f64>::he_init(&spec, 2);
    let x: Vec<f64> = (0..3 * 32).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
    let all = predict_normalized(&p, &x, 3).unwrap();
    for i in 0..3 {
        let one = predict_normalized(&p, &x[i * 32..(i + 1) * 32], 1).unwrap();
        assert!((one[0] - all[i]).abs() < 1e-12);
    }
}
