//! Trains a small IMR deep ensemble on a reduced campaign, evaluates it on
//! the held-out runs and prints predictions with their spread.
//!
//! `cargo run --release --example train_ensemble`

use coronary_cip::dataset::{build_dataset, run_campaigns, CampaignPlan, Split};
use coronary_cip::nn::{evaluate, train_ensemble, NetworkSpec, Task, TrainConfig};
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let campaigns = run_campaigns(&CampaignPlan::new(80, 0, 3), &VesselTree::default_tree())?;
    let ds = build_dataset(Task::Imr, &campaigns)?;
    let spec = NetworkSpec::for_task(Task::Imr, 0.25)?;
    let cfg = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };
    let model = train_ensemble(Task::Imr, &spec, &ds.data(Split::Train), &ds.data(Split::Val), &cfg, 3, 11, 0)?;
    for (k, h) in model.histories.iter().enumerate() {
        println!("member {k}: best epoch {}, val mse {:.4}", h.best_epoch, h.best_val_mse);
    }

    let test = ds.data(Split::Test);
    let report = evaluate(&model, &test)?;
    println!("test n {}: R² {:.3}, mse {:.3}, r(|e|,σ) {:?}", report.n, report.r2, report.mse, report.pearson_abs_error_sigma);
    for (i, p) in model.predict(&test)?.iter().enumerate() {
        println!(
            "truth {:6.2}  mean {:6.2}  σ {:.2}  95% [{:.2}, {:.2}]",
            test.targets[i],
            p.mean,
            p.sigma(),
            p.ci95[0],
            p.ci95[1]
        );
    }
    Ok(())
}
