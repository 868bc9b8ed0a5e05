//! K-fold selection of the network width factor on a reduced IMR dataset.
//!
//! `cargo run --release --example scaling_search`

use coronary_cip::dataset::{build_dataset, run_campaigns, CampaignPlan, Split};
use coronary_cip::nn::{kfold_scaling_search, Task, TrainConfig};
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    let campaigns = run_campaigns(&CampaignPlan::new(60, 0, 5), &VesselTree::default_tree())?;
    let ds = build_dataset(Task::Imr, &campaigns)?;
    let cfg = TrainConfig {
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let report = kfold_scaling_search(&ds.data(Split::Train), &[0.125, 0.25, 0.5], 3, &cfg, 1)?;
    for e in &report.entries {
        println!("f {:<5}  {:>7} params  mean val mse {:.4}  folds {:.4?}", e.factor, e.param_count, e.mean_mse, e.fold_mse);
    }
    println!("selected {}", report.selected);
    Ok(())
}
