//! Runs both campaigns at reduced size and builds the IMR and CFR datasets.
//!
//! `cargo run --release --example build_datasets [out-dir]`

use std::path::PathBuf;

use coronary_cip::dataset::{build_dataset, run_campaigns, CampaignPlan, Split};
use coronary_cip::nn::Task;
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "examples-out/datasets".into()));
    let campaigns = run_campaigns(&CampaignPlan::new(40, 20, 42), &VesselTree::default_tree())?;
    campaigns.save(&out.join("campaigns.json"))?;
    for task in [Task::Imr, Task::Cfr] {
        let ds = build_dataset(task, &campaigns)?;
        let m = &ds.manifest;
        println!(
            "{task}: train {} / val {} / test {}, pre-filter {:?}, excluded {:?}",
            m.counts.train, m.counts.val, m.counts.test, m.pre_filter_pairs, m.excluded_pairs
        );
        let targets: Vec<f64> = ds.split(Split::Train).iter().map(|r| r.target).collect();
        let (lo, hi) = targets.iter().fold((f64::MAX, f64::MIN), |(a, b), &t| (a.min(t), b.max(t)));
        println!("   training targets in [{lo:.3}, {hi:.3}] {}", m.target_units);
        ds.save(&out.join(task.as_str()))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
