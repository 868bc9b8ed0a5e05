//! The whole chain at smoke-test scale: reference runs, campaigns, datasets,
//! ensembles, evaluation, figures and a digest manifest. Running it twice
//! gives byte-identical output apart from `timings.json`.
//!
//! `cargo run --release --example quick_reproduce [out-dir]`

use std::path::PathBuf;

use coronary_cip::pipeline::{reproduce, verify, Execution, ReproduceConfig};

fn main() -> coronary_cip::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "examples-out/reproduce-quick".into()));
    let summary = reproduce(&ReproduceConfig::quick(42), Execution::default(), &out)?;
    println!("reference CFR {:.3}, IMR {:.2}", summary.reference.indices.cfr, summary.reference.indices.imr);
    println!("IMR model R² {:.3}, CFR model R² {:.3}", summary.imr.r2, summary.cfr.r2);
    let manifest = verify(&out)?;
    println!("{} artifacts verified in {}", manifest.artifacts.len(), out.display());
    Ok(())
}
