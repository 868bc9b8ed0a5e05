//! Latin hypercube designs and a small simulation campaign with its
//! per-run physics diagnostics.
//!
//! `cargo run --release --example lhs_campaign`

use coronary_cip::campaign::{run_campaign, CampaignOptions};
use coronary_cip::design::{is_latin_hypercube, lhs_sample, DesignRange};
use coronary_cip::lpm::{reference_parameters, PhysioState};
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    let state = PhysioState::Hyperemia;
    let range = DesignRange::for_state(state);
    let points = lhs_sample(8, state, 7);
    println!("bounds {:?}, latin hypercube: {}", range.bounds, is_latin_hypercube(&points, state));
    for p in &points {
        let v = p.values();
        let strata: Vec<_> = (0..4).map(|d| range.stratum(d, v[d], points.len()).unwrap()).collect();
        println!("x = [{:.3}, {:.3}, {:.3}, {:.3}]  strata {strata:?}", v[0], v[1], v[2], v[3]);
    }

    let t0 = std::time::Instant::now();
    let report = run_campaign(&points, &reference_parameters(state), &VesselTree::default_tree(), &CampaignOptions::default())?;
    println!("\n{} runs in {:.1?}, {} failed", points.len(), t0.elapsed(), report.failures.len());
    for s in &report.samples {
        let d = &s.diagnostics;
        println!(
            "run {}  IMR {:6.2}  mass err {:.1e}  c [{:.1e}, {:.3}]  junction {:.1e}",
            s.run_id,
            s.imr.unwrap_or(f64::NAN),
            d.mass_balance_error,
            d.min_concentration,
            d.max_concentration,
            d.junction_residual
        );
    }
    Ok(())
}
