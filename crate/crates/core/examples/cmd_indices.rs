//! IMR, CFR and FFR from a resting and a hyperemic run, then the averaged
//! indices as hyperemic microvascular resistance is scaled up, either
//! uniformly or in the distal part only.
//!
//! `cargo run --release --example cmd_indices`

use coronary_cip::campaign::{run_point, CampaignOptions};
use coronary_cip::design::DesignPoint;
use coronary_cip::indices::{averaged_cfr, average_indices};
use coronary_cip::lpm::{reference_parameters, PhysioState};
use coronary_cip::pipeline::{reference_runs, reference_study};
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    let tree = VesselTree::default_tree();
    let opts = CampaignOptions::default();

    let runs = reference_runs(&tree, &opts)?;
    let study = reference_study(&runs)?;
    let ix = &study.indices;
    println!("branch  T_rest  T_hyper  IMR     CFR    FFR");
    for (b, imr) in &ix.imr_i {
        println!(
            "{b:>6}  {:.3}   {:.3}    {imr:6.2}  {:.2}   {:.3}",
            ix.t_mn_rest[b], ix.t_mn_hyper[b], ix.cfr_i[b], study.ffr[b]
        );
    }
    println!("left tree: IMR {:.2} mmHg·s, CFR {:.3}", ix.imr, ix.cfr);

    let rest = &runs[0].sample;
    let hyper = reference_parameters(PhysioState::Hyperemia);
    println!("\n k     uniform (x1 = x2 = k)   distal only (x2 = k)");
    println!("       IMR     CFR             IMR     CFR");
    for k in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let base = DesignPoint::identity(PhysioState::Hyperemia);
        let mut row = format!("{k:.1}");
        for p in [DesignPoint { x1: k, x2: k, ..base }, DesignPoint { x2: k, ..base }] {
            let s = run_point(0, &p, &hyper, &tree, &opts)?;
            let p_d = s.p_d.clone().unwrap_or_default();
            let idx = average_indices(&rest.t_mn, &s.t_mn, &p_d)?;
            row += &format!("   {:6.2}  {:.3}       ", idx.imr, averaged_cfr(&rest.t_mn, &s.t_mn)?);
        }
        println!("{}", row.trim_end());
    }
    Ok(())
}
