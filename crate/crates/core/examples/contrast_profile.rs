//! One hyperemic run with a contrast bolus: transit times per outlet, the
//! left-tree intensity profile, and the exported series.
//!
//! `cargo run --release --example contrast_profile [out-dir]`

use std::path::PathBuf;

use coronary_cip::campaign::{run_point_full, CampaignOptions};
use coronary_cip::design::DesignPoint;
use coronary_cip::lpm::{reference_parameters, PhysioState};
use coronary_cip::pipeline::{cip_series, write_run};
use coronary_cip::plot::{line_plot, write_svg, Axes};
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "examples-out/contrast_profile".into()));
    let state = PhysioState::Hyperemia;
    let run = run_point_full(
        0,
        &DesignPoint::identity(state),
        &reference_parameters(state),
        &VesselTree::default_tree(),
        &CampaignOptions::default(),
    )?;

    for (b, t) in &run.sample.t_mn {
        println!("{b:>4}  T_mn {t:.3} s");
    }
    let cip = &run.sample.cip;
    let (peak_at, peak) = cip
        .values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
    println!(
        "profile: {} samples over {:.2} s, peak {peak:.3} at {:.2} s, half decay {:?}",
        cip.values.len(),
        cip.window_end - cip.window_start,
        cip.times()[peak_at] - cip.window_start,
        cip.half_decay_time()
    );
    println!("mass balance error {:.1e}", run.sample.diagnostics.mass_balance_error);

    write_run(&out, &run, 10, false)?;
    let svg = line_plot(
        &[cip_series("hyperemia", cip)],
        &Axes::new("Contrast intensity profile", "time since injection (s)", "normalized area"),
    )?;
    write_svg(&out.join("cip.svg"), &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}
