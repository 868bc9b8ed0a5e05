use coronary_cip::hemo::{simulate, summarize_hemodynamics, SimulationConfig};
use coronary_cip::lpm::PhysioState;
use coronary_cip::vessel::VesselTree;

fn main() -> coronary_cip::Result<()> {
    for state in [PhysioState::Rest, PhysioState::Hyperemia] {
        let cfg = SimulationConfig::reference(state, VesselTree::default_tree());
        let t0 = std::time::Instant::now();
        let res = simulate(&cfg)?;
        let m = summarize_hemodynamics(&res)?;
        println!("{state}: {m:?} ({:.2?})", t0.elapsed());
    }
    Ok(())
}
