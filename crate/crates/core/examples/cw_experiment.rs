//! Virtual CW experiment: detuning ramp with control pulses, synthetic
//! detector trace, analysis, and comparison against ground truth.

use std::f64::consts::PI;
use std::path::Path;

use ladder_phase::config::Config;
use ladder_phase::scan::run_virtual_cw;

fn main() -> ladder_phase::Result<()> {
    let cfg = Config::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/golden_cw.toml"))?;
    let run = run_virtual_cw(&cfg)?;
    println!(
        "{} samples, calibration a = {:.4} V, gamma = {:.4}",
        run.trace.len(),
        run.summary.calibration.a,
        run.summary.calibration.gamma
    );
    println!(
        "{:>7} {:>9} {:>9} {:>9} {:>9}  flags",
        "ds GHz", "T true", "T", "dphi/pi", "true"
    );
    for r in &run.rows {
        println!(
            "{:>7.2} {:>9.5} {:>9.5} {:>9.5} {:>9.5}  {}",
            r.delta_s_ghz,
            r.true_transmission,
            r.transmission,
            r.dphi_rad / PI,
            r.true_dphi_rad / PI,
            r.flags
        );
    }
    println!(
        "max error: T {:.1e}, dphi {:.1e} rad over {} windows",
        run.summary.max_error_t, run.summary.max_error_dphi, run.summary.compared
    );
    Ok(())
}
