//! Control-on/off spectrum of the warm cell and the operating windows where
//! the signal is transmitted and shifted by about pi.
//!
//!     cargo run --release --example spectrum

use std::f64::consts::PI;
use std::path::Path;

use ladder_phase::config::Config;
use ladder_phase::constants::rad_to_hz;
use ladder_phase::scan::run_spectrum;

fn main() -> ladder_phase::Result<()> {
    let cfg = Config::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/golden_spectrum.toml"))?;
    let run = run_spectrum(&cfg, Some((-6.0, 2.0, 33)))?;
    println!("{:>8} {:>10} {:>10} {:>10}", "ds GHz", "T_on", "T_off", "dphi/pi");
    for r in &run.rows {
        println!(
            "{:>8.2} {:>10.4} {:>10.4} {:>10.3}",
            rad_to_hz(r.delta_s) * 1e-9,
            r.t_on,
            r.t_off,
            r.dphi / PI
        );
    }

    let fine = run_spectrum(&cfg, None)?;
    println!("\noperating windows (T >= 0.9, |dphi| >= 0.9 pi, flat to 0.1 pi):");
    for w in &fine.roi {
        println!(
            "  {:.3} .. {:.3} GHz  min T_on {:.3}  dphi {:.3} pi",
            rad_to_hz(w.delta_s_start) * 1e-9,
            rad_to_hz(w.delta_s_stop) * 1e-9,
            w.min_t_on,
            w.mean_dphi / PI
        );
    }
    Ok(())
}
