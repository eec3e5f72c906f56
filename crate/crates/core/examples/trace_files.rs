//! Writing a synthetic trace in both file formats, reading it back and
//! analyzing the stored copy.

use ladder_phase::analysis::{analyze_cw, calibrate};
use ladder_phase::config::Config;
use ladder_phase::interferometer::trace_io::{read_trace, write_binary, write_csv};
use ladder_phase::scan::{cw_options, run_virtual_cw};

fn main() -> ladder_phase::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/golden_cw.toml");
    let cfg = Config::load(&path)?;
    let run = run_virtual_cw(&cfg)?;

    let dir = std::env::temp_dir().join("ladder-phase-trace-example");
    std::fs::create_dir_all(&dir)?;
    let (csv, bin) = (dir.join("trace.csv"), dir.join("trace.bin"));
    write_csv(&run.trace, &csv)?;
    write_binary(&run.trace, &bin)?;
    for p in [&csv, &bin] {
        println!("{}: {} bytes", p.display(), std::fs::metadata(p)?.len());
    }

    let back = read_trace(&bin)?;
    let timeline = &run.timeline;
    let cal = calibrate(&back, &[timeline.reference], Some(timeline.fringe_period_samples))?;
    let analysis = analyze_cw(&back, &cal, &cw_options(&back, timeline, cfg.model()?.tau)?)?;
    let same = analysis
        .rows
        .iter()
        .zip(&run.analysis.rows)
        .all(|(a, b)| a.dphi_rad == b.dphi_rad);
    println!(
        "{} windows re-analyzed from the binary file, identical: {same}",
        analysis.rows.len()
    );
    Ok(())
}
