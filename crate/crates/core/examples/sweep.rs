//! Phase shift against control pulse energy at a fixed far detuning.

use std::f64::consts::PI;
use std::path::Path;

use ladder_phase::scan::sweep;

fn main() -> ladder_phase::Result<()> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/golden_pulsed.toml"))?;
    let mut doc: toml::Value = toml::from_str(&text).map_err(|e| ladder_phase::Error::Config(e.to_string()))?;
    doc["plan"]["physics"] = toml::Value::String("steady".into());

    let energies = [0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
    println!("{:>10} {:>10} {:>10}", "E (nJ)", "T", "|dphi|/pi");
    for r in sweep(&doc, "fields.control_energy_nj", &energies)? {
        println!(
            "{:>10.2} {:>10.4} {:>10.4}",
            r.value,
            r.mean_transmission,
            r.mean_dphi_rad / PI
        );
    }
    Ok(())
}
