//! Forward interferometer model and its inversion for one window, including
//! the two-valued phase that a single window leaves.

use std::f64::consts::PI;

use ladder_phase::analysis::{interferometer_phase, invert, invert_joint, Calibration};
use ladder_phase::interferometer::{forward_cw, InterferometerModel};

fn main() -> ladder_phase::Result<()> {
    let (t, dphi, kctau) = (0.84f64.sqrt(), 0.53 * PI, 1.1);
    let model = InterferometerModel::new(5e-9, 0.5, 0.93, kctau)?;
    let cal = Calibration::new(model.a, model.gamma)?;

    // control off: the fringe position
    let (p1, p2) = forward_cw(1.0, 0.0, &model);
    let cos_kctau = interferometer_phase(p1, p2, &cal)?.cos_kctau;

    let (v1, v2) = forward_cw(t, dphi, &model);
    let e = invert(v1, v2, &cal, cos_kctau)?;
    println!("V = ({v1:.6}, {v2:.6}) V, cos kctau = {cos_kctau:.6}");
    println!(
        "single window: T = {:.6}, dphi = {:.6} pi, other branch {:?}",
        e.transmission,
        e.dphi / PI,
        e.dphi_alt.map(|x| x / PI)
    );

    // the echo window sees the phase with the opposite sign
    let echo = forward_cw(t, -dphi, &model);
    let j = invert_joint((v1, v2), echo, &cal, cos_kctau, Some(kctau.sin()))?;
    println!(
        "with echo: T = {:.6}, dphi = {:.6} pi, flags [{}]",
        j.transmission,
        j.dphi / PI,
        j.flags
    );
    Ok(())
}
