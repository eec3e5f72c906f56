//! Doppler-averaged response of the cell to a 4 ns control pulse, from the
//! time-dependent Bloch equations.

use std::f64::consts::PI;

use ladder_phase::atoms::{velocity_grid, LadderAtom, VapourCell};
use ladder_phase::constants::hz_to_rad;
use ladder_phase::obe::{pulse_response, steady_state, PulseShape};
use ladder_phase::steadystate::FieldConfig;

fn main() -> ladder_phase::Result<()> {
    let atom = LadderAtom::rubidium87();
    let cell = VapourCell::at_temperature(0.07, 273.15 + 97.6, 0.045)?;
    let grid = velocity_grid(cell.temperature, atom.mass, 41, 4.0)?;

    let fields = FieldConfig {
        rabi_s: atom.gamma_ge / 100.0,
        ..FieldConfig::new(hz_to_rad(-4.5e9), hz_to_rad(1.6e9), 0.0)
    };
    // with much sharper edges the ringing of the dressed coherence shows up
    // as transient gain, because χ(t) is mapped to T(t) instantaneously
    let control = PulseShape::square(1e-9, 4e-9, hz_to_rad(2e9), 1e-9)?;
    let times: Vec<f64> = (0..=28).map(|i| 0.25e-9 * i as f64).collect();
    let r = pulse_response(&control, &fields, &atom, &cell, &grid, &times, 1e-8)?;

    println!("{:>7} {:>8} {:>10} {:>9}", "t ns", "Omega_c", "T", "dphi/pi");
    for (i, t) in r.times.iter().enumerate() {
        println!(
            "{:>7.2} {:>8.3} {:>10.4} {:>9.3}",
            t * 1e9,
            control.envelope(*t),
            r.transmission[i],
            r.dphi[i] / PI
        );
    }

    // a single velocity class settles to the stationary solution
    let rho = steady_state(&fields.with_rabi_c(hz_to_rad(2e9)), 0.0, &atom)?;
    println!("\nstationary rho_ge at v = 0 with the control on: {:.3e}", rho.rho_ge());
    Ok(())
}
