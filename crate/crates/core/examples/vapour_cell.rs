//! Rubidium vapour density, Doppler width and the velocity quadrature used
//! for Doppler averaging.

use ladder_phase::atoms::{number_density, vapour_pressure, velocity_grid, LadderAtom, VapourCell};

fn main() -> ladder_phase::Result<()> {
    let atom = LadderAtom::rubidium87();
    println!("{:>8} {:>12} {:>12} {:>10}", "T (C)", "P (Pa)", "N (m^-3)", "u (m/s)");
    for t_c in [20.0, 50.0, 80.0, 97.6, 120.0] {
        let t = 273.15 + t_c;
        println!(
            "{t_c:>8.1} {:>12.3e} {:>12.3e} {:>10.1}",
            vapour_pressure(t)?,
            number_density(t)?,
            atom.thermal_velocity(t)
        );
    }

    let cell = VapourCell::at_temperature(0.07, 273.15 + 97.6, 0.045)?;
    let grid = velocity_grid(cell.temperature, atom.mass, 101, 4.0)?;
    println!(
        "\n7 cm cell at 97.6 C: N = {:.3e} m^-3, loss factor {:.3}",
        cell.number_density,
        cell.loss_factor()
    );
    println!(
        "{} velocity classes, rms {:.1} m/s (thermal {:.1} m/s)",
        grid.len(),
        grid.rms(),
        atom.thermal_velocity(cell.temperature)
    );
    Ok(())
}
