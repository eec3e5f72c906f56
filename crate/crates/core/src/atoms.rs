//! Atomic constants of the three-level ladder, vapour-cell state and the
//! thermal velocity distribution used for Doppler averaging.

use serde::{Deserialize, Serialize};

use crate::constants::{hz_to_rad, ATOMIC_MASS_UNIT, BOLTZMANN, TORR};
use crate::error::{Error, Result};

/// Melting point of rubidium (K).
pub const RB_MELTING_POINT: f64 = 312.46;

/// Valid temperature range of [`number_density`] (K).
pub const NUMBER_DENSITY_RANGE: (f64, f64) = (250.0, 500.0);

// Alcock-type correlation, log10(P / torr) = A - B / T.
const LIQUID_A: f64 = 2.881 + 4.312;
const LIQUID_B: f64 = 4040.0;
const SOLID_B: f64 = 4215.0;
// The tabulated solid-phase constant (2.881 + 4.857) leaves a 3.5 % jump at
// the melting point; it is re-pinned so both branches meet there.
const SOLID_A: f64 = LIQUID_A - LIQUID_B / RB_MELTING_POINT + SOLID_B / RB_MELTING_POINT;

/// Three-level ladder g -> e -> d (5S1/2 -> 5P3/2 -> 5D5/2).
///
/// Rates are angular frequencies in rad/s, lengths in m, dipoles in C m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderAtom {
    /// Population decay rate e -> g.
    pub gamma_ge: f64,
    /// Population decay rate d -> e.
    pub gamma_ed: f64,
    /// Additional pure dephasing of level e (adds to the g-e coherence rate).
    pub dephasing_e: f64,
    /// Additional pure dephasing of level d (adds to the g-d coherence rate).
    pub dephasing_d: f64,
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub dipole_ge: f64,
    pub dipole_ed: f64,
    pub mass: f64,
}

impl LadderAtom {
    /// Rubidium-87 with literature decay rates and the 775.8 nm control line.
    ///
    /// The g-e dipole is the isotropic-polarization effective D2 dipole; the
    /// e-d dipole is the effective value implied by the 5D5/2 radiative rate.
    pub fn rubidium87() -> Self {
        LadderAtom {
            gamma_ge: hz_to_rad(6.07e6),
            gamma_ed: hz_to_rad(0.66e6),
            dephasing_e: 0.0,
            dephasing_d: 0.0,
            lambda_s: 780.241e-9,
            lambda_c: 775.8e-9,
            dipole_ge: 2.537e-29,
            dipole_ed: 8.3e-30,
            mass: 86.909_180_527 * ATOMIC_MASS_UNIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma_ge", self.gamma_ge),
            ("gamma_ed", self.gamma_ed),
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
            ("dipole_ge", self.dipole_ge),
            ("dipole_ed", self.dipole_ed),
            ("mass", self.mass),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.dephasing_e >= 0.0 && self.dephasing_d >= 0.0) {
            return Err(Error::Argument("dephasing rates must be non-negative".into()));
        }
        if self.lambda_c >= self.lambda_s {
            return Err(Error::Argument(format!(
                "ladder ordering requires lambda_c < lambda_s ({} >= {})",
                self.lambda_c, self.lambda_s
            )));
        }
        Ok(())
    }

    /// Signal wavenumber 2 pi / lambda_s.
    pub fn k_signal(&self) -> f64 {
        std::f64::consts::TAU / self.lambda_s
    }

    /// Control wavenumber 2 pi / lambda_c.
    pub fn k_control(&self) -> f64 {
        std::f64::consts::TAU / self.lambda_c
    }

    /// Decay rate of the g-e coherence.
    pub fn coherence_ge(&self) -> f64 {
        0.5 * self.gamma_ge + self.dephasing_e
    }

    /// Decay rate of the g-d coherence.
    pub fn coherence_gd(&self) -> f64 {
        0.5 * self.gamma_ed + self.dephasing_d
    }

    /// One-dimensional thermal velocity spread sqrt(kB T / m).
    pub fn thermal_velocity(&self, temperature: f64) -> f64 {
        (BOLTZMANN * temperature / self.mass).sqrt()
    }
}

impl Default for LadderAtom {
    fn default() -> Self {
        Self::rubidium87()
    }
}

/// Isothermal vapour cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VapourCell {
    /// Cell length L (m).
    pub length: f64,
    /// Vapour temperature (K).
    pub temperature: f64,
    /// Atomic number density N (m^-3).
    pub number_density: f64,
    /// Control-independent fractional power loss.
    pub insertion_loss: f64,
}

impl VapourCell {
    /// Cell whose number density follows the rubidium vapour-pressure curve.
    pub fn at_temperature(length: f64, temperature: f64, insertion_loss: f64) -> Result<Self> {
        let cell = VapourCell {
            length,
            temperature,
            number_density: number_density(temperature)?,
            insertion_loss,
        };
        cell.validate()?;
        Ok(cell)
    }

    /// Cell with an explicit number density, bypassing the vapour-pressure curve.
    pub fn with_number_density(
        length: f64,
        temperature: f64,
        number_density: f64,
        insertion_loss: f64,
    ) -> Result<Self> {
        let cell = VapourCell {
            length,
            temperature,
            number_density,
            insertion_loss,
        };
        cell.validate()?;
        Ok(cell)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::Argument(format!(
                "cell length must be positive, got {}",
                self.length
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Argument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.number_density >= 0.0 && self.number_density.is_finite()) {
            return Err(Error::Argument(format!(
                "number density must be non-negative, got {}",
                self.number_density
            )));
        }
        if !(0.0..1.0).contains(&self.insertion_loss) {
            return Err(Error::Argument(format!(
                "insertion loss must lie in [0, 1), got {}",
                self.insertion_loss
            )));
        }
        Ok(())
    }

    /// Power transmission factor 1 - insertion_loss.
    pub fn loss_factor(&self) -> f64 {
        1.0 - self.insertion_loss
    }
}

/// Saturated rubidium vapour pressure in Pa.
///
/// Solid branch below the melting point, liquid branch above; both of the
/// form log10(P / torr) = A - B / T.
pub fn vapour_pressure(temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    let log10_torr = if temperature < RB_MELTING_POINT {
        SOLID_A - SOLID_B / temperature
    } else {
        LIQUID_A - LIQUID_B / temperature
    };
    Ok(10f64.powf(log10_torr) * TORR)
}

/// Number density N = P / (kB T) of saturated rubidium vapour (m^-3).
pub fn number_density(temperature: f64) -> Result<f64> {
    Ok(vapour_pressure(temperature)? / (BOLTZMANN * temperature))
}

fn check_temperature(temperature: f64) -> Result<()> {
    let (lo, hi) = NUMBER_DENSITY_RANGE;
    if !(lo..=hi).contains(&temperature) {
        return Err(Error::Domain {
            quantity: "temperature (K)",
            value: temperature,
            range: "[250, 500] K",
        });
    }
    Ok(())
}

/// Fixed velocity quadrature for the one-dimensional Maxwell-Boltzmann
/// distribution along the beam axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub velocities: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VelocityGrid {
    /// A single stationary velocity class.
    pub fn stationary() -> Self {
        Self::single(0.0)
    }

    pub fn single(velocity: f64) -> Self {
        VelocityGrid {
            velocities: vec![velocity],
            weights: vec![1.0],
        }
    }

    pub fn from_parts(velocities: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if velocities.is_empty() {
            return Err(Error::Argument("velocity grid is empty".into()));
        }
        if velocities.len() != weights.len() {
            return Err(Error::Argument("velocity and weight lengths differ".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("velocity weights must be non-negative".into()));
        }
        Ok(VelocityGrid { velocities, weights })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.velocities.iter().copied().zip(self.weights.iter().copied())
    }

    /// Weighted rms velocity of the grid.
    pub fn rms(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        (self.iter().map(|(v, w)| w * v * v).sum::<f64>() / total).sqrt()
    }

    /// Grid with every velocity negated (v -> -v), same weights.
    pub fn reflected(&self) -> Self {
        VelocityGrid {
            velocities: self.velocities.iter().map(|v| -v).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// Uniform velocity grid over +-`span_sigmas` thermal widths with Gaussian
/// weights.
///
/// The Gaussian width used for the weights is solved for so that the weighted
/// second moment equals kB T / m exactly, which compensates the truncation of
/// the tails at small spans.
pub fn velocity_grid(temperature: f64, mass: f64, n_points: usize, span_sigmas: f64) -> Result<VelocityGrid> {
    if n_points < 3 {
        return Err(Error::Argument(format!("n_points must be >= 3, got {n_points}")));
    }
    if n_points.is_multiple_of(2) {
        return Err(Error::Argument(format!(
            "n_points must be odd for a symmetric grid, got {n_points}"
        )));
    }
    if !(3.0..=8.0).contains(&span_sigmas) {
        return Err(Error::Domain {
            quantity: "span_sigmas",
            value: span_sigmas,
            range: "[3, 8]",
        });
    }
    if !(temperature > 0.0 && mass > 0.0) {
        return Err(Error::Argument("temperature and mass must be positive".into()));
    }
    let sigma = (BOLTZMANN * temperature / mass).sqrt();
    let half = (n_points / 2) as isize;
    // Unit-sigma abscissae, built symmetric so x[i] == -x[n-1-i] exactly.
    let step = span_sigmas / half as f64;
    let x: Vec<f64> = (-half..=half).map(|i| i as f64 * step).collect();

    let variance = |width: f64| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &xi in &x {
            let w = (-0.5 * (xi / width).powi(2)).exp();
            num += w * xi * xi;
            den += w;
        }
        num / den
    };
    let (mut lo, mut hi): (f64, f64) = (1e-3, 1e3);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if variance(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let width = 0.5 * (lo + hi);

    let raw: Vec<f64> = x.iter().map(|xi| (-0.5 * (xi / width).powi(2)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let velocities = x.iter().map(|xi| xi * sigma).collect();
    Ok(VelocityGrid { velocities, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Independent evaluation of the liquid-branch correlation at 97.6 C.
    #[test]
    fn number_density_golden_at_operating_temperature() {
        let t = 370.75;
        let p_torr = 10f64.powf(7.193 - 4040.0 / t);
        let expected = p_torr * 133.322_368_421 / (1.380_649e-23 * t);
        let n = number_density(t).unwrap();
        assert_relative_eq!(n, expected, max_relative = 1e-12);
        assert_relative_eq!(n, 5.151_193_087e18, max_relative = 1e-9);
    }

    #[test]
    fn number_density_monotone_and_continuous() {
        let mut prev = 0.0;
        let mut t = 250.0;
        while t <= 500.0 {
            let n = number_density(t).unwrap();
            assert!(n > prev, "not monotone at {t}");
            prev = n;
            t += 0.5;
        }
        let below = number_density(RB_MELTING_POINT - 1e-9).unwrap();
        let above = number_density(RB_MELTING_POINT).unwrap();
        assert_relative_eq!(below, above, max_relative = 1e-9);
    }

    #[test]
    fn number_density_rejects_out_of_range() {
        let err = number_density(600.0).unwrap_err();
        assert!(err.to_string().contains("[250, 500] K"));
        assert!(number_density(100.0).is_err());
    }

    #[test]
    fn explicit_density_is_kept() {
        let cell = VapourCell::with_number_density(0.07, 370.75, 0.0, 0.045).unwrap();
        assert_eq!(cell.number_density, 0.0);
        let cell = VapourCell::with_number_density(0.07, 370.75, 1.23e17, 0.045).unwrap();
        assert_eq!(cell.number_density, 1.23e17);
    }

    #[test]
    fn cell_invariants() {
        assert!(VapourCell::with_number_density(0.0, 300.0, 1.0, 0.0).is_err());
        assert!(VapourCell::with_number_density(0.07, 300.0, 1.0, 1.0).is_err());
        assert!(VapourCell::with_number_density(0.07, 300.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn atom_invariants() {
        LadderAtom::rubidium87().validate().unwrap();
        let mut swapped = LadderAtom::rubidium87();
        std::mem::swap(&mut swapped.lambda_s, &mut swapped.lambda_c);
        assert!(swapped.validate().is_err());
        let mut bad = LadderAtom::rubidium87();
        bad.gamma_ed = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn velocity_grid_rejects_even_or_small() {
        let m = LadderAtom::rubidium87().mass;
        assert!(matches!(velocity_grid(370.0, m, 100, 4.0), Err(Error::Argument(_))));
        assert!(velocity_grid(370.0, m, 1, 4.0).is_err());
        assert!(velocity_grid(370.0, m, 101, 2.0).is_err());
    }

    #[test]
    fn velocity_grid_rms_matches_thermal_width() {
        let atom = LadderAtom::rubidium87();
        let sigma = (1.380_649e-23 * 370.75 / atom.mass).sqrt();
        for span in [3.0, 4.0, 6.0, 8.0] {
            let grid = velocity_grid(370.75, atom.mass, 101, span).unwrap();
            assert_relative_eq!(grid.rms(), sigma, max_relative = 1e-10);
        }
    }

    #[test]
    fn velocity_grid_symmetric_and_normalized() {
        let m = LadderAtom::rubidium87().mass;
        for n in [3, 5, 51, 201] {
            let g = velocity_grid(300.0, m, n, 5.0).unwrap();
            let s: f64 = g.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for i in 0..n {
                assert_eq!(g.velocities[i], -g.velocities[n - 1 - i]);
                assert!(g.weights[i] >= 0.0);
            }
        }
    }
}
