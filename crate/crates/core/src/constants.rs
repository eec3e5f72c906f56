//! CODATA physical constants (SI).

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// One torr in pascal.
pub const TORR: f64 = 101_325.0 / 760.0;

/// Converts an ordinary frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    std::f64::consts::TAU * f
}

/// Converts an angular frequency in rad/s to ordinary frequency in Hz.
#[inline]
pub fn rad_to_hz(w: f64) -> f64 {
    w / std::f64::consts::TAU
}
