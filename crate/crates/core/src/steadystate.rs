//! Continuous-wave weak-probe response of the ladder system: susceptibility,
//! Doppler averaging, transmission/phase spectra and operating-window search.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{LadderAtom, VapourCell, VelocityGrid};
use crate::constants::{EPSILON_0, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Relative propagation direction of the control beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    #[default]
    Counter,
    Co,
}

/// Detunings and Rabi frequencies, all in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub delta_s: f64,
    pub delta_c: f64,
    pub rabi_c: f64,
    pub rabi_s: f64,
    pub geometry: Geometry,
}

impl FieldConfig {
    pub fn new(delta_s: f64, delta_c: f64, rabi_c: f64) -> Self {
        FieldConfig {
            delta_s,
            delta_c,
            rabi_c,
            rabi_s: 0.0,
            geometry: Geometry::Counter,
        }
    }

    pub fn with_delta_s(self, delta_s: f64) -> Self {
        FieldConfig { delta_s, ..self }
    }

    pub fn with_rabi_c(self, rabi_c: f64) -> Self {
        FieldConfig { rabi_c, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_c >= 0.0 && self.rabi_s >= 0.0) {
            return Err(Error::Argument("Rabi frequencies must be non-negative".into()));
        }
        if !(self.delta_s.is_finite() && self.delta_c.is_finite()) {
            return Err(Error::Argument("detunings must be finite".into()));
        }
        Ok(())
    }

    /// Detunings seen by an atom moving with velocity `v` along the signal
    /// propagation axis: (signal, control).
    ///
    /// Wavevectors are signed: a counter-propagating control shifts by +k_c v,
    /// a co-propagating one by -k_c v.
    pub fn effective_detunings(&self, atom: &LadderAtom, v: f64) -> (f64, f64) {
        let ks = atom.k_signal();
        let kc = match self.geometry {
            Geometry::Counter => -atom.k_control(),
            Geometry::Co => atom.k_control(),
        };
        (self.delta_s - ks * v, self.delta_c - kc * v)
    }
}

/// Optical response of the cell to the signal at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalResponse {
    pub chi: Complex64,
    /// Intensity transmission including the insertion loss.
    pub transmission: f64,
    /// Field amplitude transmission exp(-alpha L / 2), excluding insertion loss.
    pub amplitude_t: f64,
    /// Accumulated signal phase k L Re(chi) / 2 (rad).
    pub phase: f64,
}

impl OpticalResponse {
    pub fn from_chi(chi: Complex64, atom: &LadderAtom, cell: &VapourCell) -> Self {
        let k = atom.k_signal();
        let alpha = k * chi.im;
        let amplitude_t = (-0.5 * alpha * cell.length).exp();
        OpticalResponse {
            chi,
            transmission: cell.loss_factor() * amplitude_t * amplitude_t,
            amplitude_t,
            phase: 0.5 * k * cell.length * chi.re,
        }
    }

    /// Absorption coefficient alpha = k Im(chi) (1/m).
    pub fn alpha(&self, atom: &LadderAtom) -> f64 {
        atom.k_signal() * self.chi.im
    }
}

/// Peak Rabi frequency of a Gaussian beam of the given power and 1/e^2 waist.
pub fn rabi_from_power(power: f64, beam_waist: f64, dipole: f64) -> Result<f64> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::Argument(format!("power must be non-negative, got {power}")));
    }
    if !(beam_waist > 0.0 && dipole > 0.0) {
        return Err(Error::Argument("beam waist and dipole must be positive".into()));
    }
    let intensity = 2.0 * power / (std::f64::consts::PI * beam_waist * beam_waist);
    let field = (2.0 * intensity / (SPEED_OF_LIGHT * EPSILON_0)).sqrt();
    Ok(dipole * field / HBAR)
}

/// Peak power of a square pulse of given energy and duration.
pub fn square_pulse_peak_power(energy: f64, duration: f64) -> Result<f64> {
    if !(energy >= 0.0 && duration > 0.0) {
        return Err(Error::Argument("pulse energy must be >= 0 and duration > 0".into()));
    }
    Ok(energy / duration)
}

/// Susceptibility prefactor N |d_ge|^2 / (epsilon_0 hbar) (rad/s).
pub fn susceptibility_scale(atom: &LadderAtom, cell: &VapourCell) -> f64 {
    cell.number_density * atom.dipole_ge * atom.dipole_ge / (EPSILON_0 * HBAR)
}

/// Weak-probe ladder susceptibility for a single velocity class.
///
/// chi(v) = i C / [g_ge - i ds + (Omega_c^2 / 4) / (g_gd - i (ds + dc))]
/// with Doppler-shifted detunings ds, dc from [`FieldConfig::effective_detunings`].
/// Assumes `rabi_s` is small compared to the g-e linewidth.
pub fn susceptibility_at_velocity(fields: &FieldConfig, atom: &LadderAtom, cell: &VapourCell, v: f64) -> Complex64 {
    let (ds, dc) = fields.effective_detunings(atom, v);
    let scale = susceptibility_scale(atom, cell);
    let two_photon = Complex64::new(atom.coherence_gd(), -(ds + dc));
    let dressing = 0.25 * fields.rabi_c * fields.rabi_c / two_photon;
    let denom = Complex64::new(atom.coherence_ge(), -ds) + dressing;
    Complex64::i() * scale / denom
}

/// Doppler-averaged susceptibility: weighted sum over the velocity grid.
pub fn susceptibility_doppler(
    fields: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
) -> Result<Complex64> {
    if grid.is_empty() {
        return Err(Error::Argument("velocity grid is empty".into()));
    }
    Ok(grid
        .iter()
        .map(|(v, w)| w * susceptibility_at_velocity(fields, atom, cell, v))
        .sum())
}

/// Transmission and phase of the signal at one operating point.
pub fn response(
    fields: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
) -> Result<OpticalResponse> {
    fields.validate()?;
    let chi = susceptibility_doppler(fields, atom, cell, grid)?;
    Ok(OpticalResponse::from_chi(chi, atom, cell))
}

/// Uniformly spaced signal-detuning axis (rad/s), endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl DetuningRange {
    pub fn new(start: f64, stop: f64, points: usize) -> Self {
        DetuningRange { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let step = (self.stop - self.start) / (n - 1) as f64;
                (0..n).map(|i| self.start + step * i as f64).collect()
            }
        }
    }
}

/// One row of a control-on/control-off spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumRow {
    /// Signal detuning (rad/s).
    pub delta_s: f64,
    pub t_on: f64,
    pub t_off: f64,
    /// phi_on - phi_off (rad).
    pub dphi: f64,
}

/// Transmission with control on and off and the control-induced phase shift
/// across a range of signal detunings. Rows are ordered by detuning.
pub fn spectrum_scan(
    range: &DetuningRange,
    fields_on: &FieldConfig,
    fields_off: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
) -> Result<Vec<SpectrumRow>> {
    if range.points == 0 || !(range.start.is_finite() && range.stop.is_finite()) {
        return Err(Error::Argument("empty detuning range".into()));
    }
    if fields_on.delta_c != fields_off.delta_c {
        return Err(Error::Argument(
            "control-on and control-off configurations must share delta_c".into(),
        ));
    }
    fields_on.validate()?;
    fields_off.validate()?;
    range
        .values()
        .into_par_iter()
        .map(|ds| {
            let on = response(&fields_on.with_delta_s(ds), atom, cell, grid)?;
            let off = response(&fields_off.with_delta_s(ds), atom, cell, grid)?;
            Ok(SpectrumRow {
                delta_s: ds,
                t_on: on.transmission,
                t_off: off.transmission,
                dphi: on.phase - off.phase,
            })
        })
        .collect()
}

/// A contiguous run of spectrum rows satisfying the operating-window criteria.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiWindow {
    /// First and last row index (inclusive).
    pub first: usize,
    pub last: usize,
    /// Detuning span (rad/s).
    pub delta_s_start: f64,
    pub delta_s_stop: f64,
    pub min_t_on: f64,
    pub min_t_off: f64,
    pub mean_dphi: f64,
    /// max - min of the phase shift inside the window.
    pub dphi_spread: f64,
}

impl RoiWindow {
    pub fn width(&self) -> f64 {
        (self.delta_s_stop - self.delta_s_start).abs()
    }

    fn from_rows(rows: &[SpectrumRow], first: usize, last: usize) -> Self {
        let slice = &rows[first..=last];
        let fold = |f: fn(&SpectrumRow) -> f64, init: f64, op: fn(f64, f64) -> f64| slice.iter().map(f).fold(init, op);
        let max_phi = fold(|r| r.dphi, f64::NEG_INFINITY, f64::max);
        let min_phi = fold(|r| r.dphi, f64::INFINITY, f64::min);
        RoiWindow {
            first,
            last,
            delta_s_start: rows[first].delta_s,
            delta_s_stop: rows[last].delta_s,
            min_t_on: fold(|r| r.t_on, f64::INFINITY, f64::min),
            min_t_off: fold(|r| r.t_off, f64::INFINITY, f64::min),
            mean_dphi: slice.iter().map(|r| r.dphi).sum::<f64>() / slice.len() as f64,
            dphi_spread: max_phi - min_phi,
        }
    }
}

/// Maximal contiguous detuning windows of high transmission and large, flat
/// phase shift.
///
/// A row qualifies when both transmissions reach `t_min` and |dphi| reaches
/// |`phi_target`|; a window is a run of qualifying rows whose phase spread
/// stays within `phi_flatness` and which cannot be extended on either side.
/// Windows may overlap; they are sorted by width, widest first.
pub fn find_roi(spectrum: &[SpectrumRow], t_min: f64, phi_target: f64, phi_flatness: f64) -> Vec<RoiWindow> {
    let qualifies = |r: &SpectrumRow| r.t_on >= t_min && r.t_off >= t_min && r.dphi.abs() >= phi_target.abs();
    let mut windows = Vec::new();
    let n = spectrum.len();
    let mut i = 0;
    while i < n {
        if !qualifies(&spectrum[i]) {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && qualifies(&spectrum[i]) {
            i += 1;
        }
        flat_windows(spectrum, run_start, i, phi_flatness, &mut windows);
    }
    windows.sort_by(|a, b| {
        b.width()
            .partial_cmp(&a.width())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.first.cmp(&b.first))
    });
    windows
}

// Maximal sub-windows of rows[start..end] with phase spread <= flatness.
fn flat_windows(rows: &[SpectrumRow], start: usize, end: usize, flatness: f64, out: &mut Vec<RoiWindow>) {
    let mut prev_right: Option<usize> = None;
    let mut right = start;
    for left in start..end {
        if right < left {
            right = left;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in &rows[left..=right] {
            lo = lo.min(r.dphi);
            hi = hi.max(r.dphi);
        }
        while right + 1 < end {
            let next = rows[right + 1].dphi;
            if hi.max(next) - lo.min(next) <= flatness {
                right += 1;
                lo = lo.min(next);
                hi = hi.max(next);
            } else {
                break;
            }
        }
        if hi - lo > flatness {
            // A single row always satisfies the spread bound; only reached for
            // NaN-valued phases.
            continue;
        }
        if prev_right.is_none_or(|p| right > p) {
            out.push(RoiWindow::from_rows(rows, left, right));
            prev_right = Some(right);
        }
    }
}

/// Signal detuning of maximum Doppler-averaged absorption inside `[lo, hi]`.
///
/// Coarse scan on `coarse_points` followed by golden-section refinement of
/// Im(chi) to a bracket below `tolerance` (rad/s).
#[allow(clippy::too_many_arguments)]
pub fn locate_absorption_maximum(
    fields: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
    lo: f64,
    hi: f64,
    coarse_points: usize,
    tolerance: f64,
) -> Result<f64> {
    if !(hi > lo) || coarse_points < 3 {
        return Err(Error::Argument(
            "absorption search needs hi > lo and >= 3 points".into(),
        ));
    }
    let absorption =
        |ds: f64| -> Result<f64> { Ok(susceptibility_doppler(&fields.with_delta_s(ds), atom, cell, grid)?.im) };
    let axis = DetuningRange::new(lo, hi, coarse_points).values();
    let values: Vec<f64> = axis.iter().map(|&ds| absorption(ds)).collect::<Result<_>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    let step = (hi - lo) / (coarse_points - 1) as f64;
    let (mut a, mut b) = (axis[best] - step, axis[best] + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = absorption(x1)?;
    let mut f2 = absorption(x2)?;
    while b - a > tolerance {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = absorption(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = absorption(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::velocity_grid;
    use crate::constants::hz_to_rad;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cell() -> VapourCell {
        VapourCell::at_temperature(0.07, 370.75, 0.045).unwrap()
    }

    #[test]
    fn rabi_frequency_formula() {
        let d = 8.3e-30;
        assert_eq!(rabi_from_power(0.0, 1e-4, d).unwrap(), 0.0);
        let one = rabi_from_power(1.0, 1e-4, d).unwrap();
        let four = rabi_from_power(4.0, 1e-4, d).unwrap();
        assert_relative_eq!(four, 2.0 * one, max_relative = 1e-14);
        assert!(rabi_from_power(-1.0, 1e-4, d).is_err());
        assert!(rabi_from_power(1.0, 0.0, d).is_err());
        assert!(rabi_from_power(1.0, 1e-4, 0.0).is_err());
    }

    // 47 nJ in 4 ns, 300 um waist; evaluated by hand from
    // I = 2P/(pi w^2), E = sqrt(2I/(c eps0)), Omega = d E / hbar.
    #[test]
    fn rabi_frequency_golden_pulse() {
        let p = square_pulse_peak_power(47e-9, 4e-9).unwrap();
        assert_relative_eq!(p, 11.75, max_relative = 1e-14);
        let w: f64 = 300e-6;
        let i = 2.0 * 11.75 / (std::f64::consts::PI * w * w);
        let e = (2.0 * i / (299_792_458.0 * 8.854_187_812_8e-12)).sqrt();
        let expected = 8.3e-30 * e / 1.054_571_817e-34;
        let omega = rabi_from_power(p, w, 8.3e-30).unwrap();
        assert_relative_eq!(omega, expected, max_relative = 1e-14);
        assert_relative_eq!(omega / std::f64::consts::TAU, 3.134_657_420e9, max_relative = 1e-9);
    }

    #[test]
    fn control_off_is_two_level_lorentzian() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        let c = susceptibility_scale(&atom, &cell);
        let g = atom.coherence_ge();
        for ds in [-3e9, -1e8, 0.0, 2e7, 5e9] {
            let f = FieldConfig::new(ds, hz_to_rad(1.6e9), 0.0);
            let chi = susceptibility_at_velocity(&f, &atom, &cell, 0.0);
            let expected = Complex64::i() * c / Complex64::new(g, -ds);
            assert_relative_eq!(chi.re, expected.re, max_relative = 1e-12, epsilon = 1e-300);
            assert_relative_eq!(chi.im, expected.im, max_relative = 1e-12);
            if ds != 0.0 {
                // Dispersion is normal below resonance: Re chi / Im chi = -ds / g.
                assert_relative_eq!(chi.re / chi.im, -ds / g, max_relative = 1e-12);
            }
        }
        let on_res = susceptibility_at_velocity(&FieldConfig::new(0.0, 0.0, 0.0), &atom, &cell, 0.0);
        assert_eq!(on_res.re, 0.0);
        assert!(on_res.im > 0.0);
    }

    #[test]
    fn lorentzian_symmetry() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        for ds in [1e7, 3e8, 4e9] {
            let p = susceptibility_at_velocity(&FieldConfig::new(ds, 1e9, 0.0), &atom, &cell, 0.0);
            let m = susceptibility_at_velocity(&FieldConfig::new(-ds, 1e9, 0.0), &atom, &cell, 0.0);
            assert_relative_eq!(p.re, -m.re, max_relative = 1e-12);
            assert_relative_eq!(p.im, m.im, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_grid_matches_single_velocity() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        let f = FieldConfig::new(hz_to_rad(-1.7e9), hz_to_rad(1.6e9), hz_to_rad(2e9));
        let a = susceptibility_doppler(&f, &atom, &cell, &VelocityGrid::stationary()).unwrap();
        let b = susceptibility_at_velocity(&f, &atom, &cell, 0.0);
        assert_eq!(a, b);
        let empty = VelocityGrid {
            velocities: vec![],
            weights: vec![],
        };
        assert!(susceptibility_doppler(&f, &atom, &cell, &empty).is_err());
    }

    #[test]
    fn response_conventions() {
        let atom = LadderAtom::rubidium87();
        let c = cell();
        let empty = OpticalResponse::from_chi(Complex64::new(0.0, 0.0), &atom, &c);
        assert_relative_eq!(empty.transmission, 0.955, max_relative = 1e-15);
        assert_eq!(empty.phase, 0.0);
        let x = 2e-7;
        let absorber = OpticalResponse::from_chi(Complex64::new(0.0, x), &atom, &c);
        assert_eq!(absorber.phase, 0.0);
        let expected = 0.955 * (-atom.k_signal() * c.length * x).exp();
        assert_relative_eq!(absorber.transmission, expected, max_relative = 1e-13);
    }

    #[test]
    fn identical_configs_give_zero_phase_shift() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        let grid = velocity_grid(cell.temperature, atom.mass, 41, 4.0).unwrap();
        let f = FieldConfig::new(0.0, hz_to_rad(1.6e9), hz_to_rad(1e9));
        let rows = spectrum_scan(
            &DetuningRange::new(hz_to_rad(-4e9), hz_to_rad(-1e9), 31),
            &f,
            &f,
            &atom,
            &cell,
            &grid,
        )
        .unwrap();
        assert_eq!(rows.len(), 31);
        assert!(rows.iter().all(|r| r.dphi == 0.0));
        assert!(rows.windows(2).all(|w| w[0].delta_s < w[1].delta_s));
    }

    #[test]
    fn phase_shift_vanishes_far_from_resonance() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        let grid = velocity_grid(cell.temperature, atom.mass, 41, 4.0).unwrap();
        let on = FieldConfig::new(0.0, hz_to_rad(1.6e9), hz_to_rad(2e9));
        let off = on.with_rabi_c(0.0);
        let dphi = |ds_hz: f64| {
            let r = spectrum_scan(
                &DetuningRange::new(hz_to_rad(ds_hz), hz_to_rad(ds_hz), 1),
                &on,
                &off,
                &atom,
                &cell,
                &grid,
            )
            .unwrap();
            r[0].dphi.abs()
        };
        let near = dphi(-1.0e10);
        let far = dphi(-1.0e12);
        let farther = dphi(-1.0e14);
        assert!(far < near && farther < far);
        assert!(farther < 1e-6);
    }

    #[test]
    fn spectrum_scan_errors() {
        let atom = LadderAtom::rubidium87();
        let cell = cell();
        let grid = VelocityGrid::stationary();
        let on = FieldConfig::new(0.0, 1e9, 1e9);
        let empty = DetuningRange::new(0.0, 1.0, 0);
        assert!(spectrum_scan(&empty, &on, &on.with_rabi_c(0.0), &atom, &cell, &grid).is_err());
        let mismatched = FieldConfig::new(0.0, 2e9, 0.0);
        let r = DetuningRange::new(0.0, 1.0, 3);
        assert!(spectrum_scan(&r, &on, &mismatched, &atom, &cell, &grid).is_err());
    }

    fn row(i: usize, t: f64, dphi: f64) -> SpectrumRow {
        SpectrumRow {
            delta_s: i as f64,
            t_on: t,
            t_off: t,
            dphi,
        }
    }

    #[test]
    fn roi_empty_when_opaque() {
        let rows: Vec<_> = (0..20).map(|i| row(i, 0.0, 3.0)).collect();
        assert!(find_roi(&rows, 0.5, 1.0, 0.2).is_empty());
    }

    #[test]
    fn roi_finds_single_plateau() {
        let mut rows: Vec<_> = (0..30).map(|i| row(i, 0.95, 0.1)).collect();
        for (k, r) in rows.iter_mut().enumerate().take(19).skip(10) {
            r.dphi = 2.8 + 0.01 * (k % 3) as f64;
        }
        let w = find_roi(&rows, 0.9, 2.5, 0.05);
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].first, w[0].last), (10, 18));
    }

    /// Brute-force oracle: every contiguous window that satisfies the criteria
    /// and is not contained in a larger satisfying window.
    fn brute_force_roi(rows: &[SpectrumRow], t_min: f64, target: f64, flat: f64) -> Vec<(usize, usize)> {
        let ok = |a: usize, b: usize| {
            let s = &rows[a..=b];
            let pointwise = s
                .iter()
                .all(|r| r.t_on >= t_min && r.t_off >= t_min && r.dphi.abs() >= target.abs());
            let hi = s.iter().map(|r| r.dphi).fold(f64::NEG_INFINITY, f64::max);
            let lo = s.iter().map(|r| r.dphi).fold(f64::INFINITY, f64::min);
            pointwise && hi - lo <= flat
        };
        let n = rows.len();
        let mut all = Vec::new();
        for a in 0..n {
            for b in a..n {
                if ok(a, b) {
                    all.push((a, b));
                }
            }
        }
        let mut maximal: Vec<_> = all
            .iter()
            .copied()
            .filter(|&(a, b)| !all.iter().any(|&(c, d)| c <= a && b <= d && (c, d) != (a, b)))
            .collect();
        maximal.sort();
        maximal
    }

    proptest! {
        #[test]
        fn roi_matches_brute_force(
            ts in proptest::collection::vec(0.0f64..1.0, 1..40),
            phis in proptest::collection::vec(-4.0f64..4.0, 40),
            t_min in 0.0f64..1.0,
            target in 0.0f64..3.0,
            flat in 0.0f64..3.0,
        ) {
            let rows: Vec<_> = ts.iter().enumerate().map(|(i, &t)| row(i, t, phis[i])).collect();
            let mut got: Vec<_> = find_roi(&rows, t_min, target, flat)
                .iter().map(|w| (w.first, w.last)).collect();
            got.sort();
            prop_assert_eq!(got, brute_force_roi(&rows, t_min, target, flat));
        }

        #[test]
        fn roi_monotone_in_t_min(
            ts in proptest::collection::vec(0.0f64..1.0, 1..40),
            phis in proptest::collection::vec(-4.0f64..4.0, 40),
            t_strict in 0.3f64..1.0,
            relax in 0.0f64..0.3,
        ) {
            let rows: Vec<_> = ts.iter().enumerate().map(|(i, &t)| row(i, t, phis[i])).collect();
            let strict = find_roi(&rows, t_strict, 1.0, 1.0);
            let loose = find_roi(&rows, t_strict - relax, 1.0, 1.0);
            for w in &strict {
                prop_assert!(loose.iter().any(|l| l.first <= w.first && w.last <= l.last));
            }
        }

        #[test]
        fn passive_medium(
            ds in -1e11f64..1e11,
            dc in -1e11f64..1e11,
            rabi in 0.0f64..1e11,
            v in -800.0f64..800.0,
        ) {
            let atom = LadderAtom::rubidium87();
            let cell = cell();
            let mut f = FieldConfig::new(ds, dc, rabi);
            for g in [Geometry::Counter, Geometry::Co] {
                f.geometry = g;
                let chi = susceptibility_at_velocity(&f, &atom, &cell, v);
                prop_assert!(chi.im >= 0.0);
                let r = OpticalResponse::from_chi(chi, &atom, &cell);
                prop_assert!((r.transmission - cell.loss_factor() * r.amplitude_t.powi(2)).abs() <= 1e-12);
            }
        }
    }
}
