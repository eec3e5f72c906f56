//! Calibration of the interferometer and inversion of detector voltages into
//! transmission and control-induced phase shift.
//!
//! The forward relation for one window is
//! V1,2 = a(1 + t² ± 2γ t cos(Δφ + kcτ)). The sum fixes t, the difference
//! fixes cos(Δφ + kcτ); with only cos(kcτ) known the sign of sin(kcτ) is
//! undetermined, so two Δφ branches fit equally well. CW scans resolve this
//! by also inverting the echo window, where the phase enters as
//! cos(kcτ − Δφ).

mod cw;
mod fringes;
mod pulsed;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::interferometer::DetectorTrace;

pub use cw::{
    analyze_cw, segment_cw, write_results_csv, write_results_file, CwAnalysis, CwOptions, CwSummary, CwWindows,
    Segmentation, WindowResult,
};
pub use fringes::{
    band_stop, estimate_fringe_period, find_extrema, find_fringe_extrema, locate_absorption_minimum, Extremum,
    ExtremumKind,
};
pub use pulsed::{analyze_pulsed, classify_pairs, PairClasses, PulsedEstimate};

/// Below this the modulated arm is too weak for a phase to be measured.
pub const MIN_T_AMP: f64 = 1e-6;
/// t values up to this far above 1 are treated as rounding and clamped.
pub const T_CLAMP_TOLERANCE: f64 = 1e-6;
/// Target voltage residual of the refinement, relative to `a`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Relative fringe visibility 2γt/(1 + t²) below which Δφ is not reported.
pub const MIN_FRINGE_VISIBILITY: f64 = 1e-9;

/// Quality flags attached to an estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags(pub u32);

impl Flags {
    /// |cos kcτ| came out above 1 and was clamped.
    pub const COS_CLAMPED: u32 = 1;
    /// t exceeded 1 by more than rounding.
    pub const T_ABOVE_ONE: u32 = 2;
    /// Two Δφ values fit the data equally well.
    pub const AMBIGUOUS: u32 = 4;
    /// The window violates the sum rule; no estimate.
    pub const SUM_RULE: u32 = 8;
    /// Refinement did not reach the residual tolerance.
    pub const NOT_CONVERGED: u32 = 16;
    /// t too small for a phase.
    pub const NO_PHASE: u32 = 32;

    const NAMES: [(u32, &'static str); 6] = [
        (Self::COS_CLAMPED, "cos_clamped"),
        (Self::T_ABOVE_ONE, "t_above_one"),
        (Self::AMBIGUOUS, "ambiguous"),
        (Self::SUM_RULE, "sum_rule"),
        (Self::NOT_CONVERGED, "not_converged"),
        (Self::NO_PHASE, "no_phase"),
    ];

    pub fn set(&mut self, bit: u32) {
        self.0 |= bit;
    }

    pub fn has(&self, bit: u32) -> bool {
        self.0 & bit != 0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = Self::NAMES
            .iter()
            .filter(|(b, _)| self.has(*b))
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join("|"))
    }
}

/// Interferometer normalization and contrast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub gamma: f64,
}

impl Calibration {
    pub fn new(a: f64, gamma: f64) -> Result<Self> {
        let c = Calibration { a, gamma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Calibration(format!("a must be positive, got {}", self.a)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Calibration(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Same contrast with a different normalization.
    pub fn with_a(&self, a: f64) -> Self {
        Calibration { a, gamma: self.gamma }
    }
}

// Least-squares fit of c + A cos(ωi) + B sin(ωi); returns (c, A, B, rss).
fn fit_sinusoid_parts(y: &[f64], omega: f64) -> (f64, f64, f64, f64) {
    use nalgebra::{Matrix3, Vector3};
    let mut m = Matrix3::zeros();
    let mut r = Vector3::zeros();
    for (i, &v) in y.iter().enumerate() {
        let x = (omega * i as f64).sin_cos();
        let basis = Vector3::new(1.0, x.1, x.0);
        m += basis * basis.transpose();
        r += basis * v;
    }
    let p = m.lu().solve(&r).unwrap_or_else(Vector3::zeros);
    let rss = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = (omega * i as f64).sin_cos();
            (v - p[0] - p[1] * x.1 - p[2] * x.0).powi(2)
        })
        .sum();
    (p[0], p[1], p[2], rss)
}

/// Least-squares fit of c + A cos(ωi) + B sin(ωi); returns (c, amplitude, rss).
fn fit_sinusoid(y: &[f64], omega: f64) -> (f64, f64, f64) {
    let (c, a, b, rss) = fit_sinusoid_parts(y, omega);
    (c, a.hypot(b), rss)
}

/// Interferometer phase kcτ at the first sample of a bypassed reference
/// segment whose phase advances by 2π per `fringe_period` samples. Unlike
/// the pre-pulse readings this keeps the sign of sin kcτ.
pub fn fringe_phase(trace: &DetectorTrace, segment: (usize, usize), fringe_period: f64) -> Result<f64> {
    let (s, e) = segment;
    if !(s < e && e <= trace.len()) || ((e - s) as f64) < fringe_period {
        return Err(Error::Calibration(format!(
            "segment [{s}, {e}) cannot fix the fringe phase"
        )));
    }
    let diff: Vec<f64> = (s..e).map(|i| trace.v1[i] - trace.v2[i]).collect();
    let (_, a, b, _) = fit_sinusoid_parts(&diff, 2.0 * PI / fringe_period);
    if a == 0.0 && b == 0.0 {
        return Err(Error::Calibration("no fringes in the reference segment".into()));
    }
    // A cos(ωi) + B sin(ωi) = R cos(ωi − atan2(B, A))
    Ok(-b.atan2(a))
}

/// Calibrates `a` and `gamma` from control-off fringes with the cell
/// bypassed (unit transmission in both arms).
///
/// `a` is the mean of (V1 + V2)/4. The fringe extrema are taken from a
/// sinusoidal fit of each channel, which is exact for noiseless fringes and
/// does not depend on a sample landing on the crest:
/// gamma = (max V1 − min V2)/(4a). `fringe_period` (samples) is estimated
/// from the data when not given.
pub fn calibrate(
    trace: &DetectorTrace,
    off_segments: &[(usize, usize)],
    fringe_period: Option<f64>,
) -> Result<Calibration> {
    if off_segments.is_empty() {
        return Err(Error::Calibration("no control-off segments".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for &(s, e) in off_segments {
        if !(s < e && e <= trace.len()) {
            return Err(Error::Calibration(format!("segment [{s}, {e}) outside the trace")));
        }
        sum += (s..e).map(|i| trace.v1[i] + trace.v2[i]).sum::<f64>();
        count += e - s;
    }
    let a = sum / (4.0 * count as f64);
    if !(a > 0.0) {
        return Err(Error::Calibration("no signal in calibration segments".into()));
    }
    let mut gsum = 0.0;
    for &(s, e) in off_segments {
        let diff: Vec<f64> = (s..e).map(|i| trace.v1[i] - trace.v2[i]).collect();
        let period = match fringe_period {
            Some(p) => p,
            None => estimate_fringe_period(&diff)
                .ok_or_else(|| Error::Calibration(format!("no fringes found in segment [{s}, {e})")))?,
        };
        if !(period > 0.0) || ((e - s) as f64) < period {
            return Err(Error::Calibration(format!(
                "segment [{s}, {e}) is shorter than one fringe ({period:.1} samples)"
            )));
        }
        let omega = 2.0 * PI / period;
        let (c1, r1, _) = fit_sinusoid(&trace.v1[s..e], omega);
        let (c2, r2, _) = fit_sinusoid(&trace.v2[s..e], omega);
        gsum += ((c1 + r1) - (c2 - r2)) / (4.0 * a) * (e - s) as f64;
    }
    let gamma = (gsum / count as f64).clamp(0.0, 1.0);
    Calibration::new(a, gamma)
}

/// cos(kcτ) from voltages sampled with the control off, both arms at equal
/// transmission (absorbed into `cal.a`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseReading {
    pub cos_kctau: f64,
    /// |cos| − 1 before clamping (0 when in range).
    pub excess: f64,
}

/// Rounding allowance on |cos kcτ| before a reading counts as clamped.
pub const COS_TOLERANCE: f64 = 1e-9;

impl PhaseReading {
    pub fn clamped(&self) -> bool {
        self.excess > COS_TOLERANCE
    }
}

pub fn interferometer_phase(v1_pre: f64, v2_pre: f64, cal: &Calibration) -> Result<PhaseReading> {
    if cal.gamma == 0.0 {
        return Err(Error::Calibration(
            "zero fringe contrast: interferometer phase unobservable".into(),
        ));
    }
    let c = (v1_pre - v2_pre) / (4.0 * cal.gamma * cal.a);
    Ok(PhaseReading {
        cos_kctau: c.clamp(-1.0, 1.0),
        excess: (c.abs() - 1.0).max(0.0),
    })
}

/// Result of inverting one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationEstimate {
    pub t_amp: f64,
    pub transmission: f64,
    /// Principal value in [0, π].
    pub dphi: f64,
    /// Other branch, when it fits equally well and differs.
    pub dphi_alt: Option<f64>,
    /// Largest voltage residual of the accepted solution.
    pub residual: f64,
    pub window: (f64, f64),
    pub flags: Flags,
}

/// Wraps to (−π, π].
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// arccos with values within a few ulp of ±1 snapped onto the fringe
/// extremum. Near an extremum the voltages depend quadratically on the phase,
/// so phases below ~1e-8 rad are indistinguishable in double precision; the
/// tie is broken towards the extremum.
fn acos_snapped(c: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    if 1.0 - c.abs() <= 8.0 * f64::EPSILON {
        if c > 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        c.acos()
    }
}

/// Moves Δφ + kcτ onto the nearest fringe extremum when that fits the
/// voltages to within their rounding, for the same reason as
/// [`acos_snapped`]: the residual cannot tell such phases apart.
fn snap_to_extremum(obs: &[Obs], cal: &Calibration, theta: f64, t: f64, dphi: f64, residual: f64) -> (f64, f64) {
    let x = theta + dphi;
    let n = (x / PI).round();
    if (x - n * PI).abs() > 1e-6 {
        return (dphi, residual);
    }
    let snapped = n * PI - theta;
    let (r, _) = model_residuals(obs, cal, theta, t, snapped);
    let scale: f64 = obs.iter().map(|o| o.v1.abs() + o.v2.abs()).fold(0.0, f64::max);
    let res = max_abs(&r);
    if res <= residual.max(16.0 * f64::EPSILON * scale) {
        (snapped, res)
    } else {
        (dphi, residual)
    }
}

/// One measurement: (V1, V2) with interferometer phase σ·acos(cos_kctau),
/// where `echo` windows see −Δφ.
#[derive(Clone, Copy)]
struct Obs {
    v1: f64,
    v2: f64,
    echo: bool,
}

fn model_residuals(obs: &[Obs], cal: &Calibration, theta: f64, t: f64, dphi: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut r = Vec::with_capacity(2 * obs.len());
    let mut j = Vec::with_capacity(2 * obs.len());
    for o in obs {
        let sgn = if o.echo { -1.0 } else { 1.0 };
        let arg = theta + sgn * dphi;
        let (s, c) = arg.sin_cos();
        let base = cal.a * (1.0 + t * t);
        let cross = 2.0 * cal.a * cal.gamma * t * c;
        let d_base = 2.0 * cal.a * t;
        let d_cross_t = 2.0 * cal.a * cal.gamma * c;
        let d_cross_p = -2.0 * cal.a * cal.gamma * t * s * sgn;
        r.push(base + cross - o.v1);
        j.push([d_base + d_cross_t, d_cross_p]);
        r.push(base - cross - o.v2);
        j.push([d_base - d_cross_t, -d_cross_p]);
    }
    (r, j)
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on (t, Δφ).
fn refine(obs: &[Obs], cal: &Calibration, theta: f64, mut t: f64, mut dphi: f64) -> (f64, f64, f64) {
    let (mut r, mut j) = model_residuals(obs, cal, theta, t, dphi);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-6;
    let target = RESIDUAL_TOLERANCE * cal.a * 1e-3;
    for _ in 0..100 {
        if max_abs(&r) <= target {
            break;
        }
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (ri, ji) in r.iter().zip(&j) {
            h00 += ji[0] * ji[0];
            h01 += ji[0] * ji[1];
            h11 += ji[1] * ji[1];
            g0 += ji[0] * ri;
            g1 += ji[1] * ri;
        }
        let mut improved = false;
        for _ in 0..30 {
            let a00 = h00 * (1.0 + lambda) + 1e-300;
            let a11 = h11 * (1.0 + lambda) + 1e-300;
            let det = a00 * a11 - h01 * h01;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let dt = -(a11 * g0 - h01 * g1) / det;
            let dp = -(a00 * g1 - h01 * g0) / det;
            let (nt, np) = (t + dt, dphi + dp);
            let (nr, nj) = model_residuals(obs, cal, theta, nt, np);
            let ncost: f64 = nr.iter().map(|x| x * x).sum();
            if ncost < cost {
                t = nt;
                dphi = np;
                r = nr;
                j = nj;
                cost = ncost;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if t < 0.0 {
        t = -t;
        dphi += PI;
    }
    (t, dphi, max_abs(&r))
}

// Overdetermined (joint) fits cannot reach zero residual on noisy data, so
// only exactly determined ones are checked for convergence.
#[allow(clippy::too_many_arguments)]
fn finish(
    t: f64,
    dphi: f64,
    alt: Option<f64>,
    residual: f64,
    cal: &Calibration,
    mut flags: Flags,
    exact: bool,
    signed: bool,
) -> ModulationEstimate {
    let mut t = t;
    if t > 1.0 {
        if t <= 1.0 + T_CLAMP_TOLERANCE {
            t = 1.0;
        } else {
            flags.set(Flags::T_ABOVE_ONE);
        }
    }
    if exact && residual > RESIDUAL_TOLERANCE * cal.a {
        flags.set(Flags::NOT_CONVERGED);
    }
    let fold = |x: f64| if signed { wrap(x) } else { wrap(x).abs() };
    let mut dphi = fold(dphi);
    let mut alt = alt.map(fold).filter(|x| wrap(x - dphi).abs() > 1e-6);
    if alt.is_some() {
        flags.set(Flags::AMBIGUOUS);
    }
    // the fringe term is lost below double-precision resolution of the sum
    if 2.0 * cal.gamma * t / (1.0 + t * t) < MIN_FRINGE_VISIBILITY {
        flags.set(Flags::NO_PHASE);
        dphi = f64::NAN;
        alt = None;
    }
    ModulationEstimate {
        t_amp: t,
        transmission: t * t,
        dphi,
        dphi_alt: alt,
        residual,
        window: (f64::NAN, f64::NAN),
        flags,
    }
}

fn seed_t(v1: f64, v2: f64, cal: &Calibration) -> Result<f64> {
    let s = (v1 + v2) / (2.0 * cal.a) - 1.0;
    if !(s >= 0.0) {
        return Err(Error::Unphysical(format!(
            "(V1 + V2)/(2a) = {:.6} < 1: transmission squared would be negative",
            s + 1.0
        )));
    }
    let t = s.sqrt();
    if t < MIN_T_AMP {
        return Err(Error::Unphysical(format!(
            "t = {t:e}: modulated arm too weak, phase unobservable"
        )));
    }
    Ok(t)
}

/// Inverts one (V1, V2) pair for (t, Δφ) given cos(kcτ).
///
/// The closed-form seed is refined against the forward model. Δφ is the
/// principal value assuming kcτ = acos(cos_kctau); the estimate for the other
/// kcτ branch is returned in `dphi_alt` when it differs.
pub fn invert(v1: f64, v2: f64, cal: &Calibration, cos_kctau: f64) -> Result<ModulationEstimate> {
    cal.validate()?;
    if cal.gamma == 0.0 {
        return Err(Error::Calibration("zero fringe contrast: phase unobservable".into()));
    }
    let mut flags = Flags::default();
    let t0 = seed_t(v1, v2, cal)?;
    let mut c = cos_kctau;
    if c.abs() > 1.0 + COS_TOLERANCE {
        flags.set(Flags::COS_CLAMPED);
        c = c.clamp(-1.0, 1.0);
    }
    let theta = acos_snapped(c);
    let cos_sum = ((v1 - v2) / (4.0 * cal.a * cal.gamma * t0)).clamp(-1.0, 1.0);
    let big_a = acos_snapped(cos_sum);
    let obs = [Obs { v1, v2, echo: false }];
    let (t, dphi, residual) = refine(&obs, cal, theta, t0, big_a - theta);
    let (dphi, residual) = snap_to_extremum(&obs, cal, theta, t, dphi, residual);
    Ok(finish(t, dphi, Some(big_a + theta), residual, cal, flags, true, false))
}

/// Joint inversion of an in-pulse window and its echo, which share (t, Δφ)
/// and kcτ but see the phase with opposite signs. This fixes the sign of
/// sin(kcτ) and leaves Δφ ambiguous only at exact fringe quadrature.
pub fn invert_joint(
    inner: (f64, f64),
    echo: (f64, f64),
    cal: &Calibration,
    cos_kctau: f64,
    sin_sign: Option<f64>,
) -> Result<ModulationEstimate> {
    cal.validate()?;
    if cal.gamma == 0.0 {
        return Err(Error::Calibration("zero fringe contrast: phase unobservable".into()));
    }
    let mut flags = Flags::default();
    let t_in = seed_t(inner.0, inner.1, cal)?;
    let t_echo = seed_t(echo.0, echo.1, cal)?;
    let t0 = 0.5 * (t_in + t_echo);
    let mut c = cos_kctau;
    if c.abs() > 1.0 + COS_TOLERANCE {
        flags.set(Flags::COS_CLAMPED);
        c = c.clamp(-1.0, 1.0);
    }
    let theta = acos_snapped(c);
    let a_in = acos_snapped((inner.0 - inner.1) / (4.0 * cal.a * cal.gamma * t_in));
    let obs = [
        Obs {
            v1: inner.0,
            v2: inner.1,
            echo: false,
        },
        Obs {
            v1: echo.0,
            v2: echo.1,
            echo: true,
        },
    ];
    // (kcτ, Δφ) and (−kcτ, −Δφ) give identical voltages, so the sign of
    // sin kcτ must come from elsewhere; without it both branches are tried.
    // Every (branch of kcτ, branch of the in-window arccos) gives a seed;
    // keep the best refined fit and note whether a different Δφ fits as well.
    let sigmas: &[f64] = match sin_sign {
        Some(s) if s < 0.0 => &[-1.0],
        Some(_) => &[1.0],
        None => &[1.0, -1.0],
    };
    let mut fits: Vec<(f64, f64, f64)> = Vec::with_capacity(4);
    for &sigma in sigmas {
        let th = sigma * theta;
        for s in [a_in - th, -a_in - th] {
            let (t, p, res) = refine(&obs, cal, th, t0, s);
            fits.push((t, wrap(p), res));
        }
    }
    fits.sort_by(|x, y| x.2.total_cmp(&y.2));
    let best = fits[0];
    let tie = (RESIDUAL_TOLERANCE * cal.a).max(2.0 * best.2);
    let alt = fits[1..]
        .iter()
        .find(|f| f.2 <= tie && wrap(f.1 - best.1).abs() > 1e-6)
        .map(|f| f.1);
    Ok(finish(best.0, best.1, alt, best.2, cal, flags, false, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{forward_cw, InterferometerModel};
    use proptest::prelude::*;

    fn model(a: f64, g: f64, k: f64) -> InterferometerModel {
        InterferometerModel::new(5e-9, a, g, k).unwrap()
    }

    #[test]
    fn identity_point() {
        let cal = Calibration::new(1.0, 1.0).unwrap();
        let (v1, v2) = forward_cw(1.0, 0.0, &model(1.0, 1.0, 0.0));
        let e = invert(v1, v2, &cal, 1.0).unwrap();
        assert!((e.t_amp - 1.0).abs() < 1e-12);
        assert!(e.dphi.abs() < 1e-6);
    }

    #[test]
    fn measured_point_from_voltages() {
        let cal = Calibration::new(1.0, 1.0).unwrap();
        let e = invert(1.667_496_612_277_315, 2.012_503_387_722_685, &cal, 1.0).unwrap();
        assert!((e.transmission - 0.84).abs() < 1e-12);
        assert!((e.dphi - 0.53 * PI).abs() < 1e-10);
        assert!(e.dphi_alt.is_none());
    }

    #[test]
    fn grid_round_trip_matches_a_branch() {
        for &k in &[0.0, PI / 4.0, PI / 2.0] {
            let m = model(1.0, 1.0, k);
            let cal = Calibration::new(1.0, 1.0).unwrap();
            for i in 0..50 {
                for j in 0..50 {
                    let t = 0.1 + 0.9 * i as f64 / 49.0;
                    let p = PI * j as f64 / 49.0;
                    let (v1, v2) = forward_cw(t, p, &m);
                    let e = invert(v1, v2, &cal, k.cos()).unwrap();
                    assert!((e.t_amp - t).abs() < 1e-8);
                    let hit = (e.dphi - p).abs() < 1e-8 || e.dphi_alt.is_some_and(|x| (x - p).abs() < 1e-8);
                    assert!(hit, "t={t} p={p} k={k} got {e:?}");
                }
            }
        }
    }

    #[test]
    fn unphysical_sum_and_dark_arm() {
        let cal = Calibration::new(1.0, 1.0).unwrap();
        assert!(matches!(invert(0.5, 0.5, &cal, 1.0), Err(Error::Unphysical(_))));
        assert!(matches!(invert(1.0, 1.0, &cal, 1.0), Err(Error::Unphysical(_))));
        let bad = Calibration { a: 1.0, gamma: 0.0 };
        assert!(invert(2.0, 1.0, &bad, 1.0).is_err());
    }

    #[test]
    fn phase_reading() {
        let cal = Calibration::new(0.7, 0.85).unwrap();
        assert_eq!(interferometer_phase(1.3, 1.3, &cal).unwrap().cos_kctau, 0.0);
        let top = interferometer_phase(2.0 * 0.7 * 1.85, 2.0 * 0.7 * 0.15, &cal).unwrap();
        assert!((top.cos_kctau - 1.0).abs() < 1e-12);
        let (v1, v2) = forward_cw(1.0, 0.0, &model(0.7, 0.85, 1.1));
        assert!((interferometer_phase(v1, v2, &cal).unwrap().cos_kctau - 1.1f64.cos()).abs() < 1e-12);
        let over = interferometer_phase(3.0, 0.0, &cal).unwrap();
        assert_eq!(over.cos_kctau, 1.0);
        assert!(over.excess > 0.0);
        assert!(interferometer_phase(1.0, 0.5, &Calibration { a: 1.0, gamma: 0.0 }).is_err());
    }

    #[test]
    fn joint_resolves_branch_off_quadrature() {
        let m = model(0.9, 0.8, 0.0);
        let cal = Calibration::new(0.9, 0.8).unwrap();
        for &theta in &[0.3, 1.2, 2.0, -0.7, -2.5] {
            for &p in &[0.1, 0.9, 1.7, 2.9, -0.4, -2.2] {
                let (a1, a2) = forward_cw(0.91, p + theta, &m);
                let (e1, e2) = forward_cw(0.91, theta - p, &m);
                let e = invert_joint((a1, a2), (e1, e2), &cal, theta.cos(), Some(theta.sin())).unwrap();
                assert!((e.t_amp - 0.91).abs() < 1e-9);
                assert!((e.dphi - p).abs() < 1e-9, "theta={theta} p={p} {e:?}");
                assert!(e.dphi_alt.is_none());
                // without the sign of sin kcτ only the mirror pair is known
                let u = invert_joint((a1, a2), (e1, e2), &cal, theta.cos(), None).unwrap();
                let pair = [u.dphi, u.dphi_alt.unwrap()];
                assert!(pair.iter().any(|x| (x - p).abs() < 1e-9) && pair.iter().any(|x| (x + p).abs() < 1e-9));
                assert!(u.flags.has(Flags::AMBIGUOUS));
            }
        }
    }

    #[test]
    fn joint_at_quadrature_is_ambiguous() {
        let m = model(1.0, 1.0, 0.0);
        let cal = Calibration::new(1.0, 1.0).unwrap();
        let (p, th) = (0.9 * PI, PI / 2.0);
        let t = 0.83f64.sqrt();
        let e = invert_joint(forward_cw(t, p + th, &m), forward_cw(t, th - p, &m), &cal, 0.0, None).unwrap();
        assert!((e.transmission - 0.83).abs() < 1e-6);
        let cands = [Some(e.dphi), e.dphi_alt];
        assert!(cands.iter().flatten().any(|x| (x - p).abs() < 1e-6));
        assert!(e.flags.has(Flags::AMBIGUOUS));
    }

    #[test]
    fn flags_display() {
        let mut f = Flags::default();
        assert_eq!(f.to_string(), "");
        f.set(Flags::AMBIGUOUS);
        f.set(Flags::COS_CLAMPED);
        assert_eq!(f.to_string(), "cos_clamped|ambiguous");
    }

    proptest! {
        #[test]
        fn round_trip_any_parameters(
            t in 0.05f64..1.0, p in 0.0f64..PI, a in 0.1f64..5.0, g in 0.2f64..1.0, k in -PI..PI,
        ) {
            let m = model(a, g, k);
            let cal = Calibration::new(a, g).unwrap();
            let (v1, v2) = forward_cw(t, p, &m);
            let e = invert(v1, v2, &cal, k.cos()).unwrap();
            prop_assert!((e.t_amp - t).abs() < 1e-8);
            let hit = (e.dphi - p).abs() < 1e-7 || e.dphi_alt.is_some_and(|x| (x - p).abs() < 1e-7);
            prop_assert!(hit);
        }
    }
}
