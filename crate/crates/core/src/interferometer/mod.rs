//! Franson-interferometer forward model and detector-trace synthesis.
//!
//! The interferometer splits the light leaving the cell into a short arm and
//! a long arm delayed by `tau`, and recombines them on two complementary
//! detectors. Writing m(t) for the complex field transmission of the cell at
//! time t (relative to the input field), the detector voltages are
//!
//! ```text
//! V1,2(t) = a (|m(t)|² + |m(t-τ)|² ± 2γ Re[m(t) m*(t-τ) e^{iθ}])
//! ```
//!
//! with θ = kcτ the interferometer phase. For one arm carrying t e^{iΔφ} and
//! the other an unmodulated unit field this reduces to
//! V1,2 = a(1 + t² ± 2γ t cos(Δφ + θ)).

mod cw;
mod pulsed;
pub mod trace_io;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cw::{synth_trace_cw, CwLayout, CwPhysics, CwTimeline, PulseSlot, SteadyPhysics};
pub use pulsed::{forward_pulsed, Modulation, PairWindows, PulsedLayout};

/// Control levels at or above this count as fully on, at or below
/// [`LEVEL_OFF`] as off; anything between is a partially chopped pulse.
pub const LEVEL_ON: f64 = 0.9;
pub const LEVEL_OFF: f64 = 0.1;

/// Delay, normalization, contrast and phase of the interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerModel {
    /// Arm delay (s).
    pub tau: f64,
    /// Voltage per unit intensity in each arm (V).
    pub a: f64,
    /// Fringe contrast in [0, 1].
    pub gamma: f64,
    /// Interferometer phase kcτ at zero signal detuning (rad).
    pub kctau0: f64,
}

impl InterferometerModel {
    pub fn new(tau: f64, a: f64, gamma: f64, kctau0: f64) -> Result<Self> {
        let m = InterferometerModel { tau, a, gamma, kctau0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "interferometer delay must be positive, got {}",
                self.tau
            )));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Config(format!(
                "voltage scale a must be positive, got {}",
                self.a
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "contrast gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if !self.kctau0.is_finite() {
            return Err(Error::Config("interferometer phase must be finite".into()));
        }
        Ok(())
    }

    /// kcτ at signal detuning `delta_s` (rad/s): the optical phase difference
    /// of the two arms advances by Δs·τ.
    pub fn kctau_at(&self, delta_s: f64) -> f64 {
        self.kctau0 + delta_s * self.tau
    }

    /// Detector voltages for general arm fields: `now` in the short arm,
    /// `delayed` in the long arm, interferometer phase `theta`.
    pub fn voltages(&self, now: Complex64, delayed: Complex64, theta: f64) -> (f64, f64) {
        let base = now.norm_sqr() + delayed.norm_sqr();
        let cross = 2.0 * self.gamma * (now * delayed.conj() * Complex64::from_polar(1.0, theta)).re;
        (self.a * (base + cross), self.a * (base - cross))
    }
}

/// Detector voltages for an arm of amplitude `t_amp` and phase `dphi`
/// interfering with an unmodulated unit arm at phase `model.kctau0`.
pub fn forward_cw(t_amp: f64, dphi: f64, model: &InterferometerModel) -> (f64, f64) {
    let base = 1.0 + t_amp * t_amp;
    let cross = 2.0 * model.gamma * t_amp * (dphi + model.kctau0).cos();
    (model.a * (base + cross), model.a * (base - cross))
}

/// A contiguous run of samples with the control present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMarker {
    pub t_start: f64,
    /// End time (exclusive): start of the first sample after the run.
    pub t_end: f64,
    /// Sample range [start, end).
    pub start: usize,
    pub end: usize,
    /// Mean control level over the run, 1 = fully on.
    pub level: f64,
}

impl ControlMarker {
    pub fn is_on(&self) -> bool {
        self.level >= LEVEL_ON
    }

    pub fn is_partial(&self) -> bool {
        self.level > LEVEL_OFF && self.level < LEVEL_ON
    }
}

/// Free-form description of how a trace was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeta {
    pub mode: String,
    pub description: String,
    pub seed: Option<u64>,
    pub noise_rms: f64,
}

/// Uniformly sampled two-detector record plus the control photodiode level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTrace {
    pub times: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    /// Control level per sample in [0, 1].
    pub control: Vec<f64>,
    pub markers: Vec<ControlMarker>,
    pub meta: TraceMeta,
}

/// Levels below this are treated as no control at all when building markers.
const MARKER_THRESHOLD: f64 = 1e-3;

impl DetectorTrace {
    /// Builds a trace and derives the control markers from the level column.
    pub fn new(times: Vec<f64>, v1: Vec<f64>, v2: Vec<f64>, control: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if v1.len() != n || v2.len() != n || control.len() != n {
            return Err(Error::Argument(format!(
                "trace columns differ in length ({n}, {}, {}, {})",
                v1.len(),
                v2.len(),
                control.len()
            )));
        }
        if n < 2 {
            return Err(Error::Argument("trace needs at least two samples".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("trace times must increase strictly".into()));
        }
        if v1.iter().chain(&v2).chain(&control).any(|x| !x.is_finite()) {
            return Err(Error::Argument("trace contains non-finite values".into()));
        }
        let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
        let markers = markers_from_levels(&control, times[0], dt);
        Ok(DetectorTrace {
            times,
            v1,
            v2,
            control,
            markers,
            meta: TraceMeta::default(),
        })
    }

    /// Trace on the grid t_i = i·dt.
    pub fn uniform(dt: f64, v1: Vec<f64>, v2: Vec<f64>, control: Vec<f64>) -> Result<Self> {
        let times = (0..v1.len()).map(|i| i as f64 * dt).collect();
        Self::new(times, v1, v2, control)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        let n = self.times.len();
        (self.times[n - 1] - self.times[0]) / (n - 1) as f64
    }

    /// Largest deviation of the sampling instants from a uniform grid,
    /// relative to the period.
    pub fn sampling_jitter(&self) -> f64 {
        let dt = self.sample_period();
        let t0 = self.times[0];
        self.times
            .iter()
            .enumerate()
            .map(|(i, t)| ((t - t0) / dt - i as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Mean of (v1, v2) over samples [start, end).
    pub fn mean(&self, start: usize, end: usize) -> (f64, f64) {
        let n = (end - start) as f64;
        let s1: f64 = self.v1[start..end].iter().sum();
        let s2: f64 = self.v2[start..end].iter().sum();
        (s1 / n, s2 / n)
    }

    /// Sum of (v1, v2) over samples [start, end) times the sample period.
    pub fn integral(&self, start: usize, end: usize) -> (f64, f64) {
        let dt = self.sample_period();
        let s1: f64 = self.v1[start..end].iter().sum();
        let s2: f64 = self.v2[start..end].iter().sum();
        (s1 * dt, s2 * dt)
    }

    pub fn mean_level(&self, start: usize, end: usize) -> f64 {
        self.control[start..end].iter().sum::<f64>() / (end - start) as f64
    }
}

fn markers_from_levels(control: &[f64], t0: f64, dt: f64) -> Vec<ControlMarker> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < control.len() {
        if control[i] > MARKER_THRESHOLD {
            let start = i;
            while i < control.len() && control[i] > MARKER_THRESHOLD {
                i += 1;
            }
            let level = control[start..i].iter().sum::<f64>() / (i - start) as f64;
            out.push(ControlMarker {
                t_start: t0 + start as f64 * dt,
                t_end: t0 + i as f64 * dt,
                start,
                end: i,
                level,
            });
        } else {
            i += 1;
        }
    }
    out
}

/// Delay expressed in whole samples; errors if it is not (to 1e-6) an
/// integer multiple of the sample period.
pub fn delay_in_samples(tau: f64, sample_period: f64) -> Result<usize> {
    let x = tau / sample_period;
    let n = x.round();
    if n < 1.0 || (x - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Config(format!(
            "delay {tau:e} s is not a whole number of {sample_period:e} s samples"
        )));
    }
    Ok(n as usize)
}

/// Adds white Gaussian noise of the given rms to both channels and/or runs
/// them through a single-pole low-pass of the given -3 dB bandwidth (Hz).
pub fn apply_detector(
    v1: &mut [f64],
    v2: &mut [f64],
    dt: f64,
    bandwidth: Option<f64>,
    noise_rms: f64,
    seed: u64,
) -> Result<()> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    if let Some(bw) = bandwidth {
        if !(bw > 0.0) {
            return Err(Error::Config("detector bandwidth must be positive".into()));
        }
        let alpha = 1.0 - (-std::f64::consts::TAU * bw * dt).exp();
        for ch in [&mut *v1, &mut *v2] {
            let mut y = ch[0];
            for x in ch.iter_mut() {
                y += alpha * (*x - y);
                *x = y;
            }
        }
    }
    if noise_rms > 0.0 {
        let normal = Normal::new(0.0, noise_rms).map_err(|e| Error::Config(format!("invalid noise level: {e}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for i in 0..v1.len() {
            v1[i] += normal.sample(&mut rng);
            v2[i] += normal.sample(&mut rng);
        }
    } else if noise_rms < 0.0 {
        return Err(Error::Config("noise rms must be non-negative".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(kctau0: f64) -> InterferometerModel {
        InterferometerModel::new(5e-9, 1.0, 1.0, kctau0).unwrap()
    }

    #[test]
    fn textbook_points() {
        assert_eq!(forward_cw(1.0, 0.0, &unit(0.0)), (4.0, 0.0));
        let (a, b) = forward_cw(0.0, 1.3, &unit(0.7));
        assert_eq!((a, b), (1.0, 1.0));
        let (v1, v2) = forward_cw(0.84f64.sqrt(), 0.53 * PI, &unit(0.0));
        assert!((v1 - 1.667_496_612_277_315).abs() < 1e-12, "{v1}");
        assert!((v2 - 2.012_503_387_722_685).abs() < 1e-12, "{v2}");
    }

    #[test]
    fn general_voltages_reduce_to_two_arm_form() {
        let m = InterferometerModel::new(5e-9, 0.7, 0.85, 0.4).unwrap();
        let t = 0.6;
        let dphi = 1.1;
        let (v1, v2) = m.voltages(Complex64::from_polar(t, dphi), Complex64::new(1.0, 0.0), m.kctau0);
        let (w1, w2) = forward_cw(t, dphi, &m);
        assert!((v1 - w1).abs() < 1e-14 && (v2 - w2).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn sum_rule_and_periodicity(
            t in 0.0f64..1.0, dphi in -10.0f64..10.0, k in -10.0f64..10.0,
            a in 0.01f64..10.0, g in 0.0f64..1.0,
        ) {
            let m = InterferometerModel::new(5e-9, a, g, k).unwrap();
            let (v1, v2) = forward_cw(t, dphi, &m);
            prop_assert!(((v1 + v2) - 2.0 * a * (1.0 + t * t)).abs() <= 1e-12 * a * 4.0);
            let (w1, _) = forward_cw(t, dphi + 2.0 * PI, &m);
            prop_assert!((v1 - w1).abs() < 1e-9 * a);
            let m2 = InterferometerModel { kctau0: k + 2.0 * PI, ..m };
            let (u1, _) = forward_cw(t, dphi, &m2);
            prop_assert!((v1 - u1).abs() < 1e-9 * a);
        }
    }

    #[test]
    fn markers_follow_level_runs() {
        let c = vec![0.0, 1.0, 1.0, 0.0, 0.5, 0.5, 0.5, 0.0];
        let tr = DetectorTrace::uniform(1e-9, vec![0.0; 8], vec![0.0; 8], c).unwrap();
        assert_eq!(tr.markers.len(), 2);
        assert_eq!((tr.markers[0].start, tr.markers[0].end), (1, 3));
        assert!(tr.markers[0].is_on());
        assert!(tr.markers[1].is_partial());
        assert!((tr.markers[1].t_start - 4e-9).abs() < 1e-20);
    }

    #[test]
    fn trace_validation() {
        assert!(DetectorTrace::new(vec![0.0, 1.0], vec![0.0], vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(DetectorTrace::new(vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn delay_must_be_whole_samples() {
        assert_eq!(delay_in_samples(5e-9, 50e-12).unwrap(), 100);
        assert_eq!(delay_in_samples(4.8e-9, 50e-12).unwrap(), 96);
        assert!(delay_in_samples(5.01e-9, 50e-12).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut a1 = vec![1.0; 100];
        let mut a2 = vec![1.0; 100];
        let mut b1 = a1.clone();
        let mut b2 = a2.clone();
        apply_detector(&mut a1, &mut a2, 1e-9, None, 0.1, 7).unwrap();
        apply_detector(&mut b1, &mut b2, 1e-9, None, 0.1, 7).unwrap();
        assert_eq!(a1, b1);
        assert_eq!(a2, b2);
        let mut c1 = vec![1.0; 100];
        let mut c2 = vec![1.0; 100];
        apply_detector(&mut c1, &mut c2, 1e-9, None, 0.1, 8).unwrap();
        assert_ne!(a1, c1);
    }

    #[test]
    fn filter_settles_to_step_height() {
        let mut a = vec![0.0; 10];
        a.extend(vec![1.0; 2000]);
        let mut b = a.clone();
        apply_detector(&mut a, &mut b, 50e-12, Some(1e9), 0.0, 0).unwrap();
        assert!(a[5] == 0.0);
        assert!((a[2009] - 1.0).abs() < 1e-9);
        assert!(a[11] > 0.0 && a[11] < 0.5);
    }
}
