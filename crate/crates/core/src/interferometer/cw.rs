//! CW-signal experiment: a slow signal-detuning ramp with short control
//! pulses, recorded through the interferometer.
//!
//! The timeline is built on integer samples. It starts with a reference
//! segment in which the signal bypasses the cell (unit transmission) while the
//! detuning ramps, giving clean calibration fringes. The scan follows; around
//! every control pulse the detuning is held constant from a guard interval
//! before the pulse until a guard interval after its echo, so the pre-pulse,
//! in-pulse and echo windows all see the same operating point. Real scans are
//! slow compared with a pulse, so the holds are a time compression of the
//! ramp, not a change of physics. Holds extend one delay plus the guard on
//! either side so that the delayed arm also sees the operating point.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_detector, delay_in_samples, DetectorTrace, InterferometerModel, TraceMeta};
use crate::atoms::{LadderAtom, VapourCell, VelocityGrid};
use crate::error::{Error, Result};
use crate::steadystate::{response, FieldConfig};

/// Parameters of a CW scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwLayout {
    pub sample_period: f64,
    pub tau: f64,
    /// Signal detuning at the start and end of the scan (rad/s).
    pub delta_s_start: f64,
    pub delta_s_stop: f64,
    pub n_pulses: usize,
    pub pulse_duration: f64,
    /// Ramp speed expressed as samples per interferometer fringe.
    pub samples_per_fringe: f64,
    /// Length of the leading calibration segment in fringes.
    pub reference_fringes: f64,
    /// Hold margin before each pulse and after each echo (samples).
    pub guard_samples: usize,
    /// Chopper levels assigned cyclically to successive pulses.
    pub chop_pattern: Vec<f64>,
}

/// One control pulse on the timeline; sample range [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSlot {
    pub start: usize,
    pub end: usize,
    pub delta_s: f64,
    pub level: f64,
}

/// Sample-resolved scan: detuning per sample and the control pulses.
#[derive(Debug, Clone, PartialEq)]
pub struct CwTimeline {
    pub sample_period: f64,
    pub tau_samples: usize,
    /// Calibration segment [start, end) with the cell bypassed.
    pub reference: (usize, usize),
    pub delta_s: Vec<f64>,
    pub pulses: Vec<PulseSlot>,
    /// Fringe period in samples inside the calibration segment.
    pub fringe_period_samples: f64,
}

fn ramp(out: &mut Vec<f64>, from: f64, to: f64, len: usize) {
    for j in 0..len {
        out.push(from + (to - from) * (j + 1) as f64 / len as f64);
    }
}

impl CwLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_period > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        if !(self.delta_s_stop > self.delta_s_start) {
            return Err(Error::Config("detuning scan must increase (stop > start)".into()));
        }
        if !(self.samples_per_fringe >= 8.0) {
            return Err(Error::Config("need at least 8 samples per fringe".into()));
        }
        if !(self.reference_fringes >= 1.0) {
            return Err(Error::Config("reference segment must span at least one fringe".into()));
        }
        if self.guard_samples < 4 {
            return Err(Error::Config("guard must be at least 4 samples".into()));
        }
        if self.chop_pattern.is_empty() || self.chop_pattern.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("chop pattern levels must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn pulse_samples(&self) -> Result<usize> {
        let n = (self.pulse_duration / self.sample_period).round();
        if !(n >= 10.0) {
            return Err(Error::Config(format!(
                "control pulse of {:e} s spans fewer than 10 samples",
                self.pulse_duration
            )));
        }
        Ok(n as usize)
    }

    /// Lays out the scan on the sample grid.
    pub fn timeline(&self) -> Result<CwTimeline> {
        self.validate()?;
        let tau_samples = delay_in_samples(self.tau, self.sample_period)?;
        let pulse_samples = self.pulse_samples()?;
        // detuning advance per sample that moves kcτ by one fringe per
        // `samples_per_fringe` samples
        let slope = std::f64::consts::TAU / (self.samples_per_fringe * self.tau);
        let span = self.delta_s_stop - self.delta_s_start;

        let reference_len = (self.reference_fringes * self.samples_per_fringe).ceil() as usize;
        let mut ds = Vec::new();
        for j in 0..reference_len {
            ds.push(self.delta_s_start - slope * (reference_len - j) as f64);
        }
        let mut pulses = Vec::with_capacity(self.n_pulses);
        if self.n_pulses == 0 {
            let len = ((span / slope).round() as usize).max(1);
            ramp(&mut ds, self.delta_s_start - slope, self.delta_s_stop, len);
        } else {
            let step = span / self.n_pulses as f64;
            let ramp_len = ((step / slope).round() as usize).max(2);
            let half = ramp_len / 2;
            // the hold covers every sample whose light reaches a detector
            // during the pre-pulse, in-pulse and echo windows
            let hold = 2 * self.guard_samples + pulse_samples + 2 * tau_samples;
            let mut prev = self.delta_s_start - slope;
            for k in 0..self.n_pulses {
                let target = self.delta_s_start + (k as f64 + 0.5) * step;
                ramp(&mut ds, prev, target, if k == 0 { half } else { ramp_len });
                let start = ds.len() + self.guard_samples + tau_samples;
                pulses.push(PulseSlot {
                    start,
                    end: start + pulse_samples,
                    delta_s: target,
                    level: self.chop_pattern[k % self.chop_pattern.len()],
                });
                ds.extend(std::iter::repeat_n(target, hold));
                prev = target;
            }
            ramp(&mut ds, prev, self.delta_s_stop, half);
        }
        Ok(CwTimeline {
            sample_period: self.sample_period,
            tau_samples,
            reference: (0, reference_len),
            delta_s: ds,
            pulses,
            fringe_period_samples: self.samples_per_fringe,
        })
    }
}

impl CwTimeline {
    pub fn len(&self) -> usize {
        self.delta_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_s.is_empty()
    }

    /// Checks that echoes never run into the next pulse.
    pub fn validate(&self) -> Result<()> {
        for w in self.pulses.windows(2) {
            if w[1].start < w[0].end + self.tau_samples {
                return Err(Error::Config(format!(
                    "control pulses at samples {} and {} are closer than the delay",
                    w[0].start, w[1].start
                )));
            }
        }
        if let Some(last) = self.pulses.last() {
            if last.end + self.tau_samples > self.len() {
                return Err(Error::Config("last echo runs past the end of the trace".into()));
            }
        }
        Ok(())
    }
}

/// Cell response supplied to the synthesizer.
pub trait CwPhysics: Sync {
    /// Complex field transmission with the control off.
    fn off(&self, delta_s: f64) -> Result<Complex64>;
    /// Field transmission for each sample of a control pulse at `level`
    /// (fraction of the full control intensity).
    fn on(&self, delta_s: f64, level: f64, samples: usize) -> Result<Vec<Complex64>>;
}

/// Steady-state (adiabatic) response from the CW susceptibility.
#[derive(Debug, Clone)]
pub struct SteadyPhysics {
    pub atom: LadderAtom,
    pub cell: VapourCell,
    pub grid: VelocityGrid,
    /// Control settings at full level; `delta_s` is overridden per sample.
    pub fields: FieldConfig,
}

impl SteadyPhysics {
    pub fn field(&self, delta_s: f64, rabi_c: f64) -> Result<Complex64> {
        let f = self.fields.with_delta_s(delta_s).with_rabi_c(rabi_c);
        let r = response(&f, &self.atom, &self.cell, &self.grid)?;
        Ok(Complex64::from_polar(r.transmission.sqrt(), r.phase))
    }
}

impl CwPhysics for SteadyPhysics {
    fn off(&self, delta_s: f64) -> Result<Complex64> {
        self.field(delta_s, 0.0)
    }

    fn on(&self, delta_s: f64, level: f64, samples: usize) -> Result<Vec<Complex64>> {
        let m = self.field(delta_s, self.fields.rabi_c * level.sqrt())?;
        Ok(vec![m; samples])
    }
}

/// Synthesizes the two detector voltages and the control level for a CW scan.
///
/// `bandwidth` optionally low-passes the detectors (Hz); noise is white and
/// Gaussian with the given rms, drawn from a generator seeded with `seed`.
pub fn synth_trace_cw(
    timeline: &CwTimeline,
    physics: &dyn CwPhysics,
    model: &InterferometerModel,
    bandwidth: Option<f64>,
    noise_rms: f64,
    seed: u64,
) -> Result<DetectorTrace> {
    model.validate()?;
    timeline.validate()?;
    let dt = timeline.sample_period;
    if delay_in_samples(model.tau, dt)? != timeline.tau_samples {
        return Err(Error::Config("model delay differs from the timeline delay".into()));
    }
    let n = timeline.len();
    let (r0, r1) = timeline.reference;

    let mut field: Vec<Complex64> = timeline
        .delta_s
        .par_iter()
        .enumerate()
        .map(|(i, &ds)| {
            if i >= r0 && i < r1 {
                Ok(Complex64::new(1.0, 0.0))
            } else {
                physics.off(ds)
            }
        })
        .collect::<Result<_>>()?;
    let mut control = vec![0.0; n];
    for p in &timeline.pulses {
        if p.level <= 0.0 {
            continue;
        }
        let on = physics.on(p.delta_s, p.level, p.end - p.start)?;
        if on.len() != p.end - p.start {
            return Err(Error::Argument("physics returned the wrong number of samples".into()));
        }
        field[p.start..p.end].copy_from_slice(&on);
        control[p.start..p.end].iter_mut().for_each(|c| *c = p.level);
    }

    let tau = timeline.tau_samples;
    let before = Complex64::new(1.0, 0.0);
    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    for i in 0..n {
        let delayed = if i >= tau { field[i - tau] } else { before };
        let theta = model.kctau_at(timeline.delta_s[i]);
        let (a, b) = model.voltages(field[i], delayed, theta);
        v1.push(a);
        v2.push(b);
    }
    apply_detector(&mut v1, &mut v2, dt, bandwidth, noise_rms, seed)?;
    let mut trace = DetectorTrace::uniform(dt, v1, v2, control)?;
    trace.meta = TraceMeta {
        mode: "cw".into(),
        description: format!(
            "{} pulses, detuning {:.6e}..{:.6e} rad/s",
            timeline.pulses.len(),
            timeline.delta_s.first().copied().unwrap_or(0.0),
            timeline.delta_s.last().copied().unwrap_or(0.0)
        ),
        seed: Some(seed),
        noise_rms,
    };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::hz_to_rad;

    pub(crate) struct Fixed {
        pub off: Complex64,
        pub on: Complex64,
    }

    impl CwPhysics for Fixed {
        fn off(&self, _: f64) -> Result<Complex64> {
            Ok(self.off)
        }
        fn on(&self, _: f64, _: f64, n: usize) -> Result<Vec<Complex64>> {
            Ok(vec![self.on; n])
        }
    }

    fn layout(n_pulses: usize) -> CwLayout {
        CwLayout {
            sample_period: 50e-12,
            tau: 5e-9,
            delta_s_start: hz_to_rad(-2e9),
            delta_s_stop: hz_to_rad(0.0),
            n_pulses,
            pulse_duration: 4e-9,
            samples_per_fringe: 400.0,
            reference_fringes: 3.0,
            guard_samples: 8,
            chop_pattern: vec![1.0],
        }
    }

    #[test]
    fn timeline_holds_detuning_around_pulses() {
        let tl = layout(20).timeline().unwrap();
        assert_eq!(tl.pulses.len(), 20);
        assert_eq!(tl.tau_samples, 100);
        for p in &tl.pulses {
            assert_eq!(p.end - p.start, 80);
            for i in p.start - 108..p.end + 108 {
                assert_eq!(tl.delta_s[i], p.delta_s);
            }
        }
        let step = hz_to_rad(2e9) / 20.0;
        assert!((tl.pulses[0].delta_s - (hz_to_rad(-2e9) + step / 2.0)).abs() < 1e-3);
        assert!((tl.delta_s.last().unwrap() - 0.0).abs() < 1e-3);
        assert!(tl.delta_s.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn null_modulation_equals_bare_fringes() {
        let m = InterferometerModel::new(5e-9, 0.7, 0.85, 0.3).unwrap();
        let tl = layout(5).timeline().unwrap();
        let off = Complex64::from_polar(0.8, 0.4);
        let with = synth_trace_cw(&tl, &Fixed { off, on: off }, &m, None, 0.0, 0).unwrap();
        let bare = CwTimeline {
            pulses: vec![],
            ..tl.clone()
        };
        let without = synth_trace_cw(&bare, &Fixed { off, on: off }, &m, None, 0.0, 0).unwrap();
        assert_eq!(with.v1, without.v1);
        assert_eq!(with.v2, without.v2);
        assert_eq!(with.markers.len(), 5);
    }

    #[test]
    fn reference_segment_is_unit_transmission() {
        let m = InterferometerModel::new(5e-9, 0.7, 0.85, 0.3).unwrap();
        let tl = layout(2).timeline().unwrap();
        let tr = synth_trace_cw(
            &tl,
            &Fixed {
                off: Complex64::new(0.3, 0.0),
                on: Complex64::new(0.3, 0.0),
            },
            &m,
            None,
            0.0,
            0,
        )
        .unwrap();
        for i in tl.tau_samples..tl.reference.1 {
            assert!((tr.v1[i] + tr.v2[i] - 4.0 * 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn crowded_pulses_rejected() {
        let mut tl = layout(2).timeline().unwrap();
        tl.pulses[1].start = tl.pulses[0].end + 50;
        tl.pulses[1].end = tl.pulses[1].start + 80;
        let m = InterferometerModel::new(5e-9, 1.0, 1.0, 0.0).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let r = synth_trace_cw(&tl, &Fixed { off: one, on: one }, &m, None, 0.0, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn short_pulses_rejected() {
        let mut l = layout(2);
        l.pulse_duration = 0.3e-9;
        assert!(l.timeline().is_err());
    }
}
