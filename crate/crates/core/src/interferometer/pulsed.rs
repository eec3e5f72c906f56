//! Pulsed-signal experiment: pairs of signal pulses separated by the arm
//! delay, the second one overlapping a control pulse in the cell.
//!
//! Each pair leaves the interferometer as three peaks: the first pulse
//! through the short arm (early), the first pulse through the long arm
//! overlapping the second through the short arm (middle, interfering), and
//! the second pulse through the long arm (late).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{apply_detector, DetectorTrace, InterferometerModel, TraceMeta};
use crate::error::{Error, Result};
use crate::obe::PulseShape;

/// Control-induced modulation of the second signal pulse, relative to the
/// control-off cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modulation {
    Uniform {
        t_amp: f64,
        dphi: f64,
    },
    /// Samples of (t_amp, dphi) against time measured from the start of the
    /// second signal pulse; held at the end values outside the table.
    Series {
        times: Vec<f64>,
        t_amp: Vec<f64>,
        dphi: Vec<f64>,
    },
}

impl Modulation {
    pub fn none() -> Self {
        Modulation::Uniform { t_amp: 1.0, dphi: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Modulation::Uniform { t_amp, dphi } => {
                if !(*t_amp >= 0.0 && dphi.is_finite()) {
                    return Err(Error::Argument("modulation needs t_amp >= 0 and finite dphi".into()));
                }
            }
            Modulation::Series { times, t_amp, dphi } => {
                if times.is_empty() || times.len() != t_amp.len() || times.len() != dphi.len() {
                    return Err(Error::Argument(
                        "modulation series columns must be non-empty and equal".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Argument("modulation series times must increase".into()));
                }
                if t_amp.iter().any(|t| !(*t >= 0.0)) || dphi.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Argument("modulation series has invalid values".into()));
                }
            }
        }
        Ok(())
    }

    /// Complex field factor at time `t` after the second pulse starts.
    pub fn at(&self, t: f64) -> Complex64 {
        match self {
            Modulation::Uniform { t_amp, dphi } => Complex64::from_polar(*t_amp, *dphi),
            Modulation::Series { times, t_amp, dphi } => {
                let n = times.len();
                if n == 1 || t <= times[0] {
                    return Complex64::from_polar(t_amp[0], dphi[0]);
                }
                if t >= times[n - 1] {
                    return Complex64::from_polar(t_amp[n - 1], dphi[n - 1]);
                }
                let i = times.partition_point(|&x| x <= t);
                let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                let lerp = |v: &[f64]| v[i - 1] + w * (v[i] - v[i - 1]);
                Complex64::from_polar(lerp(t_amp), lerp(dphi))
            }
        }
    }

    /// Modulation for a control attenuated to `level` of full intensity.
    /// Modelled as the complex power m^level (both absorption and phase
    /// scale linearly with control intensity in the weak limit).
    pub fn scaled(&self, level: f64) -> Self {
        match self {
            Modulation::Uniform { t_amp, dphi } => Modulation::Uniform {
                t_amp: t_amp.powf(level),
                dphi: dphi * level,
            },
            Modulation::Series { times, t_amp, dphi } => Modulation::Series {
                times: times.clone(),
                t_amp: t_amp.iter().map(|t| t.powf(level)).collect(),
                dphi: dphi.iter().map(|p| p * level).collect(),
            },
        }
    }
}

/// Sample windows of one pulse pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairWindows {
    pub early: (usize, usize),
    pub middle: (usize, usize),
    pub late: (usize, usize),
    /// Control level applied to the second pulse.
    pub level: f64,
}

/// Timing of a pulsed experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulsedLayout {
    pub sample_period: f64,
    /// First signal pulse of the first pair (only its envelope is used).
    pub signal: PulseShape,
    /// Delay from the first to the second pulse of a pair.
    pub separation: f64,
    /// Pair repetition period.
    pub period: f64,
    /// Control level for each pair (chopper state); also sets the pair count.
    pub levels: Vec<f64>,
}

impl PulsedLayout {
    pub fn validate(&self, model: &InterferometerModel) -> Result<()> {
        model.validate()?;
        self.signal.validate()?;
        let dt = self.sample_period;
        if !(dt > 0.0) {
            return Err(Error::Config("sample period must be positive".into()));
        }
        if (self.separation - model.tau).abs() > dt {
            return Err(Error::Config(format!(
                "pulse separation {:e} s differs from the arm delay {:e} s by more than one sample",
                self.separation, model.tau
            )));
        }
        let (lo, hi) = self.signal.support();
        if hi - lo >= model.tau {
            return Err(Error::Config(
                "signal pulse is longer than the arm delay; peaks would merge".into(),
            ));
        }
        if lo < 0.0 {
            return Err(Error::Config("first signal pulse starts before the trace".into()));
        }
        if self.period < hi - lo + 3.0 * model.tau {
            return Err(Error::Config("pair period too short for three separated peaks".into()));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("pair levels must be non-empty and lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.levels.len() as f64 * self.period / self.sample_period).ceil() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    fn window(&self, lo: f64, hi: f64) -> (usize, usize) {
        let dt = self.sample_period;
        ((lo / dt).ceil() as usize, (hi / dt).floor() as usize + 1)
    }

    /// Early, middle and late peak windows of every pair.
    pub fn pairs(&self, tau: f64) -> Vec<PairWindows> {
        let (lo, hi) = self.signal.support();
        // shift by a whole number of samples so the three windows have equal length
        let shift = (tau / self.sample_period).round() as usize;
        self.levels
            .iter()
            .enumerate()
            .map(|(k, &level)| {
                let off = k as f64 * self.period;
                let (s, e) = self.window(lo + off, hi + off);
                PairWindows {
                    early: (s, e),
                    middle: (s + shift, e + shift),
                    late: (s + 2 * shift, e + 2 * shift),
                    level,
                }
            })
            .collect()
    }
}

/// Synthesizes the three-peak detector trace of a pulsed experiment.
///
/// `modulation` is applied to the second pulse of every pair whose control
/// level is nonzero, scaled by that level.
pub fn forward_pulsed(
    layout: &PulsedLayout,
    modulation: &Modulation,
    model: &InterferometerModel,
    bandwidth: Option<f64>,
    noise_rms: f64,
    seed: u64,
) -> Result<DetectorTrace> {
    layout.validate(model)?;
    modulation.validate()?;
    let dt = layout.sample_period;
    let n = layout.len();
    let sep = layout.separation;
    let (lo, hi) = layout.signal.support();
    let scaled: Vec<Modulation> = layout.levels.iter().map(|&l| modulation.scaled(l)).collect();

    // cell output field at time t
    let field = |t: f64| -> Complex64 {
        let k = ((t - lo) / layout.period).floor();
        if k < 0.0 || k as usize >= layout.levels.len() {
            return Complex64::new(0.0, 0.0);
        }
        let k = k as usize;
        let local = t - k as f64 * layout.period;
        let first = layout.signal.envelope(local);
        let second = layout.signal.envelope(local - sep);
        let mut e = Complex64::new(first, 0.0);
        if second > 0.0 {
            let m = if layout.levels[k] > 0.0 {
                scaled[k].at(local - sep - layout.signal.t_start)
            } else {
                Complex64::new(1.0, 0.0)
            };
            e += second * m;
        }
        e
    };

    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    let mut control = vec![0.0; n];
    for i in 0..n {
        let t = i as f64 * dt;
        let (a, b) = model.voltages(field(t), field(t - model.tau), model.kctau0);
        v1.push(a);
        v2.push(b);
    }
    for (k, &level) in layout.levels.iter().enumerate() {
        if level > 0.0 {
            let off = k as f64 * layout.period + sep;
            let (s, e) = layout.window(lo + off, hi + off);
            control[s..e.min(n)].iter_mut().for_each(|c| *c = level);
        }
    }
    apply_detector(&mut v1, &mut v2, dt, bandwidth, noise_rms, seed)?;
    let mut trace = DetectorTrace::uniform(dt, v1, v2, control)?;
    trace.meta = TraceMeta {
        mode: "pulsed".into(),
        description: format!("{} pulse pairs", layout.levels.len()),
        seed: Some(seed),
        noise_rms,
    };
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn layout(levels: Vec<f64>) -> PulsedLayout {
        PulsedLayout {
            sample_period: 50e-12,
            signal: PulseShape::square(2e-9, 4e-9, 1.0, 0.3e-9).unwrap(),
            separation: 5e-9,
            period: 25e-9,
            levels,
        }
    }

    fn peak(tr: &DetectorTrace, w: (usize, usize)) -> (f64, f64) {
        tr.integral(w.0, w.1)
    }

    #[test]
    fn middle_peak_switches_detector_with_pi_phase() {
        let m = InterferometerModel::new(5e-9, 1.0, 1.0, 0.0).unwrap();
        let l = layout(vec![1.0]);
        let w = l.pairs(m.tau)[0];
        let plain = forward_pulsed(&l, &Modulation::none(), &m, None, 0.0, 0).unwrap();
        let (a, b) = peak(&plain, w.middle);
        assert!(a > 0.0 && b.abs() < 1e-12 * a);
        let switched = forward_pulsed(&l, &Modulation::Uniform { t_amp: 1.0, dphi: PI }, &m, None, 0.0, 0).unwrap();
        let (a, b) = peak(&switched, w.middle);
        assert!(b > 0.0 && a.abs() < 1e-12 * b);
        // outer peaks never interfere
        let (e1, e2) = peak(&switched, w.early);
        assert!((e1 - e2).abs() < 1e-12 * e1);
    }

    #[test]
    fn zero_modulation_is_time_symmetric() {
        let m = InterferometerModel::new(5e-9, 0.8, 0.9, 0.7).unwrap();
        let l = layout(vec![0.0]);
        let tr = forward_pulsed(&l, &Modulation::none(), &m, None, 0.0, 0).unwrap();
        // middle peak centred at 2 + 2 + 5 = 9 ns = sample 180
        let c = 180;
        for j in 1..150 {
            assert!((tr.v1[c - j] - tr.v1[c + j]).abs() < 1e-12);
            assert!((tr.v2[c - j] - tr.v2[c + j]).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_rule_per_sample() {
        let m = InterferometerModel::new(5e-9, 0.8, 0.9, 0.7).unwrap();
        let l = layout(vec![1.0, 0.0]);
        let a = forward_pulsed(&l, &Modulation::Uniform { t_amp: 0.9, dphi: 1.0 }, &m, None, 0.0, 0).unwrap();
        let b = forward_pulsed(&l, &Modulation::Uniform { t_amp: 0.9, dphi: 2.5 }, &m, None, 0.0, 0).unwrap();
        for i in 0..a.len() {
            assert!((a.v1[i] + a.v2[i] - b.v1[i] - b.v2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_varying_phase_lowers_average_contrast() {
        let m = InterferometerModel::new(5e-9, 1.0, 1.0, 0.0).unwrap();
        let l = layout(vec![1.0]);
        let w = l.pairs(m.tau)[0];
        let full = forward_pulsed(&l, &Modulation::Uniform { t_amp: 1.0, dphi: PI }, &m, None, 0.0, 0).unwrap();
        // phase ramps up over the first and down over the last nanosecond
        let ramp = Modulation::Series {
            times: vec![-0.5e-9, 0.5e-9, 3.5e-9, 4.5e-9],
            t_amp: vec![1.0; 4],
            dphi: vec![0.0, PI, PI, 0.0],
        };
        let partial = forward_pulsed(&l, &ramp, &m, None, 0.0, 0).unwrap();
        let contrast = |tr: &DetectorTrace| {
            let (a, b) = peak(tr, w.middle);
            (b - a) / (a + b)
        };
        assert!((contrast(&full) - 1.0).abs() < 1e-12);
        let c = contrast(&partial);
        assert!(c > 0.3 && c < 0.99, "{c}");
    }

    #[test]
    fn separation_must_match_delay() {
        let m = InterferometerModel::new(5e-9, 1.0, 1.0, 0.0).unwrap();
        let mut l = layout(vec![1.0]);
        l.separation = 5.2e-9;
        assert!(matches!(
            forward_pulsed(&l, &Modulation::none(), &m, None, 0.0, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scaled_modulation_is_complex_power() {
        let m = Modulation::Uniform { t_amp: 0.81, dphi: 2.0 }.scaled(0.5);
        let z = m.at(0.0);
        assert!((z.norm() - 0.9).abs() < 1e-12);
        assert!((z.arg() - 1.0).abs() < 1e-12);
    }
}
