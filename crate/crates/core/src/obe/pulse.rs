use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temporal profile of a pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    /// Flat top with raised-cosine edges; half amplitude at `t_start` and
    /// `t_start + duration`, 10-90 % edge time equal to `rise_time`.
    Square,
    /// Gaussian with intensity FWHM `duration`, centred at `t_start + duration / 2`.
    Gaussian,
    /// Linear interpolation of (t, Rabi frequency) samples, zero outside.
    Table(Vec<(f64, f64)>),
}

/// A control or signal pulse; Rabi frequencies in rad/s, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub kind: PulseKind,
    pub t_start: f64,
    pub duration: f64,
    pub peak_rabi: f64,
    pub rise_time: f64,
}

// 10-90 % time of a raised-cosine edge as a fraction of its full length:
// (acos(-0.8) - acos(0.8)) / pi.
const RAISED_COSINE_10_90: f64 = 0.590_334_470_601_733_4;

impl PulseShape {
    /// Square pulse with smoothed edges; `rise_time = 0` gives a hard square.
    pub fn square(t_start: f64, duration: f64, peak_rabi: f64, rise_time: f64) -> Result<Self> {
        let p = PulseShape {
            kind: PulseKind::Square,
            t_start,
            duration,
            peak_rabi,
            rise_time,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(t_start: f64, fwhm: f64, peak_rabi: f64) -> Result<Self> {
        let p = PulseShape {
            kind: PulseKind::Gaussian,
            t_start,
            duration: fwhm,
            peak_rabi,
            rise_time: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Tabulated pulse; `samples` must be sorted by time.
    pub fn table(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Argument("pulse table needs at least two samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Argument("pulse table times must increase".into()));
        }
        let t_start = samples[0].0;
        let duration = samples[samples.len() - 1].0 - t_start;
        let peak_rabi = samples.iter().map(|s| s.1).fold(0.0, f64::max);
        let p = PulseShape {
            kind: PulseKind::Table(samples),
            t_start,
            duration,
            peak_rabi,
            rise_time: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::Argument(format!(
                "pulse duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.peak_rabi >= 0.0) {
            return Err(Error::Argument("peak Rabi frequency must be non-negative".into()));
        }
        if !(self.rise_time >= 0.0 && self.rise_time < 0.5 * self.duration) {
            return Err(Error::Argument(format!(
                "rise time must lie in [0, duration/2), got {}",
                self.rise_time
            )));
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    /// Full length of one raised-cosine edge.
    fn edge_length(&self) -> f64 {
        self.rise_time / RAISED_COSINE_10_90
    }

    /// Interval outside which the pulse is identically zero (Gaussian: +-6 FWHM).
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            PulseKind::Square => {
                let half = 0.5 * self.edge_length();
                (self.t_start - half, self.t_end() + half)
            }
            PulseKind::Gaussian => {
                let c = self.t_start + 0.5 * self.duration;
                (c - 6.0 * self.duration, c + 6.0 * self.duration)
            }
            PulseKind::Table(s) => (s[0].0, s[s.len() - 1].0),
        }
    }

    /// Envelope normalized to the peak, in [0, 1].
    pub fn envelope(&self, t: f64) -> f64 {
        match &self.kind {
            PulseKind::Square => {
                let edge = self.edge_length();
                let ramp = |x: f64| -> f64 {
                    // x: time relative to the half-amplitude point
                    if edge == 0.0 {
                        return if x >= 0.0 { 1.0 } else { 0.0 };
                    }
                    let u = (x / edge + 0.5).clamp(0.0, 1.0);
                    0.5 * (1.0 - (std::f64::consts::PI * u).cos())
                };
                ramp(t - self.t_start).min(ramp(self.t_end() - t))
            }
            PulseKind::Gaussian => {
                let c = self.t_start + 0.5 * self.duration;
                // Intensity FWHM -> field envelope exp(-2 ln2 (t-c)^2 / fwhm^2).
                (-2.0 * std::f64::consts::LN_2 * ((t - c) / self.duration).powi(2)).exp()
            }
            PulseKind::Table(_) => {
                if self.peak_rabi == 0.0 {
                    0.0
                } else {
                    self.rabi_at(t) / self.peak_rabi
                }
            }
        }
    }

    /// Rabi frequency at time `t`.
    pub fn rabi_at(&self, t: f64) -> f64 {
        match &self.kind {
            PulseKind::Table(s) => {
                if t < s[0].0 || t > s[s.len() - 1].0 {
                    return 0.0;
                }
                let i = s.partition_point(|p| p.0 <= t).clamp(1, s.len() - 1);
                let (t0, v0) = s[i - 1];
                let (t1, v1) = s[i];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
            _ => self.peak_rabi * self.envelope(t),
        }
    }

    /// Largest step an integrator may take without stepping over an edge.
    pub fn resolution(&self) -> f64 {
        match &self.kind {
            PulseKind::Square if self.rise_time > 0.0 => 0.25 * self.edge_length(),
            PulseKind::Table(s) => s.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min),
            _ => self.duration / 20.0,
        }
    }

    /// Same pulse with a different peak Rabi frequency.
    pub fn with_peak(&self, peak_rabi: f64) -> Self {
        let mut p = self.clone();
        if let PulseKind::Table(s) = &mut p.kind {
            let scale = if self.peak_rabi > 0.0 {
                peak_rabi / self.peak_rabi
            } else {
                0.0
            };
            for (_, v) in s.iter_mut() {
                *v *= scale;
            }
        }
        p.peak_rabi = peak_rabi;
        p
    }
}
