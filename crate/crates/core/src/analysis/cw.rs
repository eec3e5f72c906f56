//! Per-pulse analysis of CW-signal traces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use super::{interferometer_phase, invert_joint, locate_absorption_minimum, Calibration, Flags};
use crate::error::{Error, Result};
use crate::interferometer::DetectorTrace;

/// Analysis windows around one control pulse; sample ranges [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwWindows {
    pub marker: usize,
    pub pre: (usize, usize),
    pub inner: (usize, usize),
    pub echo: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Segmentation {
    pub windows: Vec<CwWindows>,
    /// Fully-on pulses discarded because their windows collide or leave the trace.
    pub dropped: usize,
    /// Partially chopped pulses, excluded.
    pub partial: usize,
    /// Markers at or below the off level.
    pub ignored: usize,
}

/// Splits a trace into (pre, in, echo) windows for every fully-on control
/// pulse. A pulse is kept only if no other pulse emits light that reaches a
/// detector during its windows, i.e. none lies in [start − pre − τ, end + τ),
/// and if it is no longer than τ (otherwise it interferes with itself).
pub fn segment_cw(trace: &DetectorTrace, tau_samples: usize, pre_samples: usize) -> Result<Segmentation> {
    if trace.markers.is_empty() {
        return Err(Error::Segmentation("trace has no control markers".into()));
    }
    if tau_samples == 0 || pre_samples == 0 {
        return Err(Error::Argument(
            "delay and pre-window must be at least one sample".into(),
        ));
    }
    let mut seg = Segmentation::default();
    let markers = &trace.markers;
    for (k, m) in markers.iter().enumerate() {
        if m.is_partial() {
            seg.partial += 1;
            continue;
        }
        if !m.is_on() {
            seg.ignored += 1;
            continue;
        }
        let reach_lo = m.start.checked_sub(pre_samples + tau_samples);
        let reach_hi = m.end + tau_samples;
        let fits = reach_lo.is_some() && reach_hi <= trace.len() && m.end - m.start <= tau_samples;
        let clear = markers
            .iter()
            .enumerate()
            .filter(|(j, o)| *j != k && o.level > 0.0)
            .all(|(_, o)| o.end <= reach_lo.unwrap_or(0) || o.start >= reach_hi);
        if !(fits && clear) {
            seg.dropped += 1;
            continue;
        }
        seg.windows.push(CwWindows {
            marker: k,
            pre: (m.start - pre_samples, m.start),
            inner: (m.start, m.end),
            echo: (m.start + tau_samples, m.end + tau_samples),
        });
    }
    Ok(seg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwOptions {
    pub tau_samples: usize,
    /// Pre-pulse window length (samples).
    pub pre_samples: usize,
    /// Predicted kcτ per sample (from the reference fringe phase and the
    /// scan's detuning axis). Only the sign of sin kcτ is taken from it; the
    /// pre-pulse window supplies cos kcτ.
    pub kctau_track: Option<Vec<f64>>,
}

impl CwOptions {
    pub fn new(tau_samples: usize) -> Self {
        CwOptions {
            tau_samples,
            pre_samples: 3,
            kctau_track: None,
        }
    }

    pub fn with_kctau_track(self, track: Vec<f64>) -> Self {
        CwOptions {
            kctau_track: Some(track),
            ..self
        }
    }
}

// Below this |sin kcτ| the predicted branch is not trusted.
const MIN_SIN_FOR_BRANCH: f64 = 0.05;

fn sin_sign(track: Option<&Vec<f64>>, at: usize, cos_kctau: f64) -> Option<f64> {
    let th = *track?.get(at)?;
    if (1.0 - cos_kctau * cos_kctau).max(0.0).sqrt() < MIN_SIN_FOR_BRANCH || th.sin().abs() < MIN_SIN_FOR_BRANCH {
        return None;
    }
    Some(th.sin().signum())
}

/// Recovered modulation for one control pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_start_s: f64,
    pub window_end_s: f64,
    /// Field transmission of the cell with the control on.
    pub t_amp: f64,
    pub transmission: f64,
    pub transmission_off: f64,
    pub dphi_rad: f64,
    pub dphi_alt_rad: Option<f64>,
    pub cos_kctau: f64,
    pub residual_v: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwSummary {
    pub calibration: Calibration,
    pub markers: usize,
    pub analyzed: usize,
    pub dropped: usize,
    pub partial: usize,
    pub ignored: usize,
    pub sum_rule_violations: usize,
    pub ambiguous: usize,
    pub cos_clamped: usize,
    /// Time of the deepest point of the band-stopped channel sum.
    pub absorption_minimum_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwAnalysis {
    pub rows: Vec<WindowResult>,
    pub summary: CwSummary,
}

fn analyze_window(
    trace: &DetectorTrace,
    w: &CwWindows,
    cal: &Calibration,
    track: Option<&Vec<f64>>,
) -> Result<WindowResult> {
    let pre = trace.mean(w.pre.0, w.pre.1);
    let inner = trace.mean(w.inner.0, w.inner.1);
    let echo = trace.mean(w.echo.0, w.echo.1);
    let mut row = WindowResult {
        window_start_s: trace.times[w.inner.0],
        window_end_s: trace.times[w.inner.1 - 1] + trace.sample_period(),
        t_amp: f64::NAN,
        transmission: f64::NAN,
        transmission_off: f64::NAN,
        dphi_rad: f64::NAN,
        dphi_alt_rad: None,
        cos_kctau: f64::NAN,
        residual_v: f64::NAN,
        flags: Flags::default(),
    };
    // Before the pulse both arms carry the control-off cell transmission,
    // so the pre-window sum measures a·T_off.
    let a_off = 0.25 * (pre.0 + pre.1);
    if a_off == 0.0 {
        // opaque cell: nothing reaches the detector to carry a phase
        row.transmission_off = 0.0;
        row.flags.set(Flags::NO_PHASE);
        return Ok(row);
    }
    if !(a_off > 0.0) {
        row.flags.set(Flags::SUM_RULE);
        return Ok(row);
    }
    let local = cal.with_a(a_off);
    let phase = interferometer_phase(pre.0, pre.1, &local)?;
    if phase.clamped() {
        row.flags.set(Flags::COS_CLAMPED);
    }
    row.cos_kctau = phase.cos_kctau;
    row.transmission_off = a_off / cal.a;
    let sign = sin_sign(track, w.pre.0, phase.cos_kctau);
    match invert_joint(inner, echo, &local, phase.cos_kctau, sign) {
        Ok(est) => {
            row.transmission = est.transmission * row.transmission_off;
            row.t_amp = row.transmission.sqrt();
            row.dphi_rad = est.dphi;
            row.dphi_alt_rad = est.dphi_alt;
            row.residual_v = est.residual;
            row.flags.set(est.flags.0);
        }
        Err(Error::Unphysical(msg)) => {
            row.flags.set(if msg.contains("unobservable") {
                Flags::NO_PHASE
            } else {
                Flags::SUM_RULE
            });
        }
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// Runs segmentation and inversion over a CW trace. Windows whose voltages
/// violate the sum rule are reported with NaN values and a flag rather than
/// failing the run.
pub fn analyze_cw(trace: &DetectorTrace, cal: &Calibration, opts: &CwOptions) -> Result<CwAnalysis> {
    cal.validate()?;
    let seg = segment_cw(trace, opts.tau_samples, opts.pre_samples)?;
    let rows: Vec<WindowResult> = seg
        .windows
        .par_iter()
        .map(|w| analyze_window(trace, w, cal, opts.kctau_track.as_ref()))
        .collect::<Result<_>>()?;
    let count = |bit| rows.iter().filter(|r| r.flags.has(bit)).count();
    let summary = CwSummary {
        calibration: *cal,
        markers: trace.markers.len(),
        analyzed: rows.len(),
        dropped: seg.dropped,
        partial: seg.partial,
        ignored: seg.ignored,
        sum_rule_violations: count(Flags::SUM_RULE),
        ambiguous: count(Flags::AMBIGUOUS),
        cos_clamped: count(Flags::COS_CLAMPED),
        absorption_minimum_s: None,
    };
    Ok(CwAnalysis { rows, summary })
}

impl CwAnalysis {
    /// Labels the absorption minimum of [start, end) using a band-stop at
    /// the fringe period (samples).
    pub fn locate_absorption(&mut self, trace: &DetectorTrace, start: usize, end: usize, fringe_period: f64) {
        self.summary.absorption_minimum_s =
            locate_absorption_minimum(trace, start, end, fringe_period).map(|i| trace.times[i]);
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes one row per analyzed window.
pub fn write_results_csv<W: Write>(rows: &[WindowResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record([
        "window_start_s",
        "t_amp",
        "transmission",
        "dphi_rad",
        "residual_V",
        "flags",
        "window_end_s",
        "transmission_off",
        "dphi_alt_rad",
        "cos_kctau",
    ])
    .map_err(io)?;
    for r in rows {
        w.write_record([
            r.window_start_s.to_string(),
            r.t_amp.to_string(),
            r.transmission.to_string(),
            r.dphi_rad.to_string(),
            r.residual_v.to_string(),
            r.flags.to_string(),
            r.window_end_s.to_string(),
            r.transmission_off.to_string(),
            opt(r.dphi_alt_rad),
            r.cos_kctau.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Convenience wrapper writing to a file path.
pub fn write_results_file(rows: &[WindowResult], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(e.to_string()))?;
    write_results_csv(rows, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::InterferometerModel;

    // Trace built directly from window-level voltages: pulses of `len`
    // samples starting at `starts`, with the given constant modulation.
    fn synthetic(starts: &[usize], len: usize, tau: usize, n: usize, t_on: f64, dphi: f64, k: f64) -> DetectorTrace {
        let m = InterferometerModel::new(5e-9, 1.0, 0.9, k).unwrap();
        let t_off = 0.8;
        let mut field = vec![num_complex::Complex64::new(t_off, 0.0); n];
        let mut control = vec![0.0; n];
        for &s in starts {
            for i in s..s + len {
                field[i] = num_complex::Complex64::from_polar(t_on, dphi);
                control[i] = 1.0;
            }
        }
        let (mut v1, mut v2) = (vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let d = if i >= tau { field[i - tau] } else { field[0] };
            let (a, b) = m.voltages(field[i], d, k);
            v1[i] = a;
            v2[i] = b;
        }
        DetectorTrace::uniform(50e-12, v1, v2, control).unwrap()
    }

    #[test]
    fn single_pulse_gives_one_triple() {
        let tr = synthetic(&[300], 80, 100, 1000, 0.7, 1.0, 0.4);
        let seg = segment_cw(&tr, 100, 3).unwrap();
        assert_eq!(seg.windows.len(), 1);
        let w = seg.windows[0];
        assert_eq!(w.pre, (297, 300));
        assert_eq!(w.inner, (300, 380));
        assert_eq!(w.echo, (400, 480));
        assert!((tr.times[w.echo.0] - tr.times[w.inner.0] - 5e-9).abs() < 1e-18);
    }

    #[test]
    fn crowded_pulses_are_dropped() {
        let tr = synthetic(&[300, 430, 900], 80, 100, 1400, 0.7, 1.0, 0.4);
        let seg = segment_cw(&tr, 100, 3).unwrap();
        assert_eq!(seg.dropped, 2);
        assert_eq!(seg.windows.len(), 1);
        assert_eq!(seg.windows[0].inner.0, 900);
    }

    #[test]
    fn no_markers_is_an_error() {
        let tr = DetectorTrace::uniform(1e-9, vec![1.0; 10], vec![1.0; 10], vec![0.0; 10]).unwrap();
        assert!(matches!(segment_cw(&tr, 3, 3), Err(Error::Segmentation(_))));
    }

    #[test]
    fn windows_invert_to_injected_modulation() {
        let starts: Vec<usize> = (0..20).map(|k| 200 + 250 * k).collect();
        for &k in &[0.3, 1.9, -2.2] {
            let tr = synthetic(&starts, 80, 100, 5400, 0.7, 2.4, k);
            let cal = Calibration::new(1.0, 0.9).unwrap();
            let opts = CwOptions::new(100).with_kctau_track(vec![k; tr.len()]);
            let res = analyze_cw(&tr, &cal, &opts).unwrap();
            assert_eq!(res.rows.len(), 20);
            for r in &res.rows {
                assert!((r.transmission - 0.49).abs() < 1e-9, "{r:?}");
                assert!((r.transmission_off - 0.64).abs() < 1e-12);
                assert!((r.dphi_rad - 2.4).abs() < 1e-9, "{r:?}");
            }
            // without the track only the mirror pair ±Δφ is known
            let blind = analyze_cw(&tr, &cal, &CwOptions::new(100)).unwrap();
            assert_eq!(blind.summary.ambiguous, 20);
        }
    }

    #[test]
    fn gain_error_flags_sum_rule_without_failing() {
        let mut tr = synthetic(&[300], 80, 100, 1000, 0.2, 1.0, 0.4);
        // lower the detector gain during the pulse only
        for i in 300..380 {
            tr.v1[i] *= 0.5;
            tr.v2[i] *= 0.5;
        }
        let res = analyze_cw(&tr, &Calibration::new(1.0, 0.9).unwrap(), &CwOptions::new(100)).unwrap();
        assert_eq!(res.summary.sum_rule_violations, 1);
        assert!(res.rows[0].dphi_rad.is_nan());
        let mut buf = Vec::new();
        write_results_csv(&res.rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("sum_rule"));
    }
}
