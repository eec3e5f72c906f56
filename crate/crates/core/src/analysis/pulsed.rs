//! Pulse-averaged analysis of three-peak pulsed traces.
//!
//! With peak integrals taken over equal-length windows, a control-off pair
//! gives early = late = aI per channel (I: pulse energy), a middle
//! peak 4aI(1 ± γ cos kcτ)/2 per channel, and a control-on middle peak
//! aI(1 + t² ± 2γ t cos(Δφ + kcτ)): the CW relation with a → aI. The off
//! pairs therefore supply both the normalization and cos kcτ.

use serde::{Deserialize, Serialize};

use super::{interferometer_phase, invert, Calibration, ModulationEstimate};
use crate::error::{Error, Result};
use crate::interferometer::{DetectorTrace, PairWindows, LEVEL_OFF, LEVEL_ON};

/// Pairs of a trace split by the control level seen by the second pulse.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairClasses {
    pub on: Vec<PairWindows>,
    pub off: Vec<PairWindows>,
    pub partial: Vec<PairWindows>,
}

/// Classifies pairs from the recorded control level over each middle window
/// (where the second pulse passes the cell).
pub fn classify_pairs(trace: &DetectorTrace, pairs: &[PairWindows]) -> Result<PairClasses> {
    let mut out = PairClasses::default();
    for p in pairs {
        let (s, e) = p.middle;
        if !(s < e && p.late.1 <= trace.len()) {
            return Err(Error::Argument(format!(
                "pair windows [{s}, {}) exceed the trace",
                p.late.1
            )));
        }
        let level = trace.mean_level(s, e);
        let mut p = *p;
        p.level = level;
        if level >= LEVEL_ON {
            out.on.push(p);
        } else if level <= LEVEL_OFF {
            out.off.push(p);
        } else {
            out.partial.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulsedEstimate {
    pub estimate: ModulationEstimate,
    /// aI from the off-pair outer peaks.
    pub a_eff: f64,
    pub cos_kctau: f64,
    pub on_pairs: usize,
    pub off_pairs: usize,
}

fn mean_integrals(
    trace: &DetectorTrace,
    pairs: &[PairWindows],
    pick: fn(&PairWindows) -> (usize, usize),
) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in pairs {
        let (a, b) = pick(p);
        let (x, y) = trace.integral(a, b);
        s1 += x;
        s2 += y;
    }
    let n = pairs.len() as f64;
    (s1 / n, s2 / n)
}

/// Pulse-averaged (t, Δφ) of the `on` pairs of `trace`, referenced to the
/// `off` pairs of `reference` (which may be the same trace). Only the
/// contrast is taken from `cal`.
pub fn analyze_pulsed(
    trace: &DetectorTrace,
    on: &[PairWindows],
    reference: &DetectorTrace,
    off: &[PairWindows],
    cal: &Calibration,
) -> Result<PulsedEstimate> {
    if off.is_empty() {
        return Err(Error::Reference("no control-off pulse pairs".into()));
    }
    if on.is_empty() {
        return Err(Error::Argument("no control-on pulse pairs".into()));
    }
    for p in on {
        if p.late.1 > trace.len() {
            return Err(Error::Argument("pair windows exceed the trace".into()));
        }
    }
    for p in off {
        if p.late.1 > reference.len() {
            return Err(Error::Argument("pair windows exceed the reference trace".into()));
        }
    }
    let early = mean_integrals(reference, off, |p| p.early);
    let late = mean_integrals(reference, off, |p| p.late);
    let a_eff = 0.25 * (early.0 + early.1 + late.0 + late.1);
    if !(a_eff > 0.0) {
        return Err(Error::Reference("control-off pairs carry no signal".into()));
    }
    let local = cal.with_a(a_eff);
    // off middle peak: (V1 − V2) integral = 4 aI γ cos kcτ
    let mid_off = mean_integrals(reference, off, |p| p.middle);
    let phase = interferometer_phase(mid_off.0, mid_off.1, &local)?;
    let mid_on = mean_integrals(trace, on, |p| p.middle);
    let mut estimate = invert(mid_on.0, mid_on.1, &local, phase.cos_kctau)?;
    let (s, e) = on[0].middle;
    estimate.window = (trace.times[s], trace.times[e - 1] + trace.sample_period());
    if phase.clamped() {
        estimate.flags.set(super::Flags::COS_CLAMPED);
    }
    Ok(PulsedEstimate {
        estimate,
        a_eff,
        cos_kctau: phase.cos_kctau,
        on_pairs: on.len(),
        off_pairs: off.len(),
    })
}
