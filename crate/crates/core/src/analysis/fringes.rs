//! Fringe extrema, fringe-period estimation and the band-stop used to find
//! the single-photon absorption minimum in a channel sum.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::interferometer::DetectorTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub kind: ExtremumKind,
    pub prominence: f64,
}

// Local maxima (first sample of a flat top) and their topographic prominence.
fn maxima(y: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let peak = y[i];
                let mut left = peak;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if y[k] > peak {
                        break;
                    }
                    left = left.min(y[k]);
                }
                let mut right = peak;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if y[k] > peak {
                        break;
                    }
                    right = right.min(y[k]);
                }
                let prom = peak - left.max(right);
                if prom >= min_prominence && prom > 0.0 {
                    out.push((i, prom));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Local extrema of `y` whose prominence is at least `min_prominence`,
/// ordered by index. Flat extrema are reported at their first sample.
pub fn find_extrema(y: &[f64], min_prominence: f64) -> Vec<Extremum> {
    let neg: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut out: Vec<Extremum> = maxima(y, min_prominence)
        .into_iter()
        .map(|(index, prominence)| Extremum {
            index,
            kind: ExtremumKind::Max,
            prominence,
        })
        .chain(
            maxima(&neg, min_prominence)
                .into_iter()
                .map(|(index, prominence)| Extremum {
                    index,
                    kind: ExtremumKind::Min,
                    prominence,
                }),
        )
        .collect();
    out.sort_by_key(|e| e.index);
    out
}

/// Extrema of the fringe signal V1 − V2.
pub fn find_fringe_extrema(trace: &DetectorTrace, min_prominence: f64) -> Vec<Extremum> {
    let d: Vec<f64> = trace.v1.iter().zip(&trace.v2).map(|(a, b)| a - b).collect();
    find_extrema(&d, min_prominence)
}

/// Fringe period in samples from the spacing of well-separated maxima
/// (least-squares slope of index against fringe number).
pub fn estimate_fringe_period(y: &[f64]) -> Option<f64> {
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return None;
    }
    let peaks: Vec<f64> = maxima(y, 0.5 * (hi - lo)).iter().map(|p| p.0 as f64).collect();
    if peaks.len() < 2 {
        return None;
    }
    let n = peaks.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = peaks.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, p) in peaks.iter().enumerate() {
        sxy += (k as f64 - mx) * (p - my);
        sxx += (k as f64 - mx).powi(2);
    }
    Some(sxy / sxx)
}

/// Zero-phase second-order notch (RBJ biquad run forward and backward) at
/// `period` samples per cycle with quality factor `q`.
pub fn band_stop(x: &[f64], period: f64, q: f64) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let w0 = 2.0 * PI / period;
    let alpha = w0.sin() / (2.0 * q);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    let b = [1.0 / a0, -2.0 * cw / a0, 1.0 / a0];
    let a = [-2.0 * cw / a0, (1.0 - alpha) / a0];
    let pass = |input: &mut Vec<f64>| {
        // start from the steady state of a constant input (unit DC gain)
        let x0 = input[0];
        let (mut x1, mut x2, mut y1, mut y2) = (x0, x0, x0, x0);
        for v in input.iter_mut() {
            let y = b[0] * *v + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    };
    let mut y = x.to_vec();
    pass(&mut y);
    y.reverse();
    pass(&mut y);
    y.reverse();
    y
}

/// Index of the deepest point of the band-stopped channel sum within
/// [start, end): the single-photon absorption minimum, used only to label
/// the detuning axis.
pub fn locate_absorption_minimum(trace: &DetectorTrace, start: usize, end: usize, fringe_period: f64) -> Option<usize> {
    let end = end.min(trace.len());
    if start >= end {
        return None;
    }
    let sum: Vec<f64> = (start..end).map(|i| trace.v1[i] + trace.v2[i]).collect();
    let filtered = band_stop(&sum, fringe_period, 0.7);
    filtered
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| start + i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn sine(n: usize, period: f64, amp: f64, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * i as f64 / period + phase).cos())
            .collect()
    }

    #[test]
    fn pure_sinusoid_extrema() {
        // ten periods from crest to crest; the end crests are not local extrema
        let y = sine(1001, 100.0, 1.0, 0.0);
        let ex = find_extrema(&y, 1.0);
        let maxes = ex.iter().filter(|e| e.kind == ExtremumKind::Max).count();
        let mins = ex.len() - maxes;
        assert_eq!((maxes, mins), (9, 10));
        for e in &ex {
            let want = if e.kind == ExtremumKind::Max { 1.0 } else { -1.0 };
            assert!((y[e.index] - want).abs() < 2e-3);
        }
    }

    #[test]
    fn noisy_sinusoid_keeps_count() {
        let clean = sine(2000, 100.0, 1.0, 0.3);
        let expected = find_extrema(&clean, 0.5).len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0 / 20.0).unwrap();
        let noisy: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
        assert_eq!(find_extrema(&noisy, 0.5).len(), expected);
    }

    #[test]
    fn constant_and_plateau() {
        assert!(find_extrema(&[2.0; 50], 0.0).is_empty());
        let y = [0.0, 1.0, 3.0, 3.0, 3.0, 1.0, 0.0];
        let ex = find_extrema(&y, 0.5);
        assert_eq!(ex.len(), 1);
        assert_eq!(ex[0].index, 2);
    }

    #[test]
    fn period_estimate() {
        let y = sine(5000, 123.4, 1.0, 0.1);
        let p = estimate_fringe_period(&y).unwrap();
        assert!((p - 123.4).abs() < 0.05, "{p}");
        assert!(estimate_fringe_period(&[1.0; 10]).is_none());
    }

    #[test]
    fn notch_removes_fringe_and_keeps_dip() {
        let n = 4000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let d = (i as f64 - 2600.0) / 150.0;
                4.0 - 1.5 / (1.0 + d * d) + 0.4 * (2.0 * PI * i as f64 / 50.0).sin()
            })
            .collect();
        let y = band_stop(&x, 50.0, 0.7);
        let ripple = (1000..1400).map(|i| y[i]).fold(f64::NEG_INFINITY, f64::max)
            - (1000..1400).map(|i| y[i]).fold(f64::INFINITY, f64::min);
        assert!(ripple < 0.05, "{ripple}");
        let imin = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((imin as i64 - 2600).abs() < 10, "{imin}");
    }
}
