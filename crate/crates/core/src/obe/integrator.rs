//! Dormand-Prince 5(4) integrator with step-size control and the standard
//! fourth-order continuous extension for dense output.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: usize = 50_000_000;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

/// Integration statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Coefficients of the continuous extension over one accepted step.
struct Dense<const N: usize> {
    t0: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i]))))
    }
}

#[inline]
fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        let s = h * c;
        for i in 0..N {
            out[i] += s * k[i];
        }
    }
    out
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t1` (t1 > t0).
///
/// `on_step(t, y)` is called after every accepted step; `outputs` are
/// monotonically increasing times in `[t0, t1]` at which `on_output` receives
/// the dense-output state.
#[allow(clippy::too_many_arguments)]
pub fn integrate<const N: usize, F, S, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    tol: Tolerances,
    outputs: &[f64],
    mut on_output: O,
    mut on_step: S,
) -> Result<([f64; N], Stats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: FnMut(f64, &[f64; N]),
    O: FnMut(usize, f64, &[f64; N]),
{
    if !(t1 > t0) {
        return Err(Error::Argument(format!("empty time span [{t0}, {t1}]")));
    }
    let mut stats = Stats::default();
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        on_output(next_out, outputs[next_out], &y0);
        next_out += 1;
    }

    let norm = |err: &[f64; N], a: &[f64; N], b: &[f64; N]| -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = tol.atol + tol.rtol * a[i].abs().max(b[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    };

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);

    // Initial step guess (Hairer, Norsett & Wanner II.4).
    let zero = [0.0; N];
    let d0 = norm(&y, &y, &zero);
    let d1 = norm(&k1, &y, &zero);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * (t1 - t0)
    } else {
        0.01 * d0 / d1
    };
    h = h.min(tol.max_step).min(t1 - t0);
    let y1 = combine(&y, h, &[(1.0, &k1)]);
    let k_probe = f(t + h, &y1);
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = k_probe[i] - k1[i];
    }
    let d2 = norm(&diff, &y, &zero) / h;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h * 1e-3).max(1e-6 * (t1 - t0))
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    h = (100.0 * h).min(h1).min(tol.max_step).min(t1 - t0);

    let mut last_rejected = false;
    loop {
        if stats.accepted + stats.rejected > MAX_STEPS {
            return Err(Error::Integration {
                time: t,
                reason: "maximum number of steps exceeded".into(),
            });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1e-300) || h <= 0.0 {
            return Err(Error::Integration {
                time: t,
                reason: format!("step size underflow (h = {h:e} s)"),
            });
        }
        let final_step = t + h >= t1;
        if final_step {
            h = t1 - t;
        }

        let k2 = f(t + C2 * h, &combine(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if final_step { t1 } else { t + h };
        let k7 = f(t_new, &y_new);

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = norm(&err, &y, &y_new);

        if e <= 1.0 {
            stats.accepted += 1;
            if next_out < outputs.len() && outputs[next_out] <= t_new {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r[0][i] = y[i];
                    r[1][i] = ydiff;
                    r[2][i] = bspl;
                    r[3][i] = ydiff - h * k7[i] - bspl;
                    r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let dense = Dense { t0: t, h, r };
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let ts = outputs[next_out];
                    let ys = if ts >= t_new { y_new } else { dense.eval(ts) };
                    on_output(next_out, ts, &ys);
                    next_out += 1;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            on_step(t, &y);
            if final_step {
                return Ok((y, stats));
            }
            let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(tol.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (0.9 * e.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }
}
