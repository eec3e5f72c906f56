//! Time-resolved optical Bloch equations of the three-level ladder.
//!
//! Basis order is (g, e, d). The rotating-frame Hamiltonian (hbar = 1) is
//!
//! ```text
//! H = | 0      Ωs/2        0       |
//!     | Ωs/2   Δs          Ωc/2    |
//!     | 0      Ωc/2        Δs + Δc |
//! ```
//!
//! With this sign choice the weak-probe coherence ρ_ge = ⟨g|ρ|e⟩ maps onto the
//! susceptibility as χ = 2 C ρ_ge / Ωs (C from
//! [`susceptibility_scale`](crate::steadystate::susceptibility_scale)), which
//! reproduces [`susceptibility_at_velocity`](crate::steadystate::susceptibility_at_velocity)
//! exactly in the linear limit.
//!
//! Dissipation: spontaneous decay d → e (Γ_ed), e → g (Γ_ge), plus optional
//! pure dephasing of e and d.

pub mod integrator;
pub mod pulse;

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::atoms::{LadderAtom, VapourCell, VelocityGrid};
use crate::error::{Error, Result};
use crate::steadystate::{susceptibility_scale, FieldConfig, OpticalResponse};

pub use integrator::{Stats, Tolerances};
pub use pulse::{PulseKind, PulseShape};

/// Accepted range of the integrator tolerance.
pub const TOLERANCE_RANGE: (f64, f64) = (1e-12, 1e-4);

// Per-step error target relative to the requested tolerance, so that the
// error accumulated over a few hundred steps stays at the level of `tol`.
const LOCAL_TOLERANCE_FACTOR: f64 = 0.05;

/// 3×3 density matrix over (g, e, d).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    rho: Matrix3<Complex64>,
}

impl DensityMatrix {
    /// All population in level `level` (0 = g, 1 = e, 2 = d).
    pub fn pure(level: usize) -> Self {
        let mut rho = Matrix3::zeros();
        rho[(level, level)] = Complex64::new(1.0, 0.0);
        DensityMatrix { rho }
    }

    pub fn ground() -> Self {
        Self::pure(0)
    }

    /// Wraps a matrix without checking the invariants (see [`Self::validate`]).
    pub fn from_matrix(rho: Matrix3<Complex64>) -> Self {
        DensityMatrix { rho }
    }

    pub fn matrix(&self) -> &Matrix3<Complex64> {
        &self.rho
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.rho[(i, j)]
    }

    /// ⟨g|ρ|e⟩, the coherence that carries the signal polarization.
    pub fn rho_ge(&self) -> Complex64 {
        self.rho[(0, 1)]
    }

    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    /// max |ρ - ρ†| over elements.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho - self.rho.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks unit trace and Hermiticity to 1e-10 and positivity to 1e-8.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-10 {
            return Err(Error::Unphysical(format!("density matrix trace is {tr}")));
        }
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::Unphysical(format!("density matrix not Hermitian ({herm:e})")));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::Unphysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Real coordinates (ρgg, ρee, ρdd, Re/Im ρge, Re/Im ρgd, Re/Im ρed).
    /// Uses the upper triangle; Hermiticity is implied.
    fn to_real(self) -> [f64; 9] {
        let m = &self.rho;
        [
            m[(0, 0)].re,
            m[(1, 1)].re,
            m[(2, 2)].re,
            m[(0, 1)].re,
            m[(0, 1)].im,
            m[(0, 2)].re,
            m[(0, 2)].im,
            m[(1, 2)].re,
            m[(1, 2)].im,
        ]
    }

    fn from_real(x: &[f64; 9]) -> Self {
        let c = Complex64::new;
        let ge = c(x[3], x[4]);
        let gd = c(x[5], x[6]);
        let ed = c(x[7], x[8]);
        #[rustfmt::skip]
        let rho = Matrix3::new(
            c(x[0], 0.0), ge,           gd,
            ge.conj(),    c(x[1], 0.0), ed,
            gd.conj(),    ed.conj(),    c(x[2], 0.0),
        );
        DensityMatrix { rho }
    }
}

/// Right-hand side dρ/dt = -i[H, ρ] + L(ρ) for an arbitrary 3×3 matrix.
///
/// Detunings are the velocity-shifted effective values.
pub fn liouvillian_rhs(
    rho: &Matrix3<Complex64>,
    delta_s_eff: f64,
    delta_c_eff: f64,
    omega_s: f64,
    omega_c: f64,
    atom: &LadderAtom,
) -> Matrix3<Complex64> {
    let c = |x: f64| Complex64::new(x, 0.0);
    let hs = c(0.5 * omega_s);
    let hc = c(0.5 * omega_c);
    #[rustfmt::skip]
    let h = Matrix3::new(
        c(0.0), hs,             c(0.0),
        hs,     c(delta_s_eff), hc,
        c(0.0), hc,             c(delta_s_eff + delta_c_eff),
    );
    let mut out = (h * rho - rho * h) * Complex64::new(0.0, -1.0);

    // Amplitude damping: element (i, j) decays at (Γ_i + Γ_j)/2, pure
    // dephasing adds (γ_i + γ_j) off the diagonal.
    let decay = [0.0, 0.5 * atom.gamma_ge, 0.5 * atom.gamma_ed];
    let dephase = [0.0, atom.dephasing_e, atom.dephasing_d];
    for i in 0..3 {
        for j in 0..3 {
            let mut rate = decay[i] + decay[j];
            if i != j {
                rate += dephase[i] + dephase[j];
            }
            out[(i, j)] -= rho[(i, j)] * rate;
        }
    }
    // Cascade feeding d → e → g.
    out[(0, 0)] += rho[(1, 1)] * atom.gamma_ge;
    out[(1, 1)] += rho[(2, 2)] * atom.gamma_ed;
    out
}

/// Time-dependent drive: constant fields, optionally overridden by a control
/// and/or signal pulse envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub fields: FieldConfig,
    pub control: Option<PulseShape>,
    pub signal: Option<PulseShape>,
}

impl Drive {
    pub fn cw(fields: FieldConfig) -> Self {
        Drive {
            fields,
            control: None,
            signal: None,
        }
    }

    pub fn with_control(mut self, pulse: PulseShape) -> Self {
        self.control = Some(pulse);
        self
    }

    pub fn with_signal(mut self, pulse: PulseShape) -> Self {
        self.signal = Some(pulse);
        self
    }

    pub fn rabi_c(&self, t: f64) -> f64 {
        self.control.as_ref().map_or(self.fields.rabi_c, |p| p.rabi_at(t))
    }

    pub fn rabi_s(&self, t: f64) -> f64 {
        self.signal.as_ref().map_or(self.fields.rabi_s, |p| p.rabi_at(t))
    }

    fn max_step(&self, span: f64) -> f64 {
        let mut h = span / 4.0;
        for p in self.control.iter().chain(self.signal.iter()) {
            h = h.min(p.resolution());
        }
        h
    }
}

/// Integration controls for [`evolve_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub tol: f64,
    /// Times (increasing, inside the span) at which dense output is recorded.
    pub output_times: Vec<f64>,
    /// Record the state after every accepted step as well.
    pub record_steps: bool,
    /// Upper bound on the step; defaults to the finest pulse feature.
    pub max_step: Option<f64>,
}

impl EvolveOptions {
    pub fn new(tol: f64) -> Self {
        EvolveOptions {
            tol,
            output_times: Vec::new(),
            record_steps: true,
            max_step: None,
        }
    }

    pub fn sampled(tol: f64, output_times: Vec<f64>) -> Self {
        EvolveOptions {
            tol,
            output_times,
            record_steps: false,
            max_step: None,
        }
    }
}

/// Stored states of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Accepted-step states (if recorded), including the initial one.
    pub steps: Vec<(f64, DensityMatrix)>,
    /// Dense-output states at the requested times.
    pub samples: Vec<(f64, DensityMatrix)>,
    pub final_state: DensityMatrix,
    pub stats: Stats,
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol >= TOLERANCE_RANGE.0 && tol <= TOLERANCE_RANGE.1) {
        return Err(Error::Argument(format!(
            "tolerance {tol:e} outside [{:e}, {:e}]",
            TOLERANCE_RANGE.0, TOLERANCE_RANGE.1
        )));
    }
    Ok(())
}

/// Integrates the master equation for one velocity class, recording every
/// accepted step.
pub fn evolve(
    rho0: &DensityMatrix,
    drive: &Drive,
    atom: &LadderAtom,
    v: f64,
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    evolve_with(rho0, drive, atom, v, t_span, &EvolveOptions::new(tol))
}

/// Integrates the master equation for one velocity class.
pub fn evolve_with(
    rho0: &DensityMatrix,
    drive: &Drive,
    atom: &LadderAtom,
    v: f64,
    t_span: (f64, f64),
    options: &EvolveOptions,
) -> Result<Trajectory> {
    check_tol(options.tol)?;
    rho0.validate()?;
    drive.fields.validate()?;
    let (t0, t1) = t_span;
    if !(t1 > t0) {
        return Err(Error::Argument(format!("empty time span [{t0}, {t1}]")));
    }
    let outs = &options.output_times;
    if outs.windows(2).any(|w| w[1] < w[0]) || outs.iter().any(|&t| t < t0 || t > t1) {
        return Err(Error::Argument(
            "output times must be non-decreasing and inside the time span".into(),
        ));
    }

    let (ds, dc) = drive.fields.effective_detunings(atom, v);
    let rhs = |t: f64, x: &[f64; 9]| -> [f64; 9] {
        let rho = DensityMatrix::from_real(x);
        let d = liouvillian_rhs(&rho.rho, ds, dc, drive.rabi_s(t), drive.rabi_c(t), atom);
        DensityMatrix { rho: d }.to_real()
    };
    let tol = Tolerances {
        rtol: LOCAL_TOLERANCE_FACTOR * options.tol,
        atol: LOCAL_TOLERANCE_FACTOR * options.tol,
        max_step: options.max_step.unwrap_or_else(|| drive.max_step(t1 - t0)),
    };

    let mut steps = Vec::new();
    if options.record_steps {
        steps.push((t0, *rho0));
    }
    let mut samples = vec![(0.0, DensityMatrix::ground()); outs.len()];
    let (y, stats) = integrator::integrate(
        rhs,
        t0,
        t1,
        rho0.to_real(),
        tol,
        outs,
        |i, t, y| samples[i] = (t, DensityMatrix::from_real(y)),
        |t, y| {
            debug_assert!((y[0] + y[1] + y[2] - 1.0).abs() < 1e-9, "trace drift at t = {t}");
            if options.record_steps {
                steps.push((t, DensityMatrix::from_real(y)));
            }
        },
    )?;
    Ok(Trajectory {
        steps,
        samples,
        final_state: DensityMatrix::from_real(&y),
        stats,
    })
}

/// Stationary state of the constant-field master equation for one velocity
/// class, from a direct 9×9 real linear solve with the trace condition
/// replacing the (redundant) ground-population equation.
pub fn steady_state(fields: &FieldConfig, v: f64, atom: &LadderAtom) -> Result<DensityMatrix> {
    fields.validate()?;
    let (ds, dc) = fields.effective_detunings(atom, v);
    let mut m = SMatrix::<f64, 9, 9>::zeros();
    for j in 0..9 {
        let mut e = [0.0; 9];
        e[j] = 1.0;
        let basis = DensityMatrix::from_real(&e).rho;
        let col = DensityMatrix {
            rho: liouvillian_rhs(&basis, ds, dc, fields.rabi_s, fields.rabi_c, atom),
        }
        .to_real();
        for i in 0..9 {
            m[(i, j)] = col[i];
        }
    }
    for j in 0..9 {
        m[(0, j)] = if j < 3 { 1.0 } else { 0.0 };
    }
    let mut b = SVector::<f64, 9>::zeros();
    b[0] = 1.0;

    // Rates span many decades; compare singular values after column scaling.
    let sv = m.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::Singular(format!(
            "steady-state system is rank deficient (condition {:e})",
            smax / smin
        )));
    }
    let x = m
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("steady-state LU solve failed".into()))?;
    let mut arr = [0.0; 9];
    arr.copy_from_slice(x.as_slice());
    Ok(DensityMatrix::from_real(&arr))
}

/// Susceptibility implied by a density matrix in the weak-probe mapping.
pub fn chi_from_rho_ge(rho_ge: Complex64, rabi_s: f64, atom: &LadderAtom, cell: &VapourCell) -> Complex64 {
    rho_ge * (2.0 * susceptibility_scale(atom, cell) / rabi_s)
}

/// Time series produced by [`pulse_response`].
#[derive(Debug, Clone, PartialEq)]
pub struct PulseResponse {
    pub times: Vec<f64>,
    pub chi: Vec<Complex64>,
    /// Phase change relative to the control-off steady state (rad).
    pub dphi: Vec<f64>,
    /// Intensity transmission, insertion loss included.
    pub transmission: Vec<f64>,
    /// Field amplitude transmission exp(-alpha L / 2).
    pub amplitude_t: Vec<f64>,
    /// Control-off steady-state response used as the reference.
    pub off: OpticalResponse,
}

impl PulseResponse {
    /// Amplitude transmission relative to the control-off value.
    pub fn relative_amplitude(&self) -> Vec<f64> {
        self.amplitude_t.iter().map(|t| t / self.off.amplitude_t).collect()
    }
}

/// Doppler-averaged response of the cell to a control pulse.
///
/// Every velocity class starts in its control-off steady state at `times[0]`
/// and is integrated through the pulse; the averaged ρ_ge(t) is mapped to χ(t)
/// and then to phase and transmission. `fields.rabi_c` is ignored (the pulse
/// supplies the control), `fields.rabi_s` must be a positive weak probe.
///
/// The mapping is instantaneous: there is no propagation through the cell.
/// Right after a fast control edge the averaged coherence rings and Im χ can
/// turn negative, which shows up as T(t) > 1 in an optically thick cell.
pub fn pulse_response(
    control: &PulseShape,
    fields: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
    times: &[f64],
    tol: f64,
) -> Result<PulseResponse> {
    control.validate()?;
    check_tol(tol)?;
    if !(fields.rabi_s > 0.0) {
        return Err(Error::Argument(
            "pulse response needs a non-zero weak signal Rabi frequency".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::Argument("velocity grid is empty".into()));
    }
    if times.len() < 2 {
        return Err(Error::Argument("need at least two output times".into()));
    }
    let off_fields = fields.with_rabi_c(0.0);
    let drive = Drive::cw(off_fields).with_control(control.clone());
    let span = (times[0], times[times.len() - 1]);
    let options = EvolveOptions::sampled(tol, times.to_vec());

    let per_class: Vec<(Complex64, Vec<Complex64>)> = grid
        .velocities
        .par_iter()
        .map(|&v| -> Result<(Complex64, Vec<Complex64>)> {
            let rho0 = steady_state(&off_fields, v, atom)?;
            let traj = if control.peak_rabi == 0.0 {
                None
            } else {
                Some(evolve_with(&rho0, &drive, atom, v, span, &options).map_err(|e| e.in_velocity_class(v))?)
            };
            let series = match traj {
                Some(t) => t.samples.iter().map(|(_, r)| r.rho_ge()).collect(),
                None => vec![rho0.rho_ge(); times.len()],
            };
            Ok((rho0.rho_ge(), series))
        })
        .collect::<Result<_>>()?;

    let mut off = Complex64::new(0.0, 0.0);
    let mut avg = vec![Complex64::new(0.0, 0.0); times.len()];
    for ((rho_off, series), w) in per_class.iter().zip(&grid.weights) {
        off += rho_off * w;
        for (a, s) in avg.iter_mut().zip(series) {
            *a += s * w;
        }
    }
    let off = OpticalResponse::from_chi(chi_from_rho_ge(off, fields.rabi_s, atom, cell), atom, cell);
    let mut out = PulseResponse {
        times: times.to_vec(),
        chi: Vec::with_capacity(times.len()),
        dphi: Vec::with_capacity(times.len()),
        transmission: Vec::with_capacity(times.len()),
        amplitude_t: Vec::with_capacity(times.len()),
        off,
    };
    for rho_ge in avg {
        let r = OpticalResponse::from_chi(chi_from_rho_ge(rho_ge, fields.rabi_s, atom, cell), atom, cell);
        out.chi.push(r.chi);
        out.dphi.push(r.phase - off.phase);
        out.transmission.push(r.transmission);
        out.amplitude_t.push(r.amplitude_t);
    }
    Ok(out)
}
