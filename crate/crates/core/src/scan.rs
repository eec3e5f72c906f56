//! End-to-end virtual experiments: physics → detector trace → analysis,
//! with the ground truth carried alongside every recovered value.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    analyze_cw, analyze_pulsed, calibrate, classify_pairs, fringe_phase, wrap, Calibration, CwAnalysis, CwOptions,
    Flags, PairClasses, PulsedEstimate,
};
use crate::atoms::{LadderAtom, VapourCell, VelocityGrid};
use crate::config::{set_path, Config, Mode, Physics};
use crate::constants::{hz_to_rad, rad_to_hz};
use crate::error::{Error, Result};
use crate::interferometer::{
    forward_pulsed, synth_trace_cw, CwPhysics, CwTimeline, DetectorTrace, Modulation, SteadyPhysics, LEVEL_ON,
};
use crate::obe::{pulse_response, PulseShape};
use crate::steadystate::{find_roi, spectrum_scan, DetuningRange, FieldConfig, RoiWindow, SpectrumRow};

/// Unit transmission everywhere: the cell is bypassed.
pub struct Bypass;

impl CwPhysics for Bypass {
    fn off(&self, _: f64) -> Result<Complex64> {
        Ok(Complex64::new(1.0, 0.0))
    }

    fn on(&self, _: f64, _: f64, samples: usize) -> Result<Vec<Complex64>> {
        Ok(vec![Complex64::new(1.0, 0.0); samples])
    }
}

/// Steady-state cell with a fixed control-induced factor laid on top.
pub struct InjectedPhysics {
    pub base: SteadyPhysics,
    pub modulation: Complex64,
}

impl CwPhysics for InjectedPhysics {
    fn off(&self, delta_s: f64) -> Result<Complex64> {
        self.base.off(delta_s)
    }

    fn on(&self, delta_s: f64, level: f64, samples: usize) -> Result<Vec<Complex64>> {
        let m = Complex64::from_polar(self.modulation.norm().powf(level), self.modulation.arg() * level);
        Ok(vec![self.base.off(delta_s)? * m; samples])
    }
}

/// Time-resolved response: every control pulse is integrated through the
/// Bloch equations from the control-off steady state.
pub struct ObePhysics {
    pub base: SteadyPhysics,
    pub sample_period: f64,
    pub rise_time: f64,
    pub tolerance: f64,
}

impl ObePhysics {
    /// Relative field factor per sample of a square control whose half-amplitude
    /// points fall on the edges of the sample window.
    pub fn relative(&self, delta_s: f64, level: f64, samples: usize) -> Result<Vec<Complex64>> {
        let dt = self.sample_period;
        let rabi = self.base.fields.rabi_c * level.sqrt();
        let control = PulseShape::square(0.0, samples as f64 * dt, rabi, self.rise_time)?;
        let lead = control.support().0.min(-dt);
        let mut times = Vec::with_capacity(samples + 1);
        times.push(lead);
        times.extend((0..samples).map(|j| (j as f64 + 0.5) * dt));
        let fields = self.base.fields.with_delta_s(delta_s);
        let r = pulse_response(
            &control,
            &fields,
            &self.base.atom,
            &self.base.cell,
            &self.base.grid,
            &times,
            self.tolerance,
        )?;
        let amp = r.relative_amplitude();
        Ok(amp[1..]
            .iter()
            .zip(&r.dphi[1..])
            .map(|(a, p)| Complex64::from_polar(*a, *p))
            .collect())
    }
}

impl CwPhysics for ObePhysics {
    fn off(&self, delta_s: f64) -> Result<Complex64> {
        self.base.off(delta_s)
    }

    fn on(&self, delta_s: f64, level: f64, samples: usize) -> Result<Vec<Complex64>> {
        let off = self.base.off(delta_s)?;
        Ok(self
            .relative(delta_s, level, samples)?
            .into_iter()
            .map(|m| off * m)
            .collect())
    }
}

fn steady(cfg: &Config) -> Result<SteadyPhysics> {
    Ok(SteadyPhysics {
        atom: cfg.atom()?,
        cell: cfg.cell()?,
        grid: cfg.grid()?,
        fields: cfg.fields()?,
    })
}

fn physics(cfg: &Config) -> Result<Box<dyn CwPhysics>> {
    let base = steady(cfg)?;
    Ok(match cfg.plan.physics {
        Physics::Steady => Box::new(base),
        Physics::Inject => {
            let (t, p) = cfg.injected()?;
            Box::new(InjectedPhysics {
                base,
                modulation: Complex64::from_polar(t, p),
            })
        }
        Physics::Obe => Box::new(ObePhysics {
            base,
            sample_period: cfg.sample_period()?,
            rise_time: cfg.plan.rise_time_ns * 1e-9,
            tolerance: cfg.plan.obe_tolerance,
        }),
    })
}

/// Truth and recovered values for one control pulse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CwRow {
    pub window_start_s: f64,
    pub delta_s_ghz: f64,
    pub level: f64,
    pub true_transmission: f64,
    pub true_transmission_off: f64,
    pub true_dphi_rad: f64,
    pub transmission: f64,
    pub transmission_off: f64,
    pub dphi_rad: f64,
    pub dphi_alt_rad: Option<f64>,
    /// Absolute error in T (on).
    pub error_t: f64,
    /// Phase error, wrapped; the alternative branch counts when it is closer.
    pub error_dphi: f64,
    pub flags: Flags,
}

impl CwRow {
    /// Whether the window enters error statistics and sweep means.
    pub fn compared(&self) -> bool {
        !self.flags.has(Flags::NO_PHASE) && !self.flags.has(Flags::SUM_RULE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CwRunSummary {
    pub pulses: usize,
    pub compared: usize,
    /// Compared windows whose fringe term is too weak to carry a phase.
    pub no_phase: usize,
    pub max_error_t: f64,
    pub max_error_dphi: f64,
    pub absorption_minimum_ghz: Option<f64>,
    pub seed: u64,
    pub noise_rms_v: f64,
    pub calibration: Calibration,
    pub analysis: crate::analysis::CwSummary,
}

pub struct CwRun {
    pub timeline: CwTimeline,
    pub trace: DetectorTrace,
    pub analysis: CwAnalysis,
    pub rows: Vec<CwRow>,
    pub summary: CwRunSummary,
}

/// True (T_on, T_off, Δφ) of a control pulse as the analysis sees it: the
/// window mean of the field factor relative to the control-off field.
fn cw_truth(phys: &dyn CwPhysics, ds: f64, level: f64, samples: usize) -> Result<(f64, f64, f64)> {
    let off = phys.off(ds)?;
    let on = phys.on(ds, level, samples)?;
    let n = on.len() as f64;
    let power = on.iter().map(|m| m.norm_sqr()).sum::<f64>() / n;
    let mean = on.iter().map(|m| m / off).sum::<Complex64>() / n;
    Ok((power, off.norm_sqr(), mean.arg()))
}

/// Analysis options for a trace laid out by `timeline`: the kcτ track is
/// anchored on the fringe phase of the reference segment and follows the
/// scan's detuning axis.
pub fn cw_options(trace: &DetectorTrace, timeline: &CwTimeline, tau: f64) -> Result<CwOptions> {
    if trace.len() != timeline.len() {
        return Err(Error::Config(format!(
            "trace has {} samples but the plan lays out {}",
            trace.len(),
            timeline.len()
        )));
    }
    let (r0, _) = timeline.reference;
    let psi = fringe_phase(trace, timeline.reference, timeline.fringe_period_samples)?;
    let ds0 = timeline.delta_s[r0];
    let track = timeline.delta_s.iter().map(|ds| psi + (ds - ds0) * tau).collect();
    Ok(CwOptions::new(timeline.tau_samples).with_kctau_track(track))
}

pub fn run_virtual_cw(cfg: &Config) -> Result<CwRun> {
    if cfg.plan.mode != Mode::Cw {
        return Err(Error::Config("plan.mode must be \"cw\"".into()));
    }
    let model = cfg.model()?;
    let timeline = cfg.cw_layout()?.timeline()?;
    let phys = physics(cfg)?;
    let seed = cfg.plan.seed;
    let trace = synth_trace_cw(
        &timeline,
        phys.as_ref(),
        &model,
        cfg.bandwidth(),
        cfg.plan.noise_rms_v,
        seed,
    )?;
    let cal = calibrate(&trace, &[timeline.reference], Some(timeline.fringe_period_samples))?;
    let mut analysis = analyze_cw(&trace, &cal, &cw_options(&trace, &timeline, model.tau)?)?;
    analysis.locate_absorption(
        &trace,
        timeline.reference.1,
        trace.len(),
        timeline.fringe_period_samples,
    );

    let dt = timeline.sample_period;
    let mut rows = Vec::new();
    for p in timeline.pulses.iter().filter(|p| p.level >= LEVEL_ON) {
        let Some(r) = analysis
            .rows
            .iter()
            .find(|r| (r.window_start_s / dt).round() as usize == p.start)
        else {
            continue;
        };
        let (t_on, t_off, dphi) = cw_truth(phys.as_ref(), p.delta_s, p.level, p.end - p.start)?;
        let mut err_phi = wrap(r.dphi_rad - dphi).abs();
        if let Some(alt) = r.dphi_alt_rad {
            err_phi = err_phi.min(wrap(alt - dphi).abs());
        }
        rows.push(CwRow {
            window_start_s: r.window_start_s,
            delta_s_ghz: rad_to_hz(p.delta_s) * 1e-9,
            level: p.level,
            true_transmission: t_on,
            true_transmission_off: t_off,
            true_dphi_rad: dphi,
            transmission: r.transmission,
            transmission_off: r.transmission_off,
            dphi_rad: r.dphi_rad,
            dphi_alt_rad: r.dphi_alt_rad,
            error_t: (r.transmission - t_on).abs(),
            error_dphi: err_phi,
            flags: r.flags,
        });
    }
    // windows without an observable phase, or whose voltages break the sum
    // rule, are counted (here and in the analysis summary), not compared
    let fold = |f: fn(&CwRow) -> f64| {
        rows.iter()
            .filter(|r| r.compared())
            .map(f)
            .fold(0.0, |m: f64, x| if x.is_nan() { f64::NAN } else { m.max(x) })
    };
    let no_phase = rows.iter().filter(|r| r.flags.has(Flags::NO_PHASE)).count();
    let absorption_minimum_ghz = analysis
        .summary
        .absorption_minimum_s
        .map(|t| rad_to_hz(timeline.delta_s[((t / dt).round() as usize).min(timeline.len() - 1)]) * 1e-9);
    let summary = CwRunSummary {
        pulses: timeline.pulses.len(),
        compared: rows.len(),
        no_phase,
        max_error_t: fold(|r| r.error_t),
        max_error_dphi: fold(|r| r.error_dphi),
        absorption_minimum_ghz,
        seed,
        noise_rms_v: cfg.plan.noise_rms_v,
        calibration: cal,
        analysis: analysis.summary.clone(),
    };
    Ok(CwRun {
        timeline,
        trace,
        analysis,
        rows,
        summary,
    })
}

/// Reference-only CW trace with the cell bypassed, sharing the plan's
/// interferometer, sampling and detector. Used to calibrate γ.
pub fn calibration_trace(cfg: &Config) -> Result<(DetectorTrace, Calibration)> {
    let model = cfg.model()?;
    let layout = cfg.calibration_layout()?;
    let timeline = layout.timeline()?;
    let seed = cfg.plan.seed.wrapping_add(1);
    let trace = synth_trace_cw(&timeline, &Bypass, &model, cfg.bandwidth(), cfg.plan.noise_rms_v, seed)?;
    let cal = calibrate(&trace, &[timeline.reference], Some(timeline.fringe_period_samples))?;
    Ok((trace, cal))
}

/// Control-induced modulation of the second signal pulse.
pub fn pulsed_modulation(cfg: &Config) -> Result<Modulation> {
    match cfg.plan.physics {
        Physics::Inject => {
            let (t, p) = cfg.injected()?;
            Ok(Modulation::Uniform { t_amp: t, dphi: p })
        }
        Physics::Steady => {
            let base = steady(cfg)?;
            let ds = hz_to_rad(signal_detuning(cfg)? * 1e9);
            let m = base.on(ds, 1.0, 1)?[0] / base.off(ds)?;
            Ok(Modulation::Uniform {
                t_amp: m.norm(),
                dphi: m.arg(),
            })
        }
        Physics::Obe => {
            let base = steady(cfg)?;
            let layout = cfg.pulsed_layout()?;
            let control = cfg.pulsed_control(&layout, base.fields.rabi_c)?;
            let t0 = layout.signal.t_start + layout.separation;
            let (lo, hi) = control.support();
            let (lo, hi) = (lo.min(t0 - 1e-12), hi.max(t0 + layout.signal.duration));
            let n = ((hi - lo) / layout.sample_period).ceil() as usize + 1;
            let times: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
            let fields = base.fields.with_delta_s(hz_to_rad(signal_detuning(cfg)? * 1e9));
            let r = pulse_response(
                &control,
                &fields,
                &base.atom,
                &base.cell,
                &base.grid,
                &times,
                cfg.plan.obe_tolerance,
            )?;
            Ok(Modulation::Series {
                times: times.iter().map(|t| t - t0).collect(),
                t_amp: r.relative_amplitude(),
                dphi: r.dphi,
            })
        }
    }
}

fn signal_detuning(cfg: &Config) -> Result<f64> {
    cfg.plan
        .signal_delta_s_ghz
        .ok_or_else(|| Error::Config("missing required key `plan.signal_delta_s_ghz`".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulsedRunSummary {
    pub true_transmission: f64,
    pub true_dphi_rad: f64,
    pub transmission: f64,
    pub dphi_rad: f64,
    pub dphi_over_pi: f64,
    pub dphi_alt_rad: Option<f64>,
    pub error_t: f64,
    pub error_dphi: f64,
    pub a_eff: f64,
    pub cos_kctau: f64,
    pub on_pairs: usize,
    pub off_pairs: usize,
    pub partial_pairs: usize,
    pub flags: Flags,
    pub seed: u64,
    pub noise_rms_v: f64,
    pub calibration: Calibration,
}

pub struct PulsedRun {
    pub trace: DetectorTrace,
    pub calibration_trace: DetectorTrace,
    pub modulation: Modulation,
    pub classes: PairClasses,
    pub estimate: PulsedEstimate,
    pub summary: PulsedRunSummary,
}

/// Intensity-weighted truth over the second pulse: T = ⟨|M|²⟩, Δφ = arg⟨M⟩.
fn pulsed_truth(modulation: &Modulation, signal: &PulseShape) -> (f64, f64) {
    match modulation {
        Modulation::Uniform { t_amp, dphi } => (t_amp * t_amp, *dphi),
        Modulation::Series { .. } => {
            let (lo, hi) = signal.support();
            let n = 2000;
            let (mut w, mut p, mut m) = (0.0, 0.0, Complex64::new(0.0, 0.0));
            for j in 0..n {
                let t = lo + (hi - lo) * (j as f64 + 0.5) / n as f64;
                let e2 = signal.envelope(t).powi(2);
                let f = modulation.at(t - signal.t_start);
                w += e2;
                p += e2 * f.norm_sqr();
                m += f * e2;
            }
            (p / w, m.arg())
        }
    }
}

pub fn run_virtual_pulsed(cfg: &Config) -> Result<PulsedRun> {
    if cfg.plan.mode != Mode::Pulsed {
        return Err(Error::Config("plan.mode must be \"pulsed\"".into()));
    }
    let model = cfg.model()?;
    let layout = cfg.pulsed_layout()?;
    let modulation = pulsed_modulation(cfg)?;
    let (calibration_trace, cal) = calibration_trace(cfg)?;
    let seed = cfg.plan.seed;
    let trace = forward_pulsed(
        &layout,
        &modulation,
        &model,
        cfg.bandwidth(),
        cfg.plan.noise_rms_v,
        seed,
    )?;
    let classes = classify_pairs(&trace, &layout.pairs(model.tau))?;
    let estimate = analyze_pulsed(&trace, &classes.on, &trace, &classes.off, &cal)?;
    let (t_true, phi_true) = pulsed_truth(&modulation, &layout.signal);
    let e = &estimate.estimate;
    // a single pulse-averaged reading yields |Δφ| (see `invert`)
    let err = |x: f64| wrap(x - phi_true).abs().min(wrap(x + phi_true).abs());
    let err_phi = e.dphi_alt.map_or(err(e.dphi), |alt| err(e.dphi).min(err(alt)));
    let summary = PulsedRunSummary {
        true_transmission: t_true,
        true_dphi_rad: phi_true,
        transmission: e.transmission,
        dphi_rad: e.dphi,
        dphi_over_pi: e.dphi / std::f64::consts::PI,
        dphi_alt_rad: e.dphi_alt,
        error_t: (e.transmission - t_true).abs(),
        error_dphi: err_phi,
        a_eff: estimate.a_eff,
        cos_kctau: estimate.cos_kctau,
        on_pairs: classes.on.len(),
        off_pairs: classes.off.len(),
        partial_pairs: classes.partial.len(),
        flags: e.flags,
        seed,
        noise_rms_v: cfg.plan.noise_rms_v,
        calibration: cal,
    };
    Ok(PulsedRun {
        trace,
        calibration_trace,
        modulation,
        classes,
        estimate,
        summary,
    })
}

pub struct SpectrumRun {
    pub rows: Vec<SpectrumRow>,
    pub roi: Vec<RoiWindow>,
}

/// Control-on/off spectrum over the plan's range (or the given override, GHz)
/// and the operating windows in it.
pub fn run_spectrum(cfg: &Config, range_ghz: Option<(f64, f64, usize)>) -> Result<SpectrumRun> {
    let p = &cfg.plan;
    let (start, stop, points) = match range_ghz {
        Some(r) => r,
        None => (
            p.spectrum_start_ghz
                .ok_or_else(|| Error::Config("missing required key `plan.spectrum_start_ghz`".into()))?,
            p.spectrum_stop_ghz
                .ok_or_else(|| Error::Config("missing required key `plan.spectrum_stop_ghz`".into()))?,
            p.spectrum_points
                .ok_or_else(|| Error::Config("missing required key `plan.spectrum_points`".into()))?,
        ),
    };
    if !(stop > start) || points < 2 {
        return Err(Error::Config(
            "spectrum range needs stop > start and at least 2 points".into(),
        ));
    }
    let range = DetuningRange::new(hz_to_rad(start * 1e9), hz_to_rad(stop * 1e9), points);
    let on = cfg.fields()?;
    let off = on.with_rabi_c(0.0);
    let rows = spectrum_scan(&range, &on, &off, &cfg.atom()?, &cfg.cell()?, &cfg.grid()?)?;
    let pi = std::f64::consts::PI;
    let roi = find_roi(&rows, p.roi_t_min, p.roi_dphi_min_pi * pi, p.roi_flatness_pi * pi);
    Ok(SpectrumRun { rows, roi })
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Windows with an observable phase (CW) or 1 (pulsed) entering the means.
    pub windows: usize,
    pub mean_transmission: f64,
    pub mean_dphi_rad: f64,
    pub max_error_t: f64,
    pub max_error_dphi: f64,
}

fn run_point(cfg: &Config, value: f64) -> Result<SweepRow> {
    match cfg.plan.mode {
        Mode::Cw => {
            let run = run_virtual_cw(cfg)?;
            let rows: Vec<&CwRow> = run.rows.iter().filter(|r| r.compared()).collect();
            let n = rows.len();
            let mean = |f: fn(&CwRow) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    rows.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            Ok(SweepRow {
                value,
                windows: n,
                mean_transmission: mean(|r| r.transmission),
                mean_dphi_rad: mean(|r| r.dphi_rad),
                max_error_t: run.summary.max_error_t,
                max_error_dphi: run.summary.max_error_dphi,
            })
        }
        Mode::Pulsed => {
            let s = run_virtual_pulsed(cfg)?.summary;
            Ok(SweepRow {
                value,
                windows: 1,
                mean_transmission: s.transmission,
                mean_dphi_rad: s.dphi_rad,
                max_error_t: s.error_t,
                max_error_dphi: s.error_dphi,
            })
        }
    }
}

/// Runs the plan once per value of the dotted config key `axis`. Points are
/// independent and run concurrently; rows come back in the order of `values`.
pub fn sweep(doc: &toml::Value, axis: &str, values: &[f64]) -> Result<Vec<SweepRow>> {
    let configs: Vec<Config> = values
        .iter()
        .map(|&v| {
            let mut d = doc.clone();
            set_path(&mut d, axis, v)?;
            let c = Config::from_value(d)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(c, &v)| run_point(c, v))
        .collect()
}

/// Steady-state field factor relative to control off, for direct checks.
pub fn steady_modulation(
    fields: &FieldConfig,
    atom: &LadderAtom,
    cell: &VapourCell,
    grid: &VelocityGrid,
    delta_s: f64,
) -> Result<Complex64> {
    let base = SteadyPhysics {
        atom: *atom,
        cell: *cell,
        grid: grid.clone(),
        fields: *fields,
    };
    Ok(base.on(delta_s, 1.0, 1)?[0] / base.off(delta_s)?)
}
