//! TOML experiment description. Every physical key carries its unit in the
//! name; frequencies are ordinary frequencies (GHz, MHz) and are converted
//! to angular units once, here.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::atoms::{velocity_grid, LadderAtom, VapourCell, VelocityGrid};
use crate::constants::hz_to_rad;
use crate::error::{Error, Result};
use crate::interferometer::{CwLayout, InterferometerModel, PulsedLayout};
use crate::obe::PulseShape;
use crate::steadystate::{rabi_from_power, square_pulse_peak_power, FieldConfig, Geometry};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    /// Overrides of the rubidium-87 ladder constants.
    pub gamma_ge_mhz: Option<f64>,
    pub gamma_ed_mhz: Option<f64>,
    pub dephasing_e_mhz: Option<f64>,
    pub dephasing_d_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub temperature_c: f64,
    pub length_cm: f64,
    #[serde(default)]
    pub insertion_loss: f64,
    #[serde(default = "default_classes")]
    pub velocity_classes: usize,
    #[serde(default = "default_span")]
    pub velocity_span_sigma: f64,
}

fn default_classes() -> usize {
    101
}

fn default_span() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    pub delta_c_ghz: f64,
    /// Control Rabi frequency Ω/2π; alternatively give the pulse energy and waist.
    pub control_rabi_ghz: Option<f64>,
    pub control_energy_nj: Option<f64>,
    pub control_waist_um: Option<f64>,
    /// Weak signal Rabi frequency Ω/2π used by the time-resolved solver.
    #[serde(default = "default_signal_rabi")]
    pub signal_rabi_mhz: f64,
    #[serde(default)]
    pub geometry: Geometry,
}

fn default_signal_rabi() -> f64 {
    0.0607
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerSection {
    pub tau_ns: f64,
    #[serde(default = "one")]
    pub a_v: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub kctau0_rad: f64,
    /// Detector bandwidth; omitted means unfiltered.
    pub bandwidth_ghz: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cw,
    Pulsed,
}

/// Where the modulation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Physics {
    /// CW steady-state susceptibility.
    Steady,
    /// Time-resolved Bloch equations.
    Obe,
    /// Fixed (transmission, phase) given in the plan.
    Inject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub mode: Mode,
    #[serde(default = "default_physics")]
    pub physics: Physics,
    pub sample_rate_gsps: f64,
    #[serde(default)]
    pub noise_rms_v: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub obe_tolerance: f64,
    pub pulse_duration_ns: f64,
    #[serde(default = "default_rise")]
    pub rise_time_ns: f64,
    /// Control level per pulse, cycled (1 on, 0 off, between: partial).
    #[serde(default = "default_chop")]
    pub chop_pattern: Vec<f64>,

    // injected modulation (physics = "inject")
    pub inject_transmission: Option<f64>,
    pub inject_dphi_pi: Option<f64>,

    // CW scan
    pub delta_s_start_ghz: Option<f64>,
    pub delta_s_stop_ghz: Option<f64>,
    pub pulses: Option<usize>,
    #[serde(default = "default_spf")]
    pub samples_per_fringe: f64,
    #[serde(default = "default_ref")]
    pub reference_fringes: f64,
    #[serde(default = "default_guard")]
    pub guard_samples: usize,

    // pulsed
    pub signal_delta_s_ghz: Option<f64>,
    pub signal_duration_ns: Option<f64>,
    pub signal_rise_ns: Option<f64>,
    pub pair_period_ns: Option<f64>,
    /// Signal pulse separation; defaults to the arm delay.
    pub separation_ns: Option<f64>,

    // spectrum and operating window
    pub spectrum_start_ghz: Option<f64>,
    pub spectrum_stop_ghz: Option<f64>,
    pub spectrum_points: Option<usize>,
    #[serde(default = "default_roi_t")]
    pub roi_t_min: f64,
    #[serde(default = "default_roi_phi")]
    pub roi_dphi_min_pi: f64,
    #[serde(default = "default_roi_flat")]
    pub roi_flatness_pi: f64,
}

fn default_physics() -> Physics {
    Physics::Steady
}
fn default_tol() -> f64 {
    1e-8
}
fn default_rise() -> f64 {
    0.1
}
fn default_chop() -> Vec<f64> {
    vec![1.0]
}
fn default_spf() -> f64 {
    400.0
}
fn default_ref() -> f64 {
    3.0
}
fn default_guard() -> usize {
    8
}
fn default_roi_t() -> f64 {
    0.9
}
fn default_roi_phi() -> f64 {
    0.9
}
fn default_roi_flat() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    #[default]
    Csv,
    Binary,
    Both,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    #[serde(default)]
    pub trace_format: TraceFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub atom: AtomSection,
    pub cell: CellSection,
    pub fields: FieldsSection,
    pub interferometer: InterferometerSection,
    pub plan: PlanSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn require<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn atom(&self) -> Result<LadderAtom> {
        let mut a = LadderAtom::rubidium87();
        let s = &self.atom;
        if let Some(v) = s.gamma_ge_mhz {
            a.gamma_ge = hz_to_rad(v * 1e6);
        }
        if let Some(v) = s.gamma_ed_mhz {
            a.gamma_ed = hz_to_rad(v * 1e6);
        }
        if let Some(v) = s.dephasing_e_mhz {
            a.dephasing_e = hz_to_rad(v * 1e6);
        }
        if let Some(v) = s.dephasing_d_mhz {
            a.dephasing_d = hz_to_rad(v * 1e6);
        }
        a.validate()?;
        Ok(a)
    }

    pub fn cell(&self) -> Result<VapourCell> {
        VapourCell::at_temperature(
            self.cell.length_cm * 1e-2,
            self.cell.temperature_c + 273.15,
            self.cell.insertion_loss,
        )
    }

    pub fn grid(&self) -> Result<VelocityGrid> {
        let atom = self.atom()?;
        velocity_grid(
            self.cell.temperature_c + 273.15,
            atom.mass,
            self.cell.velocity_classes,
            self.cell.velocity_span_sigma,
        )
    }

    /// Peak control Rabi frequency (rad/s).
    pub fn control_rabi(&self) -> Result<f64> {
        let f = &self.fields;
        match (f.control_rabi_ghz, f.control_energy_nj, f.control_waist_um) {
            (Some(r), None, None) => {
                if !(r >= 0.0) {
                    return Err(Error::Config("control_rabi_ghz must be non-negative".into()));
                }
                Ok(hz_to_rad(r * 1e9))
            }
            (None, Some(e), Some(w)) => {
                let power = square_pulse_peak_power(e * 1e-9, self.plan.pulse_duration_ns * 1e-9)?;
                rabi_from_power(power, w * 1e-6, self.atom()?.dipole_ed)
            }
            _ => Err(Error::Config(
                "give either control_rabi_ghz or both control_energy_nj and control_waist_um".into(),
            )),
        }
    }

    /// Full-level control fields; `delta_s` is set per use.
    pub fn fields(&self) -> Result<FieldConfig> {
        let mut f = FieldConfig::new(0.0, hz_to_rad(self.fields.delta_c_ghz * 1e9), self.control_rabi()?);
        f.rabi_s = hz_to_rad(self.fields.signal_rabi_mhz * 1e6);
        f.geometry = self.fields.geometry;
        f.validate()?;
        Ok(f)
    }

    pub fn model(&self) -> Result<InterferometerModel> {
        let i = &self.interferometer;
        InterferometerModel::new(i.tau_ns * 1e-9, i.a_v, i.gamma, i.kctau0_rad)
    }

    pub fn sample_period(&self) -> Result<f64> {
        if !(self.plan.sample_rate_gsps > 0.0) {
            return Err(Error::Config("sample_rate_gsps must be positive".into()));
        }
        Ok(1e-9 / self.plan.sample_rate_gsps)
    }

    pub fn bandwidth(&self) -> Option<f64> {
        self.interferometer.bandwidth_ghz.map(|b| b * 1e9)
    }

    /// Injected (field transmission, phase) for `physics = "inject"`.
    pub fn injected(&self) -> Result<(f64, f64)> {
        let t = require(self.plan.inject_transmission, "plan.inject_transmission")?;
        let p = require(self.plan.inject_dphi_pi, "plan.inject_dphi_pi")?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config("inject_transmission must lie in [0, 1]".into()));
        }
        Ok((t.sqrt(), p * std::f64::consts::PI))
    }

    pub fn cw_layout(&self) -> Result<CwLayout> {
        let p = &self.plan;
        let layout = CwLayout {
            sample_period: self.sample_period()?,
            tau: self.interferometer.tau_ns * 1e-9,
            delta_s_start: hz_to_rad(require(p.delta_s_start_ghz, "plan.delta_s_start_ghz")? * 1e9),
            delta_s_stop: hz_to_rad(require(p.delta_s_stop_ghz, "plan.delta_s_stop_ghz")? * 1e9),
            n_pulses: require(p.pulses, "plan.pulses")?,
            pulse_duration: p.pulse_duration_ns * 1e-9,
            samples_per_fringe: p.samples_per_fringe,
            reference_fringes: p.reference_fringes,
            guard_samples: p.guard_samples,
            chop_pattern: p.chop_pattern.clone(),
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Reference-only scan with the cell bypassed, used to calibrate γ for
    /// pulsed runs.
    pub fn calibration_layout(&self) -> Result<CwLayout> {
        let layout = CwLayout {
            sample_period: self.sample_period()?,
            tau: self.interferometer.tau_ns * 1e-9,
            delta_s_start: 0.0,
            delta_s_stop: hz_to_rad(1e6),
            n_pulses: 0,
            pulse_duration: self.plan.pulse_duration_ns * 1e-9,
            samples_per_fringe: self.plan.samples_per_fringe,
            reference_fringes: self.plan.reference_fringes,
            guard_samples: self.plan.guard_samples,
            chop_pattern: vec![0.0],
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn pulsed_layout(&self) -> Result<PulsedLayout> {
        let p = &self.plan;
        let tau = self.interferometer.tau_ns * 1e-9;
        let duration = require(p.signal_duration_ns, "plan.signal_duration_ns")? * 1e-9;
        let rise = p.signal_rise_ns.unwrap_or(0.0) * 1e-9;
        let edge = rise / 0.590_334_470_601_733_4;
        let signal = PulseShape::square(edge + 1e-9, duration, 1.0, rise)?;
        let pairs = require(p.pulses, "plan.pulses")?;
        let levels = (0..pairs).map(|k| p.chop_pattern[k % p.chop_pattern.len()]).collect();
        let layout = PulsedLayout {
            sample_period: self.sample_period()?,
            signal,
            separation: p.separation_ns.map_or(tau, |s| s * 1e-9),
            period: require(p.pair_period_ns, "plan.pair_period_ns")? * 1e-9,
            levels,
        };
        layout.validate(&self.model()?)?;
        Ok(layout)
    }

    /// Control pulse aligned with the second signal pulse of a pair.
    pub fn pulsed_control(&self, layout: &PulsedLayout, rabi: f64) -> Result<PulseShape> {
        let p = &self.plan;
        let d = p.pulse_duration_ns * 1e-9;
        let mid = layout.signal.t_start + layout.separation + 0.5 * layout.signal.duration;
        PulseShape::square(mid - 0.5 * d, d, rabi, p.rise_time_ns * 1e-9)
    }

    /// Validates everything the configured mode needs.
    pub fn validate(&self) -> Result<()> {
        self.atom()?;
        self.cell()?;
        self.grid()?;
        self.fields()?;
        self.model()?;
        if self.plan.physics == Physics::Inject {
            self.injected()?;
        }
        match self.plan.mode {
            Mode::Cw => {
                self.cw_layout()?.timeline()?;
            }
            Mode::Pulsed => {
                self.pulsed_layout()?;
            }
        }
        Ok(())
    }
}

/// Sets a dotted key path (e.g. `fields.control_rabi_ghz`) in a parsed
/// config document. The path must already exist or name a known optional key.
pub fn set_path(doc: &mut toml::Value, path: &str, value: f64) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("axis `{path}` must have the form section.key")));
    }
    let table = doc
        .get_mut(parts[0])
        .and_then(|s| s.as_table_mut())
        .ok_or_else(|| Error::Config(format!("unknown section in axis `{path}`")))?;
    let v = match table.get(parts[1]) {
        Some(toml::Value::Integer(_)) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
        Some(toml::Value::Float(_)) | Some(toml::Value::Integer(_)) | None => toml::Value::Float(value),
        Some(_) => return Err(Error::Config(format!("axis `{path}` is not numeric"))),
    };
    let absent = !table.contains_key(parts[1]);
    table.insert(parts[1].to_string(), v);
    let mut checked = Config::from_value(doc.clone());
    // a key missing from the document may be an integer field (seed, pulses)
    if absent && value.fract() == 0.0 && matches!(&checked, Err(Error::Config(m)) if m.contains("expected u")) {
        set_value(doc, parts[0], parts[1], toml::Value::Integer(value as i64));
        checked = Config::from_value(doc.clone());
    }
    // reject keys the schema does not know
    checked.map(|_| ()).map_err(|e| match e {
        Error::Config(m) if m.contains("unknown field") => Error::Config(format!("unknown axis `{path}`: {m}")),
        other => other,
    })
}

fn set_value(doc: &mut toml::Value, section: &str, key: &str, v: toml::Value) {
    if let Some(t) = doc.get_mut(section).and_then(|s| s.as_table_mut()) {
        t.insert(key.to_string(), v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[cell]
temperature_c = 97.6
length_cm = 7.0
insertion_loss = 0.045

[fields]
delta_c_ghz = 1.6
control_rabi_ghz = 2.0

[interferometer]
tau_ns = 5.0

[plan]
mode = "cw"
sample_rate_gsps = 20.0
pulse_duration_ns = 4.0
delta_s_start_ghz = -2.0
delta_s_stop_ghz = 0.0
pulses = 20
"#;

    #[test]
    fn minimal_config_parses_and_converts() {
        let c = Config::from_toml_str(MINIMAL).unwrap();
        c.validate().unwrap();
        let f = c.fields().unwrap();
        assert!((f.delta_c - hz_to_rad(1.6e9)).abs() < 1e-3);
        assert!((f.rabi_c - hz_to_rad(2.0e9)).abs() < 1e-3);
        assert_eq!(c.sample_period().unwrap(), 50e-12);
        assert_eq!(c.cw_layout().unwrap().n_pulses, 20);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("temperature_c = 97.6\n", "");
        match Config::from_toml_str(&text) {
            Err(Error::Config(m)) => assert!(m.contains("temperature_c"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("length_cm = 7.0", "length_cm = 7.0\nlength_m = 0.07");
        assert!(matches!(Config::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn control_from_energy_and_waist() {
        let text = MINIMAL.replace(
            "control_rabi_ghz = 2.0",
            "control_energy_nj = 47.0\ncontrol_waist_um = 230.0",
        );
        let c = Config::from_toml_str(&text).unwrap();
        let r = c.control_rabi().unwrap() / hz_to_rad(1e9);
        assert!(r > 1.0 && r < 10.0, "{r}");
        let both = MINIMAL.replace(
            "control_rabi_ghz = 2.0",
            "control_rabi_ghz = 2.0\ncontrol_energy_nj = 47.0",
        );
        assert!(Config::from_toml_str(&both).unwrap().control_rabi().is_err());
    }

    #[test]
    fn axis_paths() {
        let mut doc: toml::Value = toml::from_str(MINIMAL).unwrap();
        set_path(&mut doc, "fields.control_rabi_ghz", 0.5).unwrap();
        assert_eq!(
            Config::from_value(doc.clone()).unwrap().fields.control_rabi_ghz,
            Some(0.5)
        );
        set_path(&mut doc, "plan.pulses", 4.0).unwrap();
        assert_eq!(Config::from_value(doc.clone()).unwrap().plan.pulses, Some(4));
        assert!(matches!(
            set_path(&mut doc, "fields.nonsense_ghz", 1.0),
            Err(Error::Config(_))
        ));
        assert!(matches!(set_path(&mut doc, "nowhere.x", 1.0), Err(Error::Config(_))));
    }
}
