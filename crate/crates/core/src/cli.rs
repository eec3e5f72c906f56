//! File-driven front-end: `spectrum`, `simulate`, `analyze` and `sweep`.
//!
//! Every subcommand parses the config, calls the library operation and
//! writes its result; nothing is computed here.
//!
//! Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O or format error.

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{analyze_cw, analyze_pulsed, calibrate, classify_pairs, write_results_file, CwAnalysis};
use crate::config::{Config, Mode, TraceFormat};
use crate::constants::rad_to_hz;
use crate::error::{Error, Result};
use crate::interferometer::trace_io::{read_trace, write_binary, write_csv};
use crate::interferometer::DetectorTrace;
use crate::scan::{self, CwRow, PulsedRunSummary, SpectrumRun, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Argument(_) | Error::Domain { .. } => EXIT_CONFIG,
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ladder-phase",
    version,
    about = "Control-induced phase modulation in a ladder vapour: spectra, virtual experiments, trace analysis"
)]
pub struct Cli {
    /// Experiment description (TOML).
    #[arg(long, global = true, default_value = "ladder-phase.toml")]
    pub config: PathBuf,
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Overrides plan.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cw,
    Pulsed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Control-on/off transmission and phase spectrum plus operating windows.
    Spectrum {
        #[arg(long, allow_hyphen_values = true)]
        delta_s_start: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        delta_s_stop: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// CSV path; roi.json is written next to it.
        #[arg(long, default_value = "spectrum.csv")]
        out: PathBuf,
    },
    /// Virtual experiment: trace, recovered values and ground truth.
    Simulate {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Analyze a stored trace (CSV or binary).
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        /// Bypassed-cell calibration trace (required in pulsed mode).
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Results CSV; a summary JSON is written next to it.
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
    /// Repeat the configured experiment over values of one config key.
    Sweep {
        /// Dotted key, e.g. fields.control_rabi_ghz.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| io_err(path, e))?;
    writeln!(f).map_err(|e| io_err(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| io_err(path, e)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_spectrum(run: &SpectrumRun, out: &Path) -> Result<PathBuf> {
    let mut w = csv_writer(out)?;
    let e = csv_err(out);
    w.write_record(["delta_s_ghz", "t_on", "t_off", "dphi_rad", "dphi_over_pi"])
        .map_err(&e)?;
    for r in &run.rows {
        w.write_record([
            (rad_to_hz(r.delta_s) * 1e-9).to_string(),
            r.t_on.to_string(),
            r.t_off.to_string(),
            r.dphi.to_string(),
            (r.dphi / std::f64::consts::PI).to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|x| io_err(out, x))?;
    #[derive(Serialize)]
    struct Roi {
        first: usize,
        last: usize,
        delta_s_start_ghz: f64,
        delta_s_stop_ghz: f64,
        min_t_on: f64,
        min_t_off: f64,
        mean_dphi_rad: f64,
        dphi_spread_rad: f64,
    }
    let roi: Vec<Roi> = run
        .roi
        .iter()
        .map(|r| Roi {
            first: r.first,
            last: r.last,
            delta_s_start_ghz: rad_to_hz(r.delta_s_start) * 1e-9,
            delta_s_stop_ghz: rad_to_hz(r.delta_s_stop) * 1e-9,
            min_t_on: r.min_t_on,
            min_t_off: r.min_t_off,
            mean_dphi_rad: r.mean_dphi,
            dphi_spread_rad: r.dphi_spread,
        })
        .collect();
    let roi_path = out.with_file_name("roi.json");
    write_json(&roi, &roi_path)?;
    Ok(roi_path)
}

pub fn cmd_spectrum(cfg: &Config, range_ghz: Option<(f64, f64, usize)>, out: &Path) -> Result<SpectrumRun> {
    let run = scan::run_spectrum(cfg, range_ghz)?;
    write_spectrum(&run, out)?;
    Ok(run)
}

fn write_trace(trace: &DetectorTrace, dir: &Path, stem: &str, format: TraceFormat) -> Result<()> {
    if matches!(format, TraceFormat::Csv | TraceFormat::Both) {
        write_csv(trace, &dir.join(format!("{stem}.csv")))?;
    }
    if matches!(format, TraceFormat::Binary | TraceFormat::Both) {
        write_binary(trace, &dir.join(format!("{stem}.bin")))?;
    }
    Ok(())
}

fn write_cw_truth(rows: &[CwRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record([
        "window_start_s",
        "delta_s_ghz",
        "level",
        "true_transmission",
        "true_transmission_off",
        "true_dphi_rad",
        "transmission",
        "transmission_off",
        "dphi_rad",
        "dphi_alt_rad",
        "error_t",
        "error_dphi_rad",
        "flags",
    ])
    .map_err(&e)?;
    for r in rows {
        w.write_record([
            r.window_start_s.to_string(),
            r.delta_s_ghz.to_string(),
            r.level.to_string(),
            r.true_transmission.to_string(),
            r.true_transmission_off.to_string(),
            r.true_dphi_rad.to_string(),
            r.transmission.to_string(),
            r.transmission_off.to_string(),
            r.dphi_rad.to_string(),
            opt(r.dphi_alt_rad),
            r.error_t.to_string(),
            r.error_dphi.to_string(),
            r.flags.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|x| io_err(path, x))
}

/// One-row results table of a pulsed analysis.
pub fn write_pulsed_results(est: &crate::analysis::PulsedEstimate, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    let m = &est.estimate;
    w.write_record([
        "transmission",
        "t_amp",
        "dphi_rad",
        "dphi_over_pi",
        "dphi_alt_rad",
        "a_eff_Vs",
        "cos_kctau",
        "on_pairs",
        "off_pairs",
        "residual_V",
        "flags",
    ])
    .map_err(&e)?;
    w.write_record([
        m.transmission.to_string(),
        m.t_amp.to_string(),
        m.dphi.to_string(),
        (m.dphi / std::f64::consts::PI).to_string(),
        opt(m.dphi_alt),
        est.a_eff.to_string(),
        est.cos_kctau.to_string(),
        est.on_pairs.to_string(),
        est.off_pairs.to_string(),
        m.residual.to_string(),
        m.flags.to_string(),
    ])
    .map_err(&e)?;
    w.flush().map_err(|x| io_err(path, x))
}

fn write_pulsed_truth(s: &PulsedRunSummary, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = csv_err(path);
    w.write_record([
        "true_transmission",
        "true_dphi_rad",
        "transmission",
        "dphi_rad",
        "error_t",
        "error_dphi_rad",
    ])
    .map_err(&e)?;
    w.write_record([
        s.true_transmission.to_string(),
        s.true_dphi_rad.to_string(),
        s.transmission.to_string(),
        s.dphi_rad.to_string(),
        s.error_t.to_string(),
        s.error_dphi.to_string(),
    ])
    .map_err(&e)?;
    w.flush().map_err(|x| io_err(path, x))
}

/// What `simulate` reports back to the caller.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SimulateSummary {
    Cw(scan::CwRunSummary),
    Pulsed(PulsedRunSummary),
}

/// Runs the virtual experiment and writes trace(s), `results.csv`,
/// `truth.csv` and `summary.json` into `out_dir`.
pub fn cmd_simulate(cfg: &Config, out_dir: &Path) -> Result<SimulateSummary> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let format = cfg.output.trace_format;
    let summary = match cfg.plan.mode {
        Mode::Cw => {
            let run = scan::run_virtual_cw(cfg)?;
            write_trace(&run.trace, out_dir, "trace", format)?;
            write_results_file(&run.analysis.rows, &out_dir.join("results.csv"))?;
            write_cw_truth(&run.rows, &out_dir.join("truth.csv"))?;
            SimulateSummary::Cw(run.summary)
        }
        Mode::Pulsed => {
            let run = scan::run_virtual_pulsed(cfg)?;
            write_trace(&run.trace, out_dir, "trace", format)?;
            write_trace(&run.calibration_trace, out_dir, "calibration_trace", format)?;
            write_pulsed_results(&run.estimate, &out_dir.join("results.csv"))?;
            write_pulsed_truth(&run.summary, &out_dir.join("truth.csv"))?;
            SimulateSummary::Pulsed(run.summary)
        }
    };
    write_json(&summary, &out_dir.join("summary.json"))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AnalyzeSummary {
    Cw(crate::analysis::CwSummary),
    Pulsed(crate::analysis::PulsedEstimate),
}

fn calibration_from_file(cfg: &Config, path: &Path) -> Result<crate::analysis::Calibration> {
    let trace = read_trace(path)?;
    let timeline = cfg.calibration_layout()?.timeline()?;
    calibrate(&trace, &[timeline.reference], Some(timeline.fringe_period_samples))
}

/// Analyzes a stored trace with the layout described by `cfg`.
pub fn cmd_analyze(cfg: &Config, trace_path: &Path, calibration: Option<&Path>, out: &Path) -> Result<AnalyzeSummary> {
    let trace = read_trace(trace_path)?;
    let summary = match cfg.plan.mode {
        Mode::Cw => {
            let timeline = cfg.cw_layout()?.timeline()?;
            let cal = match calibration {
                Some(p) => calibration_from_file(cfg, p)?,
                None => calibrate(&trace, &[timeline.reference], Some(timeline.fringe_period_samples))?,
            };
            let opts = scan::cw_options(&trace, &timeline, cfg.model()?.tau)?;
            let mut analysis: CwAnalysis = analyze_cw(&trace, &cal, &opts)?;
            analysis.locate_absorption(
                &trace,
                timeline.reference.1,
                trace.len(),
                timeline.fringe_period_samples,
            );
            write_results_file(&analysis.rows, out)?;
            AnalyzeSummary::Cw(analysis.summary)
        }
        Mode::Pulsed => {
            let path = calibration
                .ok_or_else(|| Error::Config("pulsed analysis needs a calibration trace (--calibration)".into()))?;
            let cal = calibration_from_file(cfg, path)?;
            let layout = cfg.pulsed_layout()?;
            let classes = classify_pairs(&trace, &layout.pairs(cfg.model()?.tau))?;
            let est = analyze_pulsed(&trace, &classes.on, &trace, &classes.off, &cal)?;
            write_pulsed_results(&est, out)?;
            AnalyzeSummary::Pulsed(est)
        }
    };
    write_json(&summary, &out.with_extension("json"))?;
    Ok(summary)
}

pub fn write_sweep(rows: &[SweepRow], axis: &str, out: &Path) -> Result<()> {
    let mut w = csv_writer(out)?;
    let e = csv_err(out);
    w.write_record([
        axis,
        "windows",
        "mean_transmission",
        "mean_dphi_rad",
        "max_error_t",
        "max_error_dphi_rad",
    ])
    .map_err(&e)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.windows.to_string(),
            r.mean_transmission.to_string(),
            r.mean_dphi_rad.to_string(),
            r.max_error_t.to_string(),
            r.max_error_dphi.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(|x| io_err(out, x))
}

pub fn cmd_sweep(doc: &toml::Value, axis: &str, values: &[f64], out: &Path) -> Result<Vec<SweepRow>> {
    let rows = scan::sweep(doc, axis, values)?;
    write_sweep(&rows, axis, out)?;
    Ok(rows)
}

fn load_doc(path: &Path, seed: Option<u64>) -> Result<toml::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(e.message().to_string()))?;
    if let Some(s) = seed {
        let plan = doc
            .get_mut("plan")
            .and_then(|p| p.as_table_mut())
            .ok_or_else(|| Error::Config("missing required section `plan`".into()))?;
        let s = i64::try_from(s).map_err(|_| Error::Config("seed must fit in a signed 64-bit integer".into()))?;
        plan.insert("seed".into(), toml::Value::Integer(s));
    }
    Ok(doc)
}

fn execute(cli: &Cli) -> Result<()> {
    let doc = load_doc(&cli.config, cli.seed)?;
    let mut cfg = Config::from_value(doc.clone())?;
    let out_root = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| ".".into()));
    let rooted = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            out_root.join(p)
        }
    };
    match &cli.command {
        Command::Spectrum {
            delta_s_start,
            delta_s_stop,
            points,
            out,
        } => {
            let range = match (delta_s_start, delta_s_stop, points) {
                (None, None, None) => None,
                (Some(a), Some(b), Some(n)) => Some((*a, *b, *n)),
                _ => {
                    return Err(Error::Config(
                        "give all of --delta-s-start, --delta-s-stop and --points, or none".into(),
                    ))
                }
            };
            let run = cmd_spectrum(&cfg, range, &rooted(out))?;
            if cli.verbose {
                eprintln!("spectrum: {} rows, {} operating windows", run.rows.len(), run.roi.len());
            }
        }
        Command::Simulate { mode, out_dir } => {
            if let Some(m) = mode {
                cfg.plan.mode = match m {
                    ModeArg::Cw => Mode::Cw,
                    ModeArg::Pulsed => Mode::Pulsed,
                };
            }
            cfg.validate()?;
            let dir = out_dir.as_deref().map(rooted).unwrap_or(out_root.clone());
            let s = cmd_simulate(&cfg, &dir)?;
            if cli.verbose {
                eprintln!("{}", serde_json::to_string(&s).unwrap_or_default());
            }
        }
        Command::Analyze {
            trace,
            calibration,
            out,
        } => {
            let s = cmd_analyze(&cfg, trace, calibration.as_deref(), &rooted(out))?;
            if cli.verbose {
                eprintln!("{}", serde_json::to_string(&s).unwrap_or_default());
            }
        }
        Command::Sweep { axis, values, out } => {
            let rows = cmd_sweep(&doc, axis, values, &rooted(out))?;
            if cli.verbose {
                eprintln!("sweep: {} points over {axis}", rows.len());
            }
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
