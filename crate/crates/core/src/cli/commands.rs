use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::safety::safeset::{scaling_c1, WrenchPlane};
use crate::sim::metrics::{peak, peak_power, peak_velocity_error, rebound, stop_time, Summary};
use crate::sim::{run, LogRecord, Scenario, SimError};

use super::log_csv::{self, format_sig9, CsvError};
use super::plot::{self, PoseSetParams};
use super::scenario_file::{parse_scenario, AnalysisOptions, ScenarioFileError, DOF_NAMES};
use super::{Command, OnOff, PlotArgs, RunFlags, SafesetArgs, EXIT_DIVERGED, EXIT_INVALID, EXIT_IO};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Scenario { path: PathBuf, source: ScenarioFileError },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    SchemaMismatch { path: PathBuf, message: String },
    /// The partial log has been written to `log`.
    #[error("numerical divergence at t = {t} s; partial log in {}", log.display())]
    Diverged { t: f64, log: PathBuf },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Scenario { .. } | CliError::Invalid(_) | CliError::SchemaMismatch { .. } => EXIT_INVALID,
            CliError::Diverged { .. } => EXIT_DIVERGED,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_log_file(path: &Path, log: &[LogRecord]) -> Result<(), CliError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    log_csv::write_log(BufWriter::new(f), log).map_err(|e| match e {
        CsvError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        CsvError::SchemaMismatch(message) => CliError::SchemaMismatch { path: path.to_path_buf(), message },
    })
}

fn read_log_file(path: &Path) -> Result<Vec<LogRecord>, CliError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    log_csv::read_log(f).map_err(|e| match e {
        CsvError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        CsvError::SchemaMismatch(message) => CliError::SchemaMismatch { path: path.to_path_buf(), message },
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Reads a scenario file and applies the command-line overrides.
pub fn load_scenario(path: &Path, flags: &RunFlags, single_k_lambda: bool) -> Result<(Scenario, AnalysisOptions), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (mut sc, analysis) = parse_scenario(&text).map_err(|source| CliError::Scenario { path: path.to_path_buf(), source })?;
    if let Some(seed) = flags.seed {
        sc.seed = seed;
    }
    if let Some(dt) = flags.dt {
        sc.dt = dt;
    }
    if let Some(s) = flags.safety {
        sc.safety_enabled = s == OnOff::On;
    }
    if single_k_lambda {
        match flags.k_lambda.as_slice() {
            [] => {}
            [k] => sc.safety.k_lambda = *k,
            _ => return Err(CliError::Invalid("--k-lambda takes a single value here".into())),
        }
    }
    sc.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
    Ok((sc, analysis))
}

/// Log of a run, partial if it diverged.
struct Outcome {
    log: Vec<LogRecord>,
    diverged_at: Option<f64>,
}

fn simulate(sc: &Scenario) -> Result<Outcome, CliError> {
    match run(sc) {
        Ok(log) => Ok(Outcome { log, diverged_at: None }),
        Err(SimError::NumericalDivergence { t, log }) => Ok(Outcome { log, diverged_at: Some(t) }),
        Err(SimError::InvalidScenario(m)) => Err(CliError::Invalid(m)),
    }
}

pub fn execute(cmd: &Command) -> Result<String, CliError> {
    match cmd {
        Command::Run { scenario, flags } => cmd_run(scenario, flags),
        Command::Compare { scenario, flags } => cmd_compare(scenario, flags),
        Command::Plot(args) => cmd_plot(args),
        Command::Safeset(args) => cmd_safeset(args),
        Command::Sweep { scenario, flags } => cmd_sweep(scenario, flags),
    }
}

fn cmd_run(path: &Path, flags: &RunFlags) -> Result<String, CliError> {
    let (sc, _) = load_scenario(path, flags, true)?;
    ensure_dir(&flags.out)?;
    let out = simulate(&sc)?;
    let log_path = flags.out.join("log.csv");
    write_log_file(&log_path, &out.log)?;
    let mut summary = Summary::from_log(&out.log).to_text();
    if let Some(t) = out.diverged_at {
        let _ = writeln!(summary, "diverged_at_s = {t}");
    }
    write_file(&flags.out.join("summary.txt"), &summary)?;
    match out.diverged_at {
        Some(t) => Err(CliError::Diverged { t, log: log_path }),
        None => Ok(format!("{} records written to {}\n", out.log.len(), log_path.display())),
    }
}

/// Side-by-side figures of a safety-off and a safety-on run.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Rebound after the last scripted push, or the whole-run peak velocity
    /// error when there is none; on over off.
    pub overshoot_ratio: f64,
    pub peak_power_ratio: f64,
    pub overshoot: [f64; 2],
    pub peak_power: [f64; 2],
    /// Settle time below the stop speed after the event, for scenarios with one.
    pub stop_time: Option<[Option<f64>; 2]>,
    /// Peak speed along the stop axis after the event.
    pub peak_speed: Option<[f64; 2]>,
    /// A run that diverged numerically or did not come to rest within the
    /// stop window after the event.
    pub diverging: [bool; 2],
}

fn overshoot(sc: &Scenario, log: &[LogRecord]) -> f64 {
    match sc.environment.disturbances.last() {
        Some(d) => rebound(log, d),
        None => peak_velocity_error(log),
    }
}

fn compare_logs(sc: &Scenario, analysis: &AnalysisOptions, off: &Outcome, on: &Outcome) -> Result<Comparison, CliError> {
    let o = [overshoot(sc, &off.log), overshoot(sc, &on.log)];
    let p = [peak_power(&off.log), peak_power(&on.log)];
    let has_event = analysis.event_time_s.is_some() || sc.environment.surface.and_then(|s| s.ramp).is_some();
    let from = analysis.event_time(sc);
    let (stop, speed) = if has_event {
        let axis = analysis.stop_axis_index().map_err(|e| CliError::Invalid(e.to_string()))?;
        let st = |log: &[LogRecord]| stop_time(log, from, axis, analysis.stop_speed_m_per_s);
        let sp = |log: &[LogRecord]| peak(log, from, f64::INFINITY, |r| r.twist[axis].abs());
        (Some([st(&off.log), st(&on.log)]), Some([sp(&off.log), sp(&on.log)]))
    } else {
        (None, None)
    };
    let diverging = std::array::from_fn(|k| {
        let out = if k == 0 { off } else { on };
        let late = stop.is_some_and(|s| s[k].is_none_or(|t| t > from + analysis.stop_window_s));
        out.diverged_at.is_some() || late
    });
    Ok(Comparison {
        overshoot_ratio: o[1] / o[0],
        peak_power_ratio: p[1] / p[0],
        overshoot: o,
        peak_power: p,
        stop_time: stop,
        peak_speed: speed,
        diverging,
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "overshoot_off = {}", format_sig9(self.overshoot[0]));
        let _ = writeln!(s, "overshoot_on = {}", format_sig9(self.overshoot[1]));
        let _ = writeln!(s, "overshoot_ratio = {}", format_sig9(self.overshoot_ratio));
        let _ = writeln!(s, "peak_power_off_W = {}", format_sig9(self.peak_power[0]));
        let _ = writeln!(s, "peak_power_on_W = {}", format_sig9(self.peak_power[1]));
        let _ = writeln!(s, "peak_power_ratio = {}", format_sig9(self.peak_power_ratio));
        if let Some(st) = self.stop_time {
            let f = |t: Option<f64>| t.map_or("none".to_string(), format_sig9);
            let _ = writeln!(s, "stop_time_off_s = {}", f(st[0]));
            let _ = writeln!(s, "stop_time_on_s = {}", f(st[1]));
        }
        if let Some(sp) = self.peak_speed {
            let _ = writeln!(s, "peak_speed_off_m_per_s = {}", format_sig9(sp[0]));
            let _ = writeln!(s, "peak_speed_on_m_per_s = {}", format_sig9(sp[1]));
        }
        let _ = writeln!(s, "diverging_off = {}", self.diverging[0]);
        let _ = writeln!(s, "diverging_on = {}", self.diverging[1]);
        s
    }
}

fn cmd_compare(path: &Path, flags: &RunFlags) -> Result<String, CliError> {
    let (sc, analysis) = load_scenario(path, flags, true)?;
    ensure_dir(&flags.out)?;
    let off_sc = Scenario { safety_enabled: false, ..sc.clone() };
    let on_sc = Scenario { safety_enabled: true, ..sc.clone() };
    let (off, on) = rayon::join(|| simulate(&off_sc), || simulate(&on_sc));
    let (off, on) = (off?, on?);
    let paths = [flags.out.join("log_off.csv"), flags.out.join("log_on.csv")];
    write_log_file(&paths[0], &off.log)?;
    write_log_file(&paths[1], &on.log)?;
    let cmp = compare_logs(&sc, &analysis, &off, &on)?;
    let text = cmp.to_text();
    write_file(&flags.out.join("compare.txt"), &text)?;
    for (out, p) in [(&off, &paths[0]), (&on, &paths[1])] {
        if let Some(t) = out.diverged_at {
            return Err(CliError::Diverged { t, log: p.clone() });
        }
    }
    Ok(text)
}

fn dof_index(name: &str) -> Result<usize, CliError> {
    DOF_NAMES.iter().position(|n| *n == name).ok_or_else(|| CliError::Invalid(format!("unknown DoF {name:?}")))
}

fn cmd_plot(args: &PlotArgs) -> Result<String, CliError> {
    let log = read_log_file(&args.log)?;
    if log.is_empty() {
        return Err(CliError::SchemaMismatch { path: args.log.clone(), message: "log has no records".into() });
    }
    let sc = match &args.scenario {
        Some(p) => load_scenario(p, &RunFlags { out: PathBuf::new(), seed: None, dt: None, safety: None, k_lambda: vec![] }, true)?.0,
        None => Scenario::default(),
    };
    let dofs = plot::active_dofs(&log);
    let dof = match &args.dof {
        Some(n) => dof_index(n)?,
        None => dofs[0],
    };
    let mass = if dof < 3 { sc.vehicle.mass } else { sc.vehicle.inertia[dof - 3] };
    let set = PoseSetParams { mass, damping: sc.gains.damping[dof], stiffness: sc.gains.stiffness[dof], k_lambda: sc.safety.k_lambda };
    let schema = |e: CsvError| CliError::SchemaMismatch { path: args.log.clone(), message: e.to_string() };
    let ts = plot::timeseries(&log, &dofs).map_err(schema)?;
    let phase = plot::phase_portrait(&log, dof, &set).map_err(schema)?;
    ensure_dir(&args.out)?;
    let ts_path = args.out.join("timeseries.svg");
    let phase_path = args.out.join(format!("phase_{}.svg", DOF_NAMES[dof]));
    write_file(&ts_path, &ts)?;
    write_file(&phase_path, &phase)?;
    Ok(format!("wrote {} and {}\n", ts_path.display(), phase_path.display()))
}

fn curves_csv(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("set,x,y\n");
    for (name, pts) in curves {
        for (x, y) in pts {
            let _ = writeln!(s, "{name},{},{}", format_sig9(*x), format_sig9(*y));
        }
    }
    s
}

fn cmd_safeset(a: &SafesetArgs) -> Result<String, CliError> {
    let positive = [a.mass, a.damping, a.k_lambda, a.half_width, a.surface_damping];
    if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(a.stiffness >= 0.0) || a.grid < 2 {
        return Err(CliError::Invalid("safe-set parameters must be positive (stiffness non-negative) and the grid at least 2".into()));
    }
    if a.surface_stiffness.iter().any(|k| !(*k > 0.0)) || !(a.force_reference > 0.0) {
        return Err(CliError::Invalid("surface stiffness and force reference must be positive".into()));
    }
    ensure_dir(&a.out)?;
    let set = PoseSetParams { mass: a.mass, damping: a.damping, stiffness: a.stiffness, k_lambda: a.k_lambda };
    let c1 = scaling_c1(a.mass, a.damping, a.stiffness);
    let (pose_curves, pose_svg) = plot::pose_sets(&set, c1, a.half_width, a.grid);
    write_file(&a.out.join("pose_sets.svg"), &pose_svg)?;
    write_file(&a.out.join("pose_sets.csv"), &curves_csv(&pose_curves))?;
    let planes: Vec<(String, WrenchPlane<f64>)> = a
        .surface_stiffness
        .iter()
        .map(|k| (format!("k_s={k}"), WrenchPlane { k_s: *k, d_s: a.surface_damping, k_lambda: a.k_lambda, lambda: a.wrench_lle }))
        .collect();
    let softest = a.surface_stiffness.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_range = (0.0, 2.0 * a.force_reference / softest);
    let (wrench_curves, wrench_svg) = plot::wrench_sets(&planes, x_range, (-1.0, 1.0), a.grid);
    write_file(&a.out.join("wrench_sets.svg"), &wrench_svg)?;
    write_file(&a.out.join("wrench_sets.csv"), &curves_csv(&wrench_curves))?;
    Ok(format!("wrote pose and wrench safe sets to {}\n", a.out.display()))
}

fn cmd_sweep(path: &Path, flags: &RunFlags) -> Result<String, CliError> {
    let (sc, analysis) = load_scenario(path, flags, false)?;
    let gains = if flags.k_lambda.is_empty() { analysis.sweep_k_lambda.clone() } else { flags.k_lambda.clone() };
    if gains.is_empty() {
        return Err(CliError::Invalid("no k_lambda values: pass --k-lambda or set analysis.sweep_k_lambda_W_s".into()));
    }
    let axis = analysis.stop_axis_index().map_err(|e| CliError::Invalid(e.to_string()))?;
    let from = analysis.event_time(&sc);
    ensure_dir(&flags.out)?;
    type Row = (f64, Option<f64>, f64, Option<f64>);
    let results: Vec<Result<Row, CliError>> = gains
        .par_iter()
        .map(|k| {
            let mut s = sc.clone();
            s.safety.k_lambda = *k;
            s.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
            let out = simulate(&s)?;
            let stop = stop_time(&out.log, from, axis, analysis.stop_speed_m_per_s);
            let peak_speed = peak(&out.log, from, f64::INFINITY, |r| r.twist[axis].abs());
            Ok((*k, stop, peak_speed, out.diverged_at))
        })
        .collect();
    let mut text = String::from("k_lambda_W_s,stop_time_s,peak_speed_m_per_s,diverged_at_s\n");
    for r in results {
        let (k, stop, speed, div) = r?;
        let opt = |v: Option<f64>| v.map_or(String::new(), format_sig9);
        let _ = writeln!(text, "{},{},{},{}", format_sig9(k), opt(stop), format_sig9(speed), opt(div));
    }
    write_file(&flags.out.join("sweep.csv"), &text)?;
    Ok(text)
}
