//! `pfsafe` command line.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure |
//! | 2 | invalid scenario, flags or log file (including usage errors) |
//! | 3 | numerical divergence; the partial log is still written |

pub mod commands;
pub mod log_csv;
pub mod plot;
pub mod scenario_file;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pfsafe", version, about = "Power-flow safety layer simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario; writes log.csv and summary.txt.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a scenario with the power rows off and on; writes both logs and compare.txt.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Render a log as a five-panel time series and a phase portrait.
    Plot(PlotArgs),
    /// Sample pose and wrench safe-set boundaries; writes SVG and CSV.
    Safeset(SafesetArgs),
    /// Stop time after the scenario event for each k_lambda; writes sweep.csv.
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Physics step, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Power rows on or off.
    #[arg(long, value_enum)]
    pub safety: Option<OnOff>,
    /// Power-limit gain, W·s. `sweep` takes a comma-separated list.
    #[arg(long = "k-lambda", value_delimiter = ',')]
    pub k_lambda: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    pub log: PathBuf,
    /// Scenario the log came from; supplies mass and gains for the safe-set overlay.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// DoF of the phase portrait (x, y, z, roll, pitch, yaw). Defaults to the first active one.
    #[arg(long)]
    pub dof: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SafesetArgs {
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// kg
    #[arg(long, default_value_t = 4.58)]
    pub mass: f64,
    /// Velocity gain, N·s/m.
    #[arg(long, default_value_t = 5.0)]
    pub damping: f64,
    /// Position gain, N/m.
    #[arg(long, default_value_t = 20.0)]
    pub stiffness: f64,
    /// W·s
    #[arg(long = "k-lambda", default_value_t = 1.0)]
    pub k_lambda: f64,
    /// Half-width of the pose grid, m and m/s.
    #[arg(long, default_value_t = 1.0)]
    pub half_width: f64,
    /// Grid points per axis.
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Surface stiffnesses, N/m.
    #[arg(long, value_delimiter = ',', default_values_t = [30.0, 300.0])]
    pub surface_stiffness: Vec<f64>,
    /// Surface damping, N·s/m.
    #[arg(long, default_value_t = 5.0)]
    pub surface_damping: f64,
    /// Contact force reference, N.
    #[arg(long, default_value_t = 4.0)]
    pub force_reference: f64,
    /// Wrench-loop LLE the wrench sets are drawn at, 1/s.
    #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
    pub wrench_lle: f64,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match commands::execute(&cli.command) {
        Ok(msg) => {
            print!("{msg}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
