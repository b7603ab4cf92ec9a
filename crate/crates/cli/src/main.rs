//! `rbm`: relaxometry predictions, sweeps, simulations, fits and sensitivity
//! analyses for nanodiamond NV sensors in magnetic-molecule solutions.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 oracle failure.

mod commands;
mod grid;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::grid::Grid;

#[derive(Debug, Parser)]
#[command(
    name = "rbm",
    version,
    about = "NV relaxometry model of rotating magnetic molecules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config (TOML). Built-in calibrated defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `particle.diameter_nm`.
    #[arg(long)]
    diameter_nm: Option<f64>,
    /// Overrides `solvent.x_water`.
    #[arg(long)]
    x_water: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    GdDensity,
    WaterFraction,
    Diameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Oracle {
    BathMc,
    Sensitivity,
    Quadrature,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forward prediction of T1 with the rate breakdown.
    T1 {
        #[command(flatten)]
        common: Common,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One row per grid point along an axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// `a,b,c`, `lin:start:stop:n` or `log:start:stop:n`. Units: m⁻³,
        /// mole fraction or nm depending on the axis.
        #[arg(long)]
        grid: Grid,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and fit an ensemble of spots.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        spots: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a single exponential to a curve file.
    Fit {
        /// Curve file with columns tau_s,signal,stderr.
        data: PathBuf,
        /// Ignore the stderr column.
        #[arg(long)]
        unweighted: bool,
        /// Starting T1, µs.
        #[arg(long)]
        t1_guess_us: Option<f64>,
        /// FitResult JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sensitivity versus Gd density, with the optimum.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        /// Log grid of densities, m⁻³. Default: four decades around the calibrated optimum.
        #[arg(long)]
        grid: Option<Grid>,
        /// Overrides `measurement.acquisition_time_s`.
        #[arg(long)]
        acquisition_time_s: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a closed form with its numerical oracle.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Oracle,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
    Oracle(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Oracle(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) | Failure::Oracle(m) => m,
        }
    }
}

impl From<rbm_core::Error> for Failure {
    fn from(e: rbm_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::T1 { common, out } => commands::t1(&common, out.as_deref()),
        Command::Sweep {
            common,
            axis,
            grid,
            out,
        } => commands::sweep(&common, axis, &grid.0, out.as_deref()),
        Command::Simulate { common, spots, out } => commands::simulate(&common, spots, &out),
        Command::Fit {
            data,
            unweighted,
            t1_guess_us,
            out,
        } => commands::fit(&data, unweighted, t1_guess_us, out.as_deref()),
        Command::Sensitivity {
            common,
            grid,
            acquisition_time_s,
            out,
        } => commands::sensitivity(
            &common,
            grid.map(|g| g.0),
            acquisition_time_s,
            out.as_deref(),
        ),
        Command::Oracle { common, which, out } => commands::oracle(&common, which, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
