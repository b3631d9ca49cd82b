//! `microlaser`: theory sweeps, `g²` predictions, photon-count simulation and
//! correlation analysis from a flat `key = value` configuration file.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 numerical
//! error, 4 I/O error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use microlaser_core::correlator::Normalization;
use microlaser_core::semiclassical::SweepDirection;

use commands::{
    parse_list, parse_range, CorrelateArgs, Failure, PipelineArgs, SimulateArgs, SweepArgs,
};

#[derive(Parser)]
#[command(
    name = "microlaser",
    version,
    about = "One-atom laser photon statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Up,
    Down,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    /// Constant baseline `R1 R2 Δτ T`.
    Analytic,
    /// Baseline `R1 R2 Δτ (T - τ)`, exact for a finite acquisition.
    Overlap,
    /// Mean of the trailing `--tail-fraction` of the bins.
    Tail,
}

impl NormalizationArg {
    fn resolve(self, tail_fraction: f64) -> Normalization {
        match self {
            NormalizationArg::Analytic => Normalization::Analytic,
            NormalizationArg::Overlap => Normalization::Overlap,
            NormalizationArg::Tail => Normalization::Tail {
                fraction: tail_fraction,
            },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Mean photon number, Q and correlation times across a pump range.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Pump values as `a:b:step` (inclusive) or a single value.
        #[arg(long, conflicts_with = "n_list", required_unless_present = "n_list")]
        n_range: Option<String>,
        /// Comma-separated pump values.
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long, value_enum, default_value = "up")]
        direction: Direction,
        /// Add quantum mean, Q and correlation time columns.
        #[arg(long)]
        quantum: bool,
        /// Fixed photon-number truncation for `--quantum`; automatic per pump if omitted.
        #[arg(long, requires = "quantum")]
        n_max: Option<usize>,
        /// Output CSV; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady-state `g²(τ)` with its fitted amplitude and decay time.
    PredictG2 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Photon-count trajectory; writes `<out>_ch1.mlts`, `<out>_ch2.mlts`
    /// and `<out>_manifest.txt`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path prefix.
        #[arg(long)]
        out: PathBuf,
        /// Also write the photon-number path to `<out>_path.csv`.
        #[arg(long)]
        path: bool,
        /// Start from this photon number instead of sampling the steady state.
        #[arg(long)]
        initial_n: Option<usize>,
    },
    /// Correlate two timestamp files and fit `1 + C0 exp(-τ/τ_c)`.
    CorrelateFit {
        #[arg(long)]
        stream1: PathBuf,
        #[arg(long)]
        stream2: PathBuf,
        /// Supplies Γ_c and the detection efficiency for the Q estimates.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        bin_ns: f64,
        /// Defaults to five cavity lifetimes.
        #[arg(long)]
        window_us: Option<f64>,
        #[arg(long, value_enum, default_value = "analytic")]
        normalization: NormalizationArg,
        #[arg(long, default_value_t = 0.1)]
        tail_fraction: f64,
        /// Count pairs in both orders.
        #[arg(long)]
        symmetric: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fit report; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Normalized histogram as CSV.
        #[arg(long)]
        g2_out: Option<PathBuf>,
    },
    /// Simulate, correlate and fit, then compare against theory.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20.0)]
        bin_ns: f64,
        #[arg(long)]
        window_us: Option<f64>,
        #[arg(long, value_enum, default_value = "overlap")]
        normalization: NormalizationArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let args_err = |error| Failure {
        stage: "arguments",
        error,
    };
    match cli.command {
        Command::Sweep {
            config,
            n_range,
            n_list,
            direction,
            quantum,
            n_max,
            out,
        } => {
            let (pumps, spec) = match (n_range, n_list) {
                (Some(r), _) => (parse_range(&r).map_err(args_err)?, r),
                (None, Some(l)) => (parse_list(&l).map_err(args_err)?, l),
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let direction = match direction {
                Direction::Up => SweepDirection::Ascending,
                Direction::Down => SweepDirection::Descending,
            };
            commands::cmd_sweep(SweepArgs {
                config,
                pumps,
                spec,
                direction,
                n_max,
                quantum,
                out,
            })
        }
        Command::PredictG2 { config, out } => commands::cmd_predict_g2(&config, out.as_deref()),
        Command::Simulate {
            config,
            duration_s,
            seed,
            out,
            path,
            initial_n,
        } => commands::cmd_simulate(SimulateArgs {
            config,
            duration_s,
            seed,
            out,
            path,
            initial_n,
        }),
        Command::CorrelateFit {
            stream1,
            stream2,
            config,
            bin_ns,
            window_us,
            normalization,
            tail_fraction,
            symmetric,
            workers,
            out,
            g2_out,
        } => commands::cmd_correlate_fit(CorrelateArgs {
            stream1,
            stream2,
            config,
            bin_ns,
            window_us,
            normalization: normalization.resolve(tail_fraction),
            symmetric,
            workers,
            out,
            g2_out,
        }),
        Command::Pipeline {
            config,
            duration_s,
            seed,
            bin_ns,
            window_us,
            normalization,
            out,
        } => commands::cmd_pipeline(PipelineArgs {
            config,
            duration_s,
            seed,
            bin_ns,
            window_us,
            normalization: normalization.resolve(0.1),
            out,
        }),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("microlaser: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
