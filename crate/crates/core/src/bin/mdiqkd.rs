use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mdiqkd::bounds::{ParameterSchedule, SweepMode};
use mdiqkd::decoy::Method;
use mdiqkd::io::{self, SweepCommand};
use mdiqkd::Error;

#[derive(Parser)]
#[command(name = "mdiqkd", version, about = "Time-bin MDI-QKD relay simulation and decoy-state analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo and write a tally CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Pulse pairs to simulate instead of the config's budget.
        #[arg(long)]
        pairs: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decoy-state analysis of a gains or tally CSV.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Gains file (pair_label,sent,successes,errors) or tally file.
        #[arg(long)]
        gains: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Lp)]
        method: MethodArg,
        /// Analyze even if the input was produced from a different config.
        #[arg(long)]
        force: bool,
    },
    /// Secure key rate over a list of total losses.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated total losses in dB, e.g. "24,35,44".
        #[arg(long)]
        losses: String,
        #[arg(long, value_enum, default_value_t = ModeArg::AnalyticGains)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Interpolated)]
        schedule: ScheduleArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Pulse pairs per loss in full-simulation mode.
        #[arg(long, default_value_t = 10_000_000)]
        pairs: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Lp,
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FullSimulation,
    AnalyticGains,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Fixed,
    Interpolated,
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, seed, workers, pairs, out } => {
            let tally = io::cmd_simulate(&config, seed, workers, pairs, &out)?;
            eprintln!("simulated {} pulse pairs -> {}", tally.total_sent(), out.display());
        }
        Command::Analyze { config, gains, out, method, force } => {
            let method = match method {
                MethodArg::Lp => Method::LinearProgram,
                MethodArg::Analytic => Method::Analytic,
            };
            let a = io::cmd_analyze(&gains, &config, &out, method, force)?;
            let r = a.result;
            println!(
                "y11_lower={:.4e} e11ph_upper={:.4} rate_per_pulse={:.4e} rate_bps={:.1}",
                r.y11_lower, r.e11ph_upper, r.key_rate_per_pulse, r.key_rate_bps
            );
        }
        Command::Sweep { config, losses, mode, schedule, seed, workers, pairs, out } => {
            let losses = io::parse_losses(&losses)?;
            let mode = match mode {
                ModeArg::FullSimulation => SweepMode::FullSimulation { seed, workers, pairs },
                ModeArg::AnalyticGains => SweepMode::AnalyticGains,
            };
            let schedule = match schedule {
                ScheduleArg::Fixed => ParameterSchedule::Fixed,
                ScheduleArg::Interpolated => ParameterSchedule::Interpolated,
            };
            let (rows, warnings) = io::cmd_sweep(&config, &losses, SweepCommand { mode, schedule }, &out)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("{} sweep points -> {}", rows.len(), out.display());
        }
        Command::Validate { config } => {
            let v = io::cmd_validate(&config)?;
            if !v.is_ok() {
                return Err(Error::Validation(v.violations));
            }
            println!("{}: ok", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
