use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use advslam_core::dataset::generate_synthetic_sequence;
use advslam_core::experiment::{emit_plot_data, parse_synthetic_spec, sweep, BaselineCache, PlotKind};
use advslam_core::{Error, ErrorKind, ExperimentConfig, Result, Schedule};

/// Adversarial perturbation experiments against RGB-D odometry.
///
/// Log verbosity comes from ADVSLAM_LOG (error, warn, info, debug, trace;
/// default warn).
#[derive(Parser, Debug)]
#[command(name = "advslam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and print its summary.
    Run {
        config: PathBuf,
        /// Output directory (overrides [run] output).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a grid of epsilons and schedules sharing one baseline.
    Sweep {
        config: PathBuf,
        /// Comma-separated epsilons, e.g. 0.005,0.05,0.1
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        /// Comma-separated schedules: all, rate:p/q, time[:N|:inf], spatial.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        schedules: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the clean pipeline only.
    Baseline {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write plot-ready CSV for a report directory.
    Plotdata {
        report: PathBuf,
        /// trajectory2d or timeline
        #[arg(long)]
        kind: String,
        /// Defaults to the report directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render a synthetic sequence in TUM layout.
    Synth {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Internal => 3,
    }
}

fn load(config: &Path, output: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(config)?;
    if output.is_some() {
        c.output = output;
    }
    Ok(c)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, output } => {
            let c = load(&config, output)?;
            let report = advslam_core::experiment::run(&c)?;
            print!("{}", report.summary());
        }
        Command::Baseline { config, output } => {
            let mut c = load(&config, output)?;
            c.attack = None;
            c.baseline = false;
            let report = advslam_core::experiment::run(&c)?;
            print!("{}", report.summary());
        }
        Command::Sweep {
            config,
            eps,
            schedules,
            output,
        } => {
            let c = load(&config, output)?;
            let schedules = schedules
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Schedule>>>()?;
            let report = sweep(&c, &eps, &schedules, &BaselineCache::new())?;
            print!("{}", report.to_csv());
            let failed = report.cells.iter().filter(|c| c.result.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} cells failed", report.cells.len());
            }
        }
        Command::Plotdata { report, kind, output } => {
            let kind: PlotKind = kind.parse()?;
            let out = output.unwrap_or_else(|| report.clone());
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for path in emit_plot_data(&report, kind, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Synth { spec, output } => {
            let text = fs::read_to_string(&spec)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", spec.display())))?;
            let spec = parse_synthetic_spec(&text, &spec)?;
            let seq = generate_synthetic_sequence(&spec)?;
            seq.write_tum(&output)?;
            println!("{} frames written to {}", spec.frames, output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ADVSLAM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
