use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sqzsim::commands::{
    cmd_infer, cmd_lock, cmd_phase_scan, cmd_presets, cmd_seed_sweep, cmd_spectrum, load_scenario,
    RunOptions,
};
use sqzsim::error::AppError;
use sqzsim::presets;

#[derive(Parser)]
#[command(
    name = "sqzsim",
    about = "Squeezed-light OPO/OPA simulation bench: noise spectra, phase scans, seed sweeps, noise locking and inference",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file path, or the name of a built-in preset
    #[arg(long)]
    scenario: String,
    /// Output directory for emitted files
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate exact model values instead of synthesizing measurement noise
    #[arg(long)]
    analytic: bool,
    /// Output file format
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

impl CommonArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            out_dir: self.out.clone(),
            seed_override: self.seed,
            analytic: self.analytic,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the shot-noise, squeezed and electronic-noise spectra
    Spectrum(CommonArgs),
    /// Scan the homodyne phase at one sideband frequency
    PhaseScan {
        #[command(flatten)]
        common: CommonArgs,
        /// Sideband frequency of the scan (defaults to the scenario's
        /// [phase_scan] section)
        #[arg(long)]
        frequency_hz: Option<f64>,
        /// Number of phase points
        #[arg(long)]
        points: Option<usize>,
    },
    /// Band-mean noise power versus OPA seed power, with affine fit
    SeedSweep(CommonArgs),
    /// Simulate the noise-dither homodyne phase lock
    Lock(CommonArgs),
    /// Infer source-level squeezing and purity from measured variances
    Infer {
        /// Scenario file path, or the name of a built-in preset
        #[arg(long)]
        scenario: String,
        /// Also write the report into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in presets; write their scenario files with --out
    Presets {
        /// Directory to write one <preset>.toml per preset
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run() -> Result<(), AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Spectrum(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let report = cmd_spectrum(&scenario, &args.options())?;
            for path in [
                &report.shot_path,
                &report.squeezed_path,
                &report.electronic_path,
                &report.composite_path,
            ] {
                println!("wrote {}", path.display());
            }
            println!(
                "bins: {} ({} masked)",
                report.squeezed.len(),
                report.masked_bins
            );
        }
        Command::PhaseScan {
            common,
            frequency_hz,
            points,
        } => {
            let scenario = load_scenario(&common.scenario)?;
            let report = cmd_phase_scan(&scenario, &common.options(), frequency_hz, points)?;
            println!("wrote {}", report.path.display());
            println!(
                "fringe at {} Hz: min {:.2} dB, max {:.2} dB, measured purity {:.3}, inferred purity {:.3}",
                report.frequency_hz,
                report.min_db,
                report.max_db,
                report.measured_purity,
                report.inferred_purity
            );
        }
        Command::SeedSweep(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let report = cmd_seed_sweep(&scenario, &args.options())?;
            println!("wrote {}", report.path.display());
            println!(
                "fit: band_mean = {:.4} + {:.4e}/W * P (relative residual {:.2e})",
                report.sweep.fit.intercept,
                report.sweep.fit.slope,
                report.sweep.fit.relative_residual
            );
        }
        Command::Lock(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let report = cmd_lock(&scenario, &args.options())?;
            println!("wrote {}", report.path.display());
            let s = report.summary;
            println!(
                "converged={} locked_to={:?} mean_offset={:.4} rad residual_rms={:.4} rad settle={:?} s",
                s.converged, s.locked_to, s.mean_offset, s.residual_rms, s.settle_time
            );
        }
        Command::Infer { scenario, out } => {
            let scenario = load_scenario(&scenario)?;
            let report = cmd_infer(&scenario)?;
            println!("{report}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let path = dir.join("infer_report.txt");
                std::fs::write(&path, format!("{report}\n"))?;
                println!("wrote {}", path.display());
            }
        }
        Command::Presets { out } => {
            let rows = cmd_presets(out.as_deref())?;
            for (name, written) in rows {
                match written {
                    Some(path) => println!("{name}: wrote {}", path.display()),
                    None => println!("{name}: {}", presets::describe(&name)),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
