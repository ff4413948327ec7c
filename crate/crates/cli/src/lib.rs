//! Command-line front end: crop-row detection, evaluation, simulation and tuning.

pub mod commands;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable that overrides every seed in a config.
pub const SEED_ENV: &str = "ROWTSM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "rowtsm",
    version,
    about = "Triangle-scan crop-row detection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    #[value(name = "appendix_a")]
    AppendixA,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect the central crop row in PGM masks.
    Detect {
        /// Config file with a [tsm] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write anchor and line sum curves as CSV.
        #[arg(long)]
        curves: bool,
        /// Also write each mask with the detected line burned in at gray 128.
        #[arg(long)]
        overlay: bool,
        /// Mask files or directories of .pgm files.
        #[arg(required = true)]
        masks: Vec<PathBuf>,
    },
    /// Score detections against ground truth, or reproduce a shipped table.
    Eval {
        #[arg(long, required_unless_present = "fixtures")]
        det: Option<PathBuf>,
        #[arg(long, required_unless_present = "fixtures")]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = rowtsm_core::eval::APPENDIX_DTHETA_MAX)]
        dtheta_max: f64,
        #[arg(long, default_value_t = rowtsm_core::eval::APPENDIX_DLX2_MAX)]
        dlx2_max: f64,
        #[arg(long, value_enum)]
        fixtures: Option<Fixture>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run closed-loop row-following trials.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        /// Use this initial heading (degrees) for every trial.
        #[arg(long, allow_hyphen_values = true)]
        heading: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Suggest B, C and the anchor threshold from ground truth and masks.
    Tune {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Masks whose anchor peak ratios feed the threshold suggestion.
        #[arg(long, num_args = 1..)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        min_freq: usize,
    },
    /// Verify the shipped per-class table.
    Fixtures {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render random masks with their ground-truth lines.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulation config; its [field] and [camera] sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Detect {
            config,
            out,
            curves,
            overlay,
            masks,
        } => commands::detect(config.as_deref(), &out, curves, overlay, &masks),
        Command::Eval {
            det,
            truth,
            dtheta_max,
            dlx2_max,
            fixtures,
            out,
        } => commands::eval(
            det.as_deref(),
            truth.as_deref(),
            dtheta_max,
            dlx2_max,
            fixtures,
            out.as_deref(),
        ),
        Command::Simulate {
            config,
            trials,
            heading,
            seed,
            out,
        } => commands::simulate(config.as_deref(), trials, heading, seed, &out),
        Command::Tune {
            truth,
            out,
            masks,
            config,
            min_freq,
        } => commands::tune(&truth, &out, &masks, config.as_deref(), min_freq),
        Command::Fixtures { out } => commands::fixtures(out.as_deref()),
        Command::Corpus {
            out,
            count,
            seed,
            config,
        } => commands::corpus(&out, count, seed, config.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
