//! Command-line front end. Exit codes: 0 success, 2 configuration error, 1 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cofmcw::chanest::theoretical_rmse_h1;
use cofmcw::channel::snr_to_sigma;
use cofmcw::sensing::SensingMethod;

use crate::error::{HarnessError, Result};
use crate::rdm::write_rdm_csv;
use crate::scenario::{preset, ScenarioSpec, PRESET_NAMES};
use crate::sweep::{format_sig9, sweep_to_file};
use crate::trial::single_shot_rdm;

#[derive(Debug, Parser)]
#[command(name = "cofmcw", version, about = "Coordinated FMCW-OFDM link simulator")]
struct Cli {
    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of trials per cell.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario's sweep and write `<out-dir>/<name>.csv`.
    Simulate { config: PathBuf },
    /// Export the range-Doppler map of one trial.
    Rdm {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sensing method; defaults to the scenario's first.
        #[arg(long)]
        method: Option<String>,
        /// SNR in dB; defaults to the scenario's first.
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Parse and check a scenario file.
    ValidateConfig { config: PathBuf },
    /// Closed-form RMSE of the strongest path coefficient at each SNR.
    TheoryRmse { config: PathBuf },
    /// Print a built-in scenario as TOML.
    Preset { name: String },
}

fn load(path: &Path, cli: &Cli) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::load(path)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(trials) = cli.trials {
        spec.trials = trials;
    }
    spec.validate()
        .map_err(|e| HarnessError::config(path.display().to_string(), e))?;
    Ok(spec)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn console(source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate { config } => {
            let spec = load(config, cli)?;
            let path = sweep_to_file(&spec, &cli.out_dir, cli.workers)?;
            writeln!(stdout, "{}", path.display()).map_err(console)?;
        }
        Command::Rdm {
            config,
            out,
            method,
            snr_db,
            trial,
        } => {
            let spec = load(config, cli)?;
            let method = match method {
                Some(m) => parse_method(m).map_err(|e| HarnessError::config(config.display().to_string(), e))?,
                None => spec.methods[0],
            };
            let snr = snr_db.unwrap_or(spec.snr_db[0]);
            let rdm = single_shot_rdm(&spec, method, snr, *trial)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            let file = std::fs::File::create(out).map_err(io_err(out))?;
            write_rdm_csv(std::io::BufWriter::new(file), &rdm)?;
            writeln!(stdout, "{}", out.display()).map_err(console)?;
        }
        Command::ValidateConfig { config } => {
            let spec = load(config, cli)?;
            writeln!(stdout, "{}: ok", spec.name).map_err(console)?;
        }
        Command::TheoryRmse { config } => {
            let spec = load(config, cli)?;
            writeln!(stdout, "snr_db,noise_variance,sigma_h1").map_err(console)?;
            for &snr in &spec.snr_db {
                let var = snr_to_sigma(snr);
                let sigma = theoretical_rmse_h1(&spec.system, var)
                    .map_err(|e| HarnessError::config(config.display().to_string(), e.to_string()))?;
                writeln!(stdout, "{},{},{}", format_sig9(snr), format_sig9(var), format_sig9(sigma))
                    .map_err(console)?;
            }
        }
        Command::Preset { name } => {
            let spec = preset(name).ok_or_else(|| {
                HarnessError::config(name, format!("unknown preset; choose one of {}", PRESET_NAMES.join(", ")))
            })?;
            write!(stdout, "{}", spec.to_toml()).map_err(console)?;
        }
    }
    Ok(())
}

fn parse_method(s: &str) -> std::result::Result<SensingMethod, String> {
    match s {
        "fccr" => Ok(SensingMethod::Fccr),
        "dmd" => Ok(SensingMethod::Dmd),
        "ce" => Ok(SensingMethod::Ce),
        "df" => Ok(SensingMethod::Df),
        other => Err(format!("unknown sensing method {other:?}")),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
