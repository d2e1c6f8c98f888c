use clap::{Parser, Subcommand, ValueEnum};
use ladderspec::spectra::SpectrumMode;
use ladderspec_cli::commands;
use ladderspec_cli::config::RunConfig;
use ladderspec_cli::fault::{CliError, CliResult};
use std::path::PathBuf;

/// Doppler-averaged ladder spectroscopy: spectra, velocity maps, error
/// signals, noise fits, and principal-number scans.
#[derive(Parser)]
#[command(name = "ladderspec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,

    /// Worker threads (defaults to one per core). Results are identical for
    /// any value.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Override one config value: section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Lower-leg sweep: transparency window in the probe transmission.
    Eit,
    /// Upper-leg sweep: two-photon absorption doublet.
    Tpat,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a transmission spectrum and its feature metrics.
    Spectrum {
        /// Run configuration file.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Which spectrum to compute.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Also render an SVG plot.
        #[arg(long)]
        plot: bool,
    },
    /// Compute a velocity-resolved absorption map (data only).
    Map {
        /// Run configuration file.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// Compute the modulation-transfer error signal and lock metrics.
    Errorsig {
        /// Run configuration file.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Also render an SVG plot.
        #[arg(long)]
        plot: bool,
    },
    /// Fit a noise model to a two-column x,y CSV file.
    FitNoise {
        /// Measured data file (one header line, then x,y rows).
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Noise model: od (optical depth) or waist.
        #[arg(long, value_name = "NAME")]
        model: String,
        /// Starting parameters (comma-separated; data-driven if omitted).
        #[arg(long, value_delimiter = ',', value_name = "P1,P2,..")]
        init: Option<Vec<f64>>,
    },
    /// Repeat the spectra across principal quantum numbers.
    ScanN {
        /// Run configuration file.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Also render SVG plots for any per-n spectra.
        #[arg(long)]
        plot: bool,
    },
}

fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    match &cli.command {
        Command::Spectrum { config, mode, plot } => {
            let rc = RunConfig::load(config, &cli.set)?;
            let mode = match mode {
                ModeArg::Eit => SpectrumMode::Eit,
                ModeArg::Tpat => SpectrumMode::Tpat,
            };
            commands::cmd_spectrum(&rc, mode, &cli.out, *plot || rc.plot)
        }
        Command::Map { config } => {
            let rc = RunConfig::load(config, &cli.set)?;
            commands::cmd_map(&rc, &cli.out)
        }
        Command::Errorsig { config, plot } => {
            let rc = RunConfig::load(config, &cli.set)?;
            commands::cmd_errorsig(&rc, &cli.out, *plot || rc.plot)
        }
        Command::FitNoise { data, model, init } => {
            if !cli.set.is_empty() {
                return Err(CliError::usage("--set has no effect on fit-noise (no config file)"));
            }
            commands::cmd_fit_noise(data, model, init.clone(), &cli.out)
        }
        Command::ScanN { config, plot } => {
            let rc = RunConfig::load(config, &cli.set)?;
            commands::cmd_scan_n(&rc, &cli.out, *plot || rc.plot)
        }
    }
}

fn main() {
    let cli = Cli::parse();

    // A bounded local pool keeps --threads honest; the outputs are identical
    // for any thread count, so this only trades wall time.
    let result = match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build();
            match pool {
                Ok(pool) => pool.install(|| run(&cli)),
                Err(e) => Err(CliError::usage(format!("--threads: {e}"))),
            }
        }
        None => run(&cli),
    };

    match result {
        Ok(files) => {
            for file in files {
                println!("wrote {}", file.display());
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
