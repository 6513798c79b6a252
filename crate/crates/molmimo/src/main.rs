use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use molmimo::{ber, characterize, fitting, sir, ExperimentConfig, Harness, Overrides, Result};
use molmimo_core::link_sim::ChannelMode;

#[derive(Parser)]
#[command(name = "molmimo", version, about = "2x2 molecular MIMO experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Arrival sampling of the link simulation.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Particle simulation of every topology; writes per-topology CDFs.
    Characterize,
    /// Fits the channel model to the CDFs in `--cdf-dir` (default: the output directory).
    Fit {
        #[arg(long)]
        cdf_dir: Option<PathBuf>,
    },
    /// SIR curves from the fitted models.
    Sir,
    /// BER of the four detectors over the Q1 and t_s sweeps.
    Ber,
    /// Analytic threshold table and empirical threshold sweeps.
    SweepThresholds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    BinomialTaps,
    Multinomial,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let path = cli.config.ok_or_else(|| molmimo::HarnessError::Config("--config is required".into()))?;
    let config = ExperimentConfig::load(&path)?;
    let overrides = Overrides {
        seed: cli.seed,
        mode: cli.mode.map(|m| match m {
            Mode::BinomialTaps => ChannelMode::BinomialTaps,
            Mode::Multinomial => ChannelMode::Multinomial,
        }),
        out: cli.out,
        workers: cli.workers,
    };
    let h = Harness::new(config, &overrides)?;
    let params = h.params_path();
    match cli.command {
        Command::Characterize => characterize::cmd_characterize(&h),
        Command::Fit { cdf_dir } => {
            let dir = cdf_dir.unwrap_or_else(|| h.out.root().to_path_buf());
            fitting::cmd_fit(&h, &dir)
        }
        Command::Sir => sir::cmd_sir(&h, &params),
        Command::Ber => ber::cmd_ber(&h, &params),
        Command::SweepThresholds => ber::cmd_sweep_thresholds(&h, &params),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
