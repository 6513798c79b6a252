//! Experiment harness around [`molmimo_core`]: TOML configuration, parallel
//! drivers and result files for the `molmimo` command.
//!
//! Pipelines compose through the output directory. `characterize` writes one
//! CDF file per topology, `fit` reads them and writes `fitted_params.json`,
//! and `sir`, `ber` and `sweep-thresholds` read that file (unless the config
//! carries a `[model]` block).
// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Test oracles keep published and high-precision digits verbatim.
#![cfg_attr(test, allow(clippy::approx_constant, clippy::excessive_precision))]

use std::path::PathBuf;

pub mod ber;
pub mod characterize;
pub mod config;
pub mod error;
pub mod fitting;
pub mod output;
pub mod sir;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};

use molmimo_core::link_sim::ChannelMode;
use output::{OutDir, Provenance};

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ChannelMode>,
    pub out: Option<PathBuf>,
    /// Worker threads; rayon's default when `None`.
    pub workers: Option<usize>,
}

/// A validated configuration bound to an output directory and thread pool.
pub struct Harness {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out: OutDir,
    pool: rayon::ThreadPool,
}

impl Harness {
    pub fn new(mut config: ExperimentConfig, overrides: &Overrides) -> Result<Self> {
        if let Some(s) = overrides.seed {
            config.seed = Some(s);
        }
        if let (Some(m), Some(link)) = (overrides.mode, config.link.as_mut()) {
            link.mode = m;
        }
        let seed = config.seed()?;
        if overrides.workers == Some(0) {
            return Err(HarnessError::Config("--workers must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(overrides.workers.unwrap_or(0))
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let root = overrides.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
        let out = OutDir::create(root, Provenance { config_sha256: config.digest(), seed })?;
        Ok(Self { config, seed, out, pool })
    }

    /// Runs `f` on this harness's thread pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }

    /// Path of the fitted parameter file in the output directory.
    pub fn params_path(&self) -> PathBuf {
        self.out.path(fitting::PARAMS_FILE)
    }
}
