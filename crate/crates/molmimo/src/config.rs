//! Experiment configuration (TOML). Unknown keys are rejected.
//!
//! ```toml
//! seed = 20240611
//!
//! [topology]
//! d = [2.0, 4.0]
//! h = [1.0, 2.0]
//! r_r = [2.0, 4.0]
//! diffusion = 50.0
//! selected = { d = 2.0, h = 2.0, r_r = 4.0 }
//!
//! [particle]
//! n_molecules = 20000
//!
//! [fit]
//!
//! [link]
//! sigma_n2 = 10.0
//!
//! [sweep]
//! q1 = [100, 200, 300, 400, 500, 600]
//! t_s = [0.05, 0.07, 0.09, 0.11, 0.13]
//! ```
//!
//! Every field not shown has a default; see the block types below.

use std::path::Path;

use molmimo_core::channel_model::ModelParams;
use molmimo_core::fit::FitOptions;
use molmimo_core::link_sim::{ChannelMode, DetectorKind, LinkConfig, Normalization, DEFAULT_ETA_F};
use molmimo_core::particle_sim::{AbsorptionCheck, SimParams};
use molmimo_core::topology::{Reference, Topology};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Required, either here or on the command line.
    pub seed: Option<u64>,
    pub topology: TopologyBlock,
    pub particle: Option<ParticleBlock>,
    pub fit: Option<FitBlock>,
    pub link: Option<LinkBlock>,
    pub sweep: Option<SweepBlock>,
    /// Channel parameters for the selected topology. When present, `sir`,
    /// `ber` and `sweep-thresholds` use them instead of `fitted_params.json`.
    pub model: Option<ModelBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub d: f64,
    pub h: f64,
    pub r_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyBlock {
    pub d: Vec<f64>,
    pub h: Vec<f64>,
    pub r_r: Vec<f64>,
    #[serde(default = "default_diffusion")]
    pub diffusion: f64,
    #[serde(default)]
    pub d_reference: Reference,
    #[serde(default)]
    pub h_reference: Reference,
    /// Operating point of the link experiments; the first grid point when
    /// omitted.
    pub selected: Option<Geometry>,
}

fn default_diffusion() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleBlock {
    pub n_molecules: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Intervals of the uniform CDF grid over `[0, t_end]`.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_absorption")]
    pub absorption: AbsorptionCheck,
    /// Far-field step aggregation in standard deviations; 0 disables it.
    #[serde(default = "default_far_field")]
    pub far_field_sigmas: f64,
    #[serde(default = "default_block")]
    pub block_size: u64,
    #[serde(default = "yes")]
    pub cross_bulge: bool,
    /// Simulate emissions from both transmitters. With `false` only Tx1
    /// emits and the cross link is read from Rx2.
    #[serde(default = "yes")]
    pub both_emitters: bool,
    /// Also write per-molecule hit records.
    #[serde(default)]
    pub write_hits: bool,
}

fn default_dt() -> f64 {
    SimParams::DEFAULT_DT
}
fn default_t_end() -> f64 {
    10.0
}
fn default_grid_points() -> usize {
    500
}
fn default_absorption() -> AbsorptionCheck {
    AbsorptionCheck::ChordBridge
}
fn default_far_field() -> f64 {
    6.0
}
fn default_block() -> u64 {
    SimParams::DEFAULT_BLOCK
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    #[serde(default = "default_initial")]
    pub initial: [f64; 3],
    #[serde(default = "default_lower")]
    pub lower: [f64; 3],
    #[serde(default = "default_upper")]
    pub upper: [f64; 3],
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    /// Fit all four links instead of reusing (1,1) for (2,2) and (1,2) for
    /// (2,1).
    #[serde(default)]
    pub independent_links: bool,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            initial: default_initial(),
            lower: default_lower(),
            upper: default_upper(),
            max_iterations: default_iterations(),
            step_tolerance: default_step_tolerance(),
            independent_links: false,
        }
    }
}

fn default_initial() -> [f64; 3] {
    let p = FitOptions::default().initial;
    [p.b1, p.b2, p.b3]
}
fn default_lower() -> [f64; 3] {
    FitOptions::default().lower
}
fn default_upper() -> [f64; 3] {
    FitOptions::default().upper
}
fn default_iterations() -> usize {
    FitOptions::default().max_iterations
}
fn default_step_tolerance() -> f64 {
    FitOptions::default().step_tolerance
}

impl FitBlock {
    pub fn options(&self) -> Result<FitOptions> {
        let [b1, b2, b3] = self.initial;
        let initial = ModelParams::new(b1, b2, b3)?;
        for i in 0..3 {
            if !(self.lower[i] <= self.initial[i] && self.initial[i] <= self.upper[i]) {
                return Err(HarnessError::Config("fit bounds must bracket the initial guess".into()));
            }
        }
        if self.max_iterations == 0 || !(self.step_tolerance > 0.0) {
            return Err(HarnessError::Config("fit needs a positive iteration budget and tolerance".into()));
        }
        Ok(FitOptions {
            initial,
            lower: self.lower,
            upper: self.upper,
            max_iterations: self.max_iterations,
            step_tolerance: self.step_tolerance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBlock {
    /// Operating point used by `sweep-thresholds` when no sweep lists are
    /// given.
    #[serde(default = "default_q1")]
    pub q1: u64,
    #[serde(default = "default_t_s")]
    pub t_s: f64,
    #[serde(default)]
    pub q0: u64,
    #[serde(default = "default_pi1")]
    pub pi1: f64,
    #[serde(default = "default_sigma_n2")]
    pub sigma_n2: f64,
    #[serde(default)]
    pub mu_n: f64,
    #[serde(default = "default_memory")]
    pub memory: usize,
    #[serde(default = "default_n_bits")]
    pub n_bits: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub mode: ChannelMode,
    #[serde(default = "default_q1_ref")]
    pub q1_ref: f64,
    #[serde(default = "default_eta_f")]
    pub eta_f: f64,
    /// Threshold grid of the genie calibration and of `sweep-thresholds`.
    #[serde(default = "default_genie_grid")]
    pub genie_grid: GridSpec,
}

fn default_q1() -> u64 {
    500
}
fn default_t_s() -> f64 {
    0.08
}
fn default_pi1() -> f64 {
    0.5
}
fn default_sigma_n2() -> f64 {
    10.0
}
fn default_memory() -> usize {
    4
}
fn default_n_bits() -> usize {
    5000
}
fn default_replications() -> usize {
    5
}
fn default_q1_ref() -> f64 {
    Normalization::DEFAULT_Q1_REF
}
fn default_eta_f() -> f64 {
    DEFAULT_ETA_F
}
fn default_genie_grid() -> GridSpec {
    GridSpec { lo: -1.0, hi: 2.0, step: 0.01 }
}

impl LinkBlock {
    pub fn link_config(&self, q1: u64, t_s: f64, seed: u64) -> Result<LinkConfig> {
        let cfg = LinkConfig {
            q1,
            q0: self.q0,
            t_s,
            pi1: self.pi1,
            sigma_n2: self.sigma_n2,
            mu_n: self.mu_n,
            memory: self.memory,
            n_bits: self.n_bits,
            replications: self.replications,
            seed,
            mode: self.mode,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Q1 values of the Q1 sweep.
    #[serde(default)]
    pub q1: Vec<u64>,
    /// Symbol duration held fixed in the Q1 sweep.
    #[serde(default = "default_t_s")]
    pub q1_sweep_t_s: f64,
    /// Symbol durations of the t_s sweep.
    #[serde(default)]
    pub t_s: Vec<f64>,
    /// Q1 held fixed in the t_s sweep.
    #[serde(default = "default_q1")]
    pub t_s_sweep_q1: u64,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    /// Symbol durations at which `sir` evaluates every topology.
    #[serde(default = "default_sir_grid")]
    pub sir_t_s: GridSpec,
}

fn default_detectors() -> Vec<DetectorKind> {
    DetectorKind::ALL.to_vec()
}
fn default_sir_grid() -> GridSpec {
    GridSpec { lo: 0.01, hi: 0.2, step: 0.01 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub own: ModelParams,
    pub cross: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out")]
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_out() -> String {
    "out".into()
}

/// Which sweep a link-level point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Q1,
    TS,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Q1 => "q1",
            SweepAxis::TS => "t_s",
        }
    }
}

/// One (Q1, t_s) operating point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub q1: u64,
    pub t_s: f64,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| HarnessError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// SHA-256 of the effective configuration, overrides included.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn particle(&self) -> Result<&ParticleBlock> {
        self.particle.as_ref().ok_or_else(|| missing("particle"))
    }

    pub fn link(&self) -> Result<&LinkBlock> {
        self.link.as_ref().ok_or_else(|| missing("link"))
    }

    pub fn sweep(&self) -> Result<&SweepBlock> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep"))
    }

    pub fn fit_block(&self) -> Result<&FitBlock> {
        self.fit.as_ref().ok_or_else(|| missing("fit"))
    }

    /// Topology grid in ascending (d, h, r_r) order.
    pub fn geometries(&self) -> Result<Vec<Geometry>> {
        let t = &self.topology;
        let d = sorted(&t.d, "topology.d")?;
        let h = sorted(&t.h, "topology.h")?;
        let r = sorted(&t.r_r, "topology.r_r")?;
        let mut out = Vec::with_capacity(d.len() * h.len() * r.len());
        for &d in &d {
            for &h in &h {
                for &r_r in &r {
                    out.push(Geometry { d, h, r_r });
                }
            }
        }
        Ok(out)
    }

    pub fn selected(&self) -> Result<Geometry> {
        match self.topology.selected {
            Some(g) => Ok(g),
            None => Ok(self.geometries()?[0]),
        }
    }

    pub fn build_topology(&self, g: Geometry) -> Result<Topology> {
        let t = &self.topology;
        Ok(Topology::with_reference(g.d, g.h, g.r_r, t.diffusion, t.d_reference, t.h_reference)?)
    }

    /// Points of both sweeps: the Q1 sweep first, each sorted by its key.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let s = self.sweep()?;
        let mut q1 = s.q1.clone();
        q1.sort_unstable();
        q1.dedup();
        let mut ts = s.t_s.clone();
        if ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(HarnessError::Config("sweep.t_s values must be positive".into()));
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let mut out: Vec<SweepPoint> =
            q1.iter().map(|&q1| SweepPoint { axis: SweepAxis::Q1, q1, t_s: s.q1_sweep_t_s }).collect();
        out.extend(ts.iter().map(|&t_s| SweepPoint { axis: SweepAxis::TS, q1: s.t_s_sweep_q1, t_s }));
        if out.is_empty() {
            let l = self.link()?;
            out.push(SweepPoint { axis: SweepAxis::Q1, q1: l.q1, t_s: l.t_s });
        }
        Ok(out)
    }
}

fn missing(block: &str) -> HarnessError {
    HarnessError::Config(format!("[{block}] block is required for this command"))
}

fn sorted(values: &[f64], name: &str) -> Result<Vec<f64>> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::Config(format!("{name} must be a non-empty list of finite numbers")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}
