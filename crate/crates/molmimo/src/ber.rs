//! Link-level sweeps: BER of the four detectors and threshold tables.

use std::path::{Path, PathBuf};

use molmimo_core::channel_model::{ChannelModel, ModelParams, Taps};
use molmimo_core::link_sim::{
    self, AnalyticThresholds, BerResult, DetectorKind, DetectorSpec, LabeledOutputs, LinkConfig, Normalization,
    ReplicationOutcome, Rule, SweepResult,
};
use molmimo_core::rng::Domain;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Geometry, LinkBlock, SweepAxis, SweepPoint};
use crate::error::{HarnessError, Result};
use crate::fitting::load_model;
use crate::Harness;

/// Everything a sweep point needs before the replications run.
#[derive(Debug, Clone)]
pub struct PreparedPoint {
    pub point: SweepPoint,
    pub cfg: LinkConfig,
    pub taps: Taps,
    pub analytic: AnalyticThresholds,
    pub genie: SweepResult,
    pub specs: Vec<DetectorSpec>,
}

impl PreparedPoint {
    pub fn normalization(&self, q1_ref: f64) -> Normalization {
        Normalization { q1: self.cfg.q1 as f64, a0: self.taps.a0(), q1_ref }
    }
}

fn finite_pair(p: &molmimo_core::analysis::ThresholdPair) -> bool {
    p.lower.is_finite() && p.upper.is_finite()
}

pub fn prepare_point(
    model: &ChannelModel,
    link: &LinkBlock,
    point: SweepPoint,
    seed: u64,
    kinds: &[DetectorKind],
) -> Result<PreparedPoint> {
    let cfg = link.link_config(point.q1, point.t_s, seed)?;
    let taps = model.taps(point.t_s, cfg.memory)?;
    if !(taps.a0() > 0.0) {
        return Err(HarnessError::Numeric(format!("A_0 vanishes at t_s = {}", point.t_s)));
    }
    let analytic = link_sim::analytic_thresholds(&cfg, &taps)?;
    if !finite_pair(&analytic.practical) || !finite_pair(&analytic.adaptive) {
        return Err(HarnessError::Numeric(format!("MAP thresholds diverge at Q1 = {} t_s = {}", point.q1, point.t_s)));
    }
    let grid = link_sim::threshold_grid(link.genie_grid.lo, link.genie_grid.hi, link.genie_grid.step)?;
    let genie = link_sim::sweep_thresholds(&cfg, &taps, DetectorKind::GenieZf, link.q1_ref, &grid)?;
    let specs = kinds
        .iter()
        .map(|&kind| {
            let rule = match kind {
                DetectorKind::Fixed => Rule::Upper(link.eta_f),
                DetectorKind::Adaptive => Rule::Pair(analytic.adaptive),
                DetectorKind::PracticalZf => Rule::Pair(analytic.practical),
                DetectorKind::GenieZf => Rule::Upper(genie.best),
            };
            DetectorSpec::new(kind, rule)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedPoint { point, cfg, taps, analytic, genie, specs })
}

/// BER of every prepared point. Replications of all points run on the
/// current rayon pool; results come back in point order.
pub fn run_points(points: &[PreparedPoint], q1_ref: f64) -> Result<Vec<Vec<BerResult>>> {
    let jobs: Vec<(usize, u64)> =
        points.iter().enumerate().flat_map(|(i, p)| (0..p.cfg.replications as u64).map(move |r| (i, r))).collect();
    let outcomes: Vec<ReplicationOutcome> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let p = &points[i];
            link_sim::simulate_replication(&p.cfg, &p.taps, &p.specs, &p.normalization(q1_ref), rep)
        })
        .collect::<Result<_, _>>()?;
    let mut at = 0;
    Ok(points
        .iter()
        .map(|p| {
            let n = p.cfg.replications;
            let r = link_sim::aggregate(&p.cfg, &p.specs, &outcomes[at..at + n]);
            at += n;
            r
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub detector: DetectorKind,
    #[serde(rename = "Q1")]
    pub q1: u64,
    pub t_s: f64,
    pub ber_mean: f64,
    pub ber_std: f64,
    /// Counted bits per transmitter and replication.
    pub n_bits: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct PointMeta<'a> {
    axis: SweepAxis,
    q1: u64,
    t_s: f64,
    taps: &'a Taps,
    thresholds: &'a AnalyticThresholds,
    fixed_eta: f64,
    genie_eta: f64,
    genie_calibration_ber: f64,
    genie_fallbacks: u64,
}

#[derive(Debug, Serialize)]
struct Trend {
    detector: DetectorKind,
    ber_first: f64,
    ber_last: f64,
    /// `ber_last / ber_first` across the Q1 sweep.
    remaining: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BerMeta<'a> {
    geometry: Geometry,
    own: ModelParams,
    cross: ModelParams,
    link: &'a LinkBlock,
    points: Vec<PointMeta<'a>>,
    q1_trend: Vec<Trend>,
}

fn link_model(h: &Harness, params_path: &Path) -> Result<(Geometry, ChannelModel)> {
    h.config.link()?;
    h.config.sweep()?;
    let g = h.config.selected()?;
    Ok((g, load_model(h, g, params_path)?))
}

fn prepare_all(h: &Harness, model: &ChannelModel) -> Result<Vec<PreparedPoint>> {
    let link = h.config.link()?;
    let kinds = &h.config.sweep()?.detectors;
    if kinds.is_empty() {
        return Err(HarnessError::Config("sweep.detectors is empty".into()));
    }
    let points = h.config.sweep_points()?;
    h.install(|| points.par_iter().map(|&p| prepare_point(model, link, p, h.seed, kinds)).collect())
}

pub fn cmd_ber(h: &Harness, params_path: &Path) -> Result<Vec<PathBuf>> {
    let (geometry, model) = link_model(h, params_path)?;
    let link = h.config.link()?;
    let prepared = prepare_all(h, &model)?;
    let results = h.install(|| run_points(&prepared, link.q1_ref))?;

    let row = |r: &BerResult| BerRow {
        detector: r.detector,
        q1: r.q1,
        t_s: r.t_s,
        ber_mean: r.ber_mean,
        ber_std: r.ber_std,
        n_bits: link.n_bits,
        reps: r.replications,
        seed: h.seed,
    };
    let mut written = Vec::new();
    for (axis, file) in [(SweepAxis::Q1, "ber_q1.csv"), (SweepAxis::TS, "ber_ts.csv")] {
        let rows: Vec<BerRow> = prepared
            .iter()
            .zip(&results)
            .filter(|(p, _)| p.point.axis == axis)
            .flat_map(|(_, r)| r.iter().map(row))
            .collect();
        if !rows.is_empty() {
            written.push(h.out.write_csv(file, rows)?);
        }
    }

    let points = prepared
        .iter()
        .zip(&results)
        .map(|(p, r)| PointMeta {
            axis: p.point.axis,
            q1: p.point.q1,
            t_s: p.point.t_s,
            taps: &p.taps,
            thresholds: &p.analytic,
            fixed_eta: link.eta_f,
            genie_eta: p.genie.best,
            genie_calibration_ber: p.genie.best_ber,
            genie_fallbacks: r.iter().map(|b| b.genie_fallbacks).sum(),
        })
        .collect();
    let q1_runs: Vec<(&PreparedPoint, &Vec<BerResult>)> =
        prepared.iter().zip(&results).filter(|(p, _)| p.point.axis == SweepAxis::Q1).collect();
    let mut q1_trend = Vec::new();
    if let (Some(first), Some(last)) = (q1_runs.first(), q1_runs.last()) {
        for (a, b) in first.1.iter().zip(last.1.iter()) {
            q1_trend.push(Trend {
                detector: a.detector,
                ber_first: a.ber_mean,
                ber_last: b.ber_mean,
                remaining: (a.ber_mean > 0.0).then(|| b.ber_mean / a.ber_mean),
            });
        }
    }
    let meta = BerMeta { geometry, own: model.own, cross: model.cross, link, points, q1_trend };
    written.push(h.out.write_json("ber_meta.json", &meta)?);
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    #[serde(rename = "Q1")]
    pub q1: u64,
    pub t_s: f64,
    pub a0: f64,
    pub mu0: f64,
    pub var0: f64,
    pub mu1: f64,
    pub var1: f64,
    pub beta: f64,
    pub practical_lower: f64,
    pub practical_upper: f64,
    pub adaptive_lower: f64,
    pub adaptive_upper: f64,
    pub degenerate: bool,
    pub fixed_eta: f64,
    pub genie_eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub detector: DetectorKind,
    #[serde(rename = "Q1")]
    pub q1: u64,
    pub t_s: f64,
    pub eta: f64,
    pub ber: f64,
}

pub fn cmd_sweep_thresholds(h: &Harness, params_path: &Path) -> Result<Vec<PathBuf>> {
    let (_, model) = link_model(h, params_path)?;
    let link = h.config.link()?;
    let kinds = h.config.sweep()?.detectors.clone();
    let prepared = prepare_all(h, &model)?;
    let grid = link_sim::threshold_grid(link.genie_grid.lo, link.genie_grid.hi, link.genie_grid.step)?;

    let curves: Vec<Vec<SweepRow>> = h.install(|| {
        prepared
            .par_iter()
            .map(|p| {
                let trace = link_sim::simulate_trace(&p.cfg, &p.taps, Domain::Sweep, 0)?;
                let norm = p.normalization(link.q1_ref);
                Ok(kinds
                    .iter()
                    .flat_map(|&kind| {
                        let s = link_sim::sweep_outputs(&LabeledOutputs::new(&trace, kind, &norm), kind, &grid);
                        s.curve.into_iter().map(move |(eta, ber)| SweepRow {
                            detector: kind,
                            q1: p.cfg.q1,
                            t_s: p.cfg.t_s,
                            eta,
                            ber,
                        })
                    })
                    .collect())
            })
            .collect::<Result<_>>()
    })?;

    let table = prepared.iter().map(|p| {
        let g = &p.analytic.practical_moments;
        ThresholdRow {
            q1: p.cfg.q1,
            t_s: p.cfg.t_s,
            a0: p.taps.a0(),
            mu0: g.mu0,
            var0: g.var0,
            mu1: g.mu1,
            var1: g.var1,
            beta: g.beta(),
            practical_lower: p.analytic.practical.lower,
            practical_upper: p.analytic.practical.upper,
            adaptive_lower: p.analytic.adaptive.lower,
            adaptive_upper: p.analytic.adaptive.upper,
            degenerate: p.analytic.practical.degenerate,
            fixed_eta: link.eta_f,
            genie_eta: p.genie.best,
        }
    });
    Ok(vec![
        h.out.write_csv("thresholds.csv", table)?,
        h.out.write_csv("threshold_sweep.csv", curves.into_iter().flatten())?,
    ])
}
