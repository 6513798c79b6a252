//! Particle characterization of every topology in the grid.

use std::path::PathBuf;

use molmimo_core::particle_sim::{self, Conservation, EmpiricalCdf, HitRecord, SimParams};
use molmimo_core::topology::Topology;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Geometry, ParticleBlock};
use crate::error::Result;
use crate::output::geometry_tag;
use crate::Harness;

/// One row of a CDF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub link: String,
    pub t: f64,
    #[serde(rename = "F_hat")]
    pub f_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HitRow {
    emitter: u8,
    molecule_id: u64,
    bulge: Option<u8>,
    time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmitterSummary {
    pub emitter: u8,
    pub absorbed_rx1: u64,
    pub absorbed_rx2: u64,
    pub free: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub d: f64,
    pub h: f64,
    pub r_r: f64,
    pub cdf_file: String,
    pub emitters: Vec<EmitterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizeSummary {
    pub particle: ParticleBlock,
    pub topologies: Vec<TopologySummary>,
}

pub fn sim_params(p: &ParticleBlock, seed: u64, emitter: u8) -> SimParams {
    SimParams {
        n_molecules: p.n_molecules,
        dt: p.dt,
        t_end: p.t_end,
        seed,
        emitter,
        absorption: p.absorption,
        cross_bulge: p.cross_bulge,
        far_field_sigmas: (p.far_field_sigmas > 0.0).then_some(p.far_field_sigmas),
        block_size: p.block_size,
    }
}

/// Same records as [`particle_sim::run_one_shot`], with blocks spread over
/// the current rayon pool.
pub fn run_parallel(topology: &Topology, params: &SimParams) -> Result<Vec<HitRecord>> {
    params.validate()?;
    let blocks = (0..params.n_blocks())
        .into_par_iter()
        .map(|b| {
            let mut out = Vec::with_capacity(params.block_size as usize);
            particle_sim::simulate_block(topology, params, b, &mut out).map(|_| out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(blocks.concat())
}

/// Hit records of one emitter.
pub type EmitterHits = (u8, Vec<HitRecord>);

/// Empirical CDFs of every simulated link, ordered by link id.
pub fn characterize_topology(
    topology: &Topology,
    p: &ParticleBlock,
    seed: u64,
) -> Result<(Vec<EmpiricalCdf>, Vec<EmitterHits>)> {
    let grid = particle_sim::uniform_grid(p.t_end, p.grid_points.max(1));
    let emitters: &[u8] = if p.both_emitters { &[1, 2] } else { &[1] };
    let mut cdfs = Vec::new();
    let mut records = Vec::new();
    for &e in emitters {
        let recs = run_parallel(topology, &sim_params(p, seed, e))?;
        cdfs.extend(particle_sim::estimate_cdf(&recs, e, &grid)?);
        records.push((e, recs));
    }
    cdfs.sort_by_key(|c| c.link);
    Ok((cdfs, records))
}

pub fn cdf_file_name(g: Geometry) -> String {
    format!("cdf_{}.csv", geometry_tag(g.d, g.h, g.r_r))
}

fn cdf_rows(cdfs: &[EmpiricalCdf]) -> impl Iterator<Item = CdfRow> + '_ {
    cdfs.iter().flat_map(|c| {
        c.times.iter().zip(&c.values).map(move |(&t, &f)| CdfRow { link: c.link.to_string(), t, f_hat: f })
    })
}

fn hit_rows(records: &[(u8, Vec<HitRecord>)]) -> impl Iterator<Item = HitRow> + '_ {
    records.iter().flat_map(|(e, recs)| {
        recs.iter().map(move |r| HitRow {
            emitter: *e,
            molecule_id: r.molecule_id,
            bulge: r.hit.map(|h| h.bulge),
            time: r.hit.map(|h| h.time),
        })
    })
}

pub fn cmd_characterize(h: &Harness) -> Result<Vec<PathBuf>> {
    let p = h.config.particle()?.clone();
    if p.grid_points == 0 {
        return Err(crate::error::HarnessError::Config("particle.grid_points must be positive".into()));
    }
    if p.n_molecules == 0 {
        log::warn!("n_molecules = 0: CDF files will be identically zero");
    }
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for g in h.config.geometries()? {
        let topo = h.config.build_topology(g)?;
        let (cdfs, records) = h.install(|| characterize_topology(&topo, &p, h.seed))?;
        let name = cdf_file_name(g);
        written.push(h.out.write_csv(&name, cdf_rows(&cdfs))?);
        if p.write_hits {
            let hits = format!("hits_{}.csv", geometry_tag(g.d, g.h, g.r_r));
            written.push(h.out.write_csv(&hits, hit_rows(&records))?);
        }
        let emitters = records
            .iter()
            .map(|(e, recs)| {
                let Conservation { absorbed, free } = particle_sim::conservation(recs);
                log::info!(
                    "{}: Tx{e} absorbed {}/{} at Rx1/Rx2, {free} free of {}",
                    geometry_tag(g.d, g.h, g.r_r),
                    absorbed[0],
                    absorbed[1],
                    recs.len()
                );
                EmitterSummary { emitter: *e, absorbed_rx1: absorbed[0], absorbed_rx2: absorbed[1], free }
            })
            .collect();
        summaries.push(TopologySummary { d: g.d, h: g.h, r_r: g.r_r, cdf_file: name, emitters });
    }
    written.push(h.out.write_json("characterize.json", &CharacterizeSummary { particle: p, topologies: summaries })?);
    Ok(written)
}
