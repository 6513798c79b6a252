//! Brownian-motion Monte Carlo with two perfectly absorbing bulges.
//!
//! Molecules are released at one transmitter at `t = 0` and advanced with
//! independent Gaussian increments of variance `2·D·dt` per axis until they
//! are absorbed or the horizon is reached. Molecules are split into fixed
//! blocks, each drawing from its own substream, so the records of a run are
//! identical however the blocks are scheduled.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::{self, Domain, SimRng};
use crate::topology::{LinkId, Point, Topology};
use crate::{Error, Result};

/// When a step is considered to have reached a bulge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AbsorptionCheck {
    /// Only the position at the end of each step is tested.
    #[default]
    EndOfStep,
    /// Additionally tests the straight segment between successive positions.
    Chord,
    /// Chord test plus the Brownian-bridge crossing probability
    /// `exp(-ρ0·ρ1 / (D·dt))` for steps that stay outside (ρ are the
    /// distances to the bulge surface at both ends).
    ChordBridge,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimParams {
    pub n_molecules: u64,
    /// Time step in seconds.
    pub dt: f64,
    /// Horizon in seconds.
    pub t_end: f64,
    pub seed: u64,
    /// Emitting transmitter, 1 or 2.
    pub emitter: u8,
    pub absorption: AbsorptionCheck,
    /// Whether the bulge of the other link absorbs. Disabling it leaves a
    /// single sphere, whose hitting CDF is known in closed form.
    pub cross_bulge: bool,
    /// Far-field acceleration. When set to `k`, a molecule at distance ρ from
    /// every bulge takes a single aggregated step of duration `τ` (a multiple
    /// of `dt`) such that `ρ ≥ k·√3·√(2Dτ)`; the chance that the path touches
    /// a bulge inside such a step is below `12·Q(k)`.
    pub far_field_sigmas: Option<f64>,
    /// Molecules per substream block.
    pub block_size: u64,
}

impl SimParams {
    pub const DEFAULT_DT: f64 = 1e-4;
    pub const DEFAULT_BLOCK: u64 = 4096;

    pub fn new(n_molecules: u64, t_end: f64, seed: u64, emitter: u8) -> Self {
        Self {
            n_molecules,
            dt: Self::DEFAULT_DT,
            t_end,
            seed,
            emitter,
            absorption: AbsorptionCheck::EndOfStep,
            cross_bulge: true,
            far_field_sigmas: None,
            block_size: Self::DEFAULT_BLOCK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::Config("t_end must be at least dt"));
        }
        if !(1..=2).contains(&self.emitter) {
            return Err(Error::Config("emitter must be 1 or 2"));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be positive"));
        }
        if let Some(k) = self.far_field_sigmas {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::Config("far_field_sigmas must be positive"));
            }
        }
        Ok(())
    }

    /// Number of whole steps in the horizon.
    pub fn n_steps(&self) -> u64 {
        libm::floor(self.t_end / self.dt + 1e-9) as u64
    }

    pub fn n_blocks(&self) -> u64 {
        self.n_molecules.div_ceil(self.block_size)
    }

    /// Molecule id range of `block`.
    pub fn block_range(&self, block: u64) -> core::ops::Range<u64> {
        let start = block * self.block_size;
        start..(start + self.block_size).min(self.n_molecules)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Absorbing bulge, 1 or 2.
    pub bulge: u8,
    /// End time of the absorbing step, in seconds.
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitRecord {
    pub molecule_id: u64,
    pub hit: Option<Hit>,
}

/// One Gaussian increment of variance `2·D·dt` per axis.
pub fn step<R: Rng + ?Sized>(position: Point, diffusion: f64, dt: f64, rng: &mut R) -> Point {
    let sigma = libm::sqrt(2.0 * diffusion * dt);
    displace(position, sigma, rng)
}

#[inline]
fn displace<R: Rng + ?Sized>(p: Point, sigma: f64, rng: &mut R) -> Point {
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let dz: f64 = rng.sample(StandardNormal);
    [p[0] + sigma * dx, p[1] + sigma * dy, p[2] + sigma * dz]
}

#[inline]
fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Whether the segment `a -> b` passes within `r` of `c`.
#[inline]
fn segment_hits(a: Point, b: Point, c: Point, r: f64) -> bool {
    let v = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    if vv == 0.0 {
        return dist2(a, c) <= r * r;
    }
    let s = ((w[0] * v[0] + w[1] * v[1] + w[2] * v[2]) / vv).clamp(0.0, 1.0);
    let p = [a[0] + s * v[0], a[1] + s * v[1], a[2] + s * v[2]];
    dist2(p, c) <= r * r
}

struct Walker {
    centers: [Point; 2],
    active: [bool; 2],
    r: f64,
    r2: f64,
    diffusion: f64,
    dt: f64,
    sigma: f64,
    n_steps: u64,
    origin: Point,
    absorption: AbsorptionCheck,
    // Squared reciprocal of k·√3 for the far-field step bound.
    far_field: Option<f64>,
}

impl Walker {
    fn new(topology: &Topology, params: &SimParams) -> Self {
        let r = topology.r_r();
        let own = usize::from(params.emitter) - 1;
        let mut active = [true; 2];
        if !params.cross_bulge {
            active[1 - own] = false;
        }
        Self {
            centers: [topology.rx_center(1), topology.rx_center(2)],
            active,
            r,
            r2: r * r,
            diffusion: topology.diffusion(),
            dt: params.dt,
            sigma: libm::sqrt(2.0 * topology.diffusion() * params.dt),
            n_steps: params.n_steps(),
            origin: topology.tx(params.emitter),
            absorption: params.absorption,
            far_field: params.far_field_sigmas.map(|k| 1.0 / (3.0 * k * k)),
        }
    }

    /// Distance from `p` to the nearest active bulge surface.
    #[inline]
    fn clearance(&self, p: Point) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..2 {
            if self.active[i] {
                best = best.min(libm::sqrt(dist2(p, self.centers[i])) - self.r);
            }
        }
        best
    }

    fn inside(&self, p: Point) -> Option<u8> {
        (0..2).find(|&i| self.active[i] && dist2(p, self.centers[i]) <= self.r2).map(|i| i as u8 + 1)
    }

    fn crossed(&self, a: Point, b: Point, rng: &mut SimRng) -> Option<u8> {
        if let Some(i) = self.inside(b) {
            return Some(i);
        }
        if self.absorption == AbsorptionCheck::EndOfStep {
            return None;
        }
        for i in 0..2 {
            if self.active[i] && segment_hits(a, b, self.centers[i], self.r) {
                return Some(i as u8 + 1);
            }
        }
        if self.absorption == AbsorptionCheck::ChordBridge {
            for i in 0..2 {
                if !self.active[i] {
                    continue;
                }
                let ra = libm::sqrt(dist2(a, self.centers[i])) - self.r;
                let rb = libm::sqrt(dist2(b, self.centers[i])) - self.r;
                let exponent = ra * rb / (self.diffusion * self.dt);
                // exp(-40) is below the resolution of a uniform draw.
                if exponent < 40.0 && rng.random::<f64>() < libm::exp(-exponent) {
                    return Some(i as u8 + 1);
                }
            }
        }
        None
    }

    fn walk(&self, rng: &mut SimRng) -> Option<Hit> {
        let mut pos = self.origin;
        let mut k: u64 = 0;
        while k < self.n_steps {
            if let Some(scale) = self.far_field {
                let rho = self.clearance(pos);
                let tau = rho * rho * scale / (2.0 * self.diffusion);
                let m = (libm::floor(tau / self.dt) as u64).min(self.n_steps - k);
                if m > 1 {
                    pos = displace(pos, self.sigma * libm::sqrt(m as f64), rng);
                    k += m;
                    if let Some(bulge) = self.inside(pos) {
                        return Some(Hit { bulge, time: k as f64 * self.dt });
                    }
                    continue;
                }
            }
            let next = displace(pos, self.sigma, rng);
            k += 1;
            if let Some(bulge) = self.crossed(pos, next, rng) {
                return Some(Hit { bulge, time: k as f64 * self.dt });
            }
            pos = next;
        }
        None
    }
}

/// Simulates one substream block and appends its records to `out`.
pub fn simulate_block(topology: &Topology, params: &SimParams, block: u64, out: &mut Vec<HitRecord>) -> Result<()> {
    params.validate()?;
    let walker = Walker::new(topology, params);
    let mut rng = rng::substream(params.seed, Domain::Particles, u64::from(params.emitter), block);
    for molecule_id in params.block_range(block) {
        let hit = walker.walk(&mut rng);
        out.push(HitRecord { molecule_id, hit });
    }
    Ok(())
}

/// Releases `n_molecules` at the emitter and follows each one until it is
/// absorbed or the horizon ends. Records are ordered by molecule id.
pub fn run_one_shot(topology: &Topology, params: &SimParams) -> Result<Vec<HitRecord>> {
    params.validate()?;
    let mut out = Vec::with_capacity(params.n_molecules as usize);
    for block in 0..params.n_blocks() {
        simulate_block(topology, params, block, &mut out)?;
    }
    Ok(out)
}

/// Absorption counts per bulge and molecules still free at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Conservation {
    pub absorbed: [u64; 2],
    pub free: u64,
}

impl Conservation {
    pub fn total(&self) -> u64 {
        self.absorbed[0] + self.absorbed[1] + self.free
    }
}

pub fn conservation(records: &[HitRecord]) -> Conservation {
    let mut c = Conservation::default();
    for r in records {
        match r.hit {
            Some(h) => c.absorbed[usize::from(h.bulge) - 1] += 1,
            None => c.free += 1,
        }
    }
    c
}

/// Fraction of emitted molecules absorbed by one bulge, on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    pub link: LinkId,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub n_total: u64,
}

/// Evenly spaced grid `0, t_end/n, ..., t_end` (`n + 1` points).
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

/// Splits the records of one emission by absorbing bulge and returns the
/// CDFs of links `(1, emitter)` and `(2, emitter)`.
pub fn estimate_cdf(records: &[HitRecord], emitter: u8, time_grid: &[f64]) -> Result<[EmpiricalCdf; 2]> {
    if !(1..=2).contains(&emitter) {
        return Err(Error::Domain("emitter must be 1 or 2"));
    }
    if time_grid.first().is_some_and(|&t| t < 0.0) || time_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("time grid must be sorted and non-negative"));
    }
    let n_total = records.len() as u64;
    let mut times: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for r in records {
        if let Some(h) = r.hit {
            times[usize::from(h.bulge) - 1].push(h.time);
        }
    }
    let build = |rx: u8, mut hits: Vec<f64>| {
        hits.sort_by(f64::total_cmp);
        let values = time_grid
            .iter()
            .map(|&t| {
                if n_total == 0 {
                    return 0.0;
                }
                // Hit times are multiples of dt; absorb rounding in the grid.
                let limit = t + 1e-12 * t.max(1.0);
                hits.partition_point(|&h| h <= limit) as f64 / n_total as f64
            })
            .collect();
        EmpiricalCdf { link: LinkId { rx, tx: emitter }, times: time_grid.to_vec(), values, n_total }
    };
    let [t1, t2] = times;
    Ok([build(1, t1), build(2, t2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn topo() -> Topology {
        Topology::new(2.0, 2.0, 4.0, 50.0).unwrap()
    }

    #[test]
    fn step_std_matches_diffusion() {
        let mut rng = substream(1, Domain::Oracle, 0, 0);
        let n = 100_000;
        let (d, dt) = (50.0, 1e-4);
        let target = 2.0 * d * dt;
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut quart = [0.0f64; 3];
        for _ in 0..n {
            let p = step([0.0; 3], d, dt, &mut rng);
            for a in 0..3 {
                sums[a] += p[a];
                sq[a] += p[a] * p[a];
                quart[a] += p[a] * p[a] * p[a] * p[a];
            }
        }
        for a in 0..3 {
            let mean = sums[a] / n as f64;
            let var = sq[a] / n as f64 - mean * mean;
            let m4 = quart[a] / n as f64;
            let se = libm::sqrt((m4 - var * var) / n as f64);
            assert!((var - target).abs() < 3.0 * se, "axis {a}: var {var} vs {target} (se {se})");
        }
    }

    #[test]
    fn zero_dt_step_is_identity() {
        let mut rng = substream(1, Domain::Oracle, 0, 0);
        assert_eq!(step([1.0, 2.0, 3.0], 50.0, 0.0, &mut rng), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn no_molecules_no_records() {
        let p = SimParams::new(0, 1.0, 3, 1);
        assert!(run_one_shot(&topo(), &p).unwrap().is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SimParams::new(10, 1.0, 3, 1);
        p.dt = 0.0;
        assert!(run_one_shot(&topo(), &p).is_err());
        let mut p = SimParams::new(10, 1e-5, 3, 1);
        p.dt = 1e-4;
        assert!(run_one_shot(&topo(), &p).is_err());
        let p = SimParams::new(10, 1.0, 3, 3);
        assert!(run_one_shot(&topo(), &p).is_err());
    }

    #[test]
    fn records_are_conserved_and_deterministic() {
        let mut p = SimParams::new(500, 0.5, 11, 1);
        p.block_size = 64;
        p.far_field_sigmas = Some(6.0);
        let a = run_one_shot(&topo(), &p).unwrap();
        let b = run_one_shot(&topo(), &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        assert!(a.iter().enumerate().all(|(i, r)| r.molecule_id == i as u64));
        let c = conservation(&a);
        assert_eq!(c.total(), 500);
        for r in &a {
            if let Some(h) = r.hit {
                assert!(h.time > 0.0 && h.time <= p.t_end + 1e-12);
            }
        }
    }

    #[test]
    fn blocks_compose_to_the_full_run() {
        let mut p = SimParams::new(300, 0.2, 5, 2);
        p.block_size = 100;
        let full = run_one_shot(&topo(), &p).unwrap();
        let mut parts = Vec::new();
        for b in (0..p.n_blocks()).rev() {
            let mut v = Vec::new();
            simulate_block(&topo(), &p, b, &mut v).unwrap();
            parts.push(v);
        }
        parts.reverse();
        assert_eq!(full, parts.concat());
    }

    #[test]
    fn single_sphere_mode_only_hits_own() {
        let mut p = SimParams::new(400, 1.0, 5, 2);
        p.cross_bulge = false;
        p.far_field_sigmas = Some(6.0);
        let recs = run_one_shot(&topo(), &p).unwrap();
        let c = conservation(&recs);
        assert_eq!(c.absorbed[0], 0);
        assert!(c.absorbed[1] > 0);
    }

    #[test]
    fn own_bulge_dominates() {
        let mut p = SimParams::new(2000, 2.0, 9, 1);
        p.far_field_sigmas = Some(6.0);
        let c = conservation(&run_one_shot(&topo(), &p).unwrap());
        assert!(c.absorbed[0] > 3 * c.absorbed[1], "{c:?}");
    }

    #[test]
    fn segment_test() {
        let c = [0.0, 0.0, 0.0];
        assert!(segment_hits([-2.0, 0.5, 0.0], [2.0, 0.5, 0.0], c, 1.0));
        assert!(!segment_hits([-2.0, 1.5, 0.0], [2.0, 1.5, 0.0], c, 1.0));
        assert!(!segment_hits([2.0, 0.0, 0.0], [3.0, 0.0, 0.0], c, 1.0));
        assert!(segment_hits([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], c, 1.0));
    }

    #[test]
    fn empty_cdf_is_zero() {
        let grid = uniform_grid(1.0, 10);
        let [a, b] = estimate_cdf(&[], 1, &grid).unwrap();
        assert!(a.values.iter().chain(&b.values).all(|&v| v == 0.0));
        let recs: Vec<_> = (0..5).map(|i| HitRecord { molecule_id: i, hit: None }).collect();
        let [a, _] = estimate_cdf(&recs, 1, &grid).unwrap();
        assert!(a.values.iter().all(|&v| v == 0.0));
        assert_eq!(a.n_total, 5);
    }

    #[test]
    fn early_hits_give_flat_cdf() {
        let grid = [0.5, 1.0, 2.0];
        let mut recs: Vec<_> =
            (0..3).map(|i| HitRecord { molecule_id: i, hit: Some(Hit { bulge: 1, time: 0.1 }) }).collect();
        recs.push(HitRecord { molecule_id: 3, hit: None });
        let [a, b] = estimate_cdf(&recs, 2, &grid).unwrap();
        assert_eq!(a.link, LinkId::L12);
        assert_eq!(b.link, LinkId::L22);
        assert_eq!(a.values, [0.75, 0.75, 0.75]);
        assert_eq!(b.values, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(estimate_cdf(&[], 1, &[1.0, 0.5]).is_err());
        assert!(estimate_cdf(&[], 1, &[-1.0, 0.5]).is_err());
    }

    #[test]
    fn cdf_is_monotone_and_starts_at_zero() {
        let mut p = SimParams::new(1000, 1.0, 2, 1);
        p.far_field_sigmas = Some(6.0);
        let recs = run_one_shot(&topo(), &p).unwrap();
        let grid = uniform_grid(1.0, 50);
        for cdf in estimate_cdf(&recs, 1, &grid).unwrap() {
            assert_eq!(cdf.values[0], 0.0);
            assert!(cdf.values.windows(2).all(|w| w[1] >= w[0]));
            assert!(cdf.values.iter().all(|&v| v <= 1.0));
        }
    }
}
