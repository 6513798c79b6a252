//! Slot-level simulation of the 2x2 link, the four detectors and BER.
//!
//! Each transmitter sends on-off keyed bits: `Q1` molecules for a one and
//! `Q0` (normally zero) for a zero. Receiver `i` counts, in slot `n`,
//!
//! ```text
//! y_i[n] = signal + ISI + ILI + noise
//! ```
//!
//! where the signal is the current emission's arrivals through tap `A_0`,
//! ISI the arrivals from the own transmitter's previous `L` emissions
//! (`A_1..A_L`), ILI the arrivals from the other transmitter's current and
//! previous `L` emissions (`B_0..B_L`), and noise is Gaussian.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::analysis::{self, GaussApprox, Noise, ThresholdPair};
use crate::channel_model::{ChannelModel, Taps};
use crate::rng::{self, Domain, SimRng};
use crate::{Error, Result};

/// How molecule arrivals are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ChannelMode {
    /// Independent binomial per (emission, tap) pair.
    #[default]
    BinomialTaps,
    /// One multinomial per emission over every slot at both receivers plus
    /// "never arrives", so each molecule is counted at most once.
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkConfig {
    pub q1: u64,
    pub q0: u64,
    /// Symbol duration in seconds.
    pub t_s: f64,
    pub pi1: f64,
    pub sigma_n2: f64,
    pub mu_n: f64,
    /// Interference memory `L` in slots.
    pub memory: usize,
    /// Counted bits per transmitter and replication. `memory` warm-up slots
    /// precede them and are not counted.
    pub n_bits: usize,
    pub replications: usize,
    pub seed: u64,
    pub mode: ChannelMode,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q1 <= self.q0 {
            return Err(Error::Config("Q1 must exceed Q0"));
        }
        if !(0.0..=1.0).contains(&self.pi1) {
            return Err(Error::Config("pi1 must lie in [0, 1]"));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            return Err(Error::Config("t_s must be positive"));
        }
        if !(self.sigma_n2 >= 0.0 && self.sigma_n2.is_finite() && self.mu_n.is_finite()) {
            return Err(Error::Config("noise variance must be non-negative"));
        }
        if self.n_bits == 0 {
            return Err(Error::Config("n_bits must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1"));
        }
        Ok(())
    }

    pub fn noise(&self) -> Noise {
        Noise { mean: self.mu_n, variance: self.sigma_n2 }
    }

    fn q(&self, bit: u8) -> u64 {
        if bit == 1 {
            self.q1
        } else {
            self.q0
        }
    }
}

/// Received counts and channel state of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotState {
    /// Received molecules (plus noise) at Rx1, Rx2.
    pub y: [f64; 2],
    /// Realized own-link gain `N_ii ~ Binomial(Q1, A_0)` of this slot. It is
    /// the signal count whenever the bit is one.
    pub gain: [u64; 2],
    pub bits: [u8; 2],
    /// 0-based slot index.
    pub slot: usize,
}

/// Independent Bernoulli(π1) bit streams for both transmitters.
pub fn generate_bits<R: Rng + ?Sized>(n_bits: usize, pi1: f64, rng: &mut R) -> [Vec<u8>; 2] {
    let mut draw = || (0..n_bits).map(|_| u8::from(rng.random::<f64>() < pi1)).collect::<Vec<u8>>();
    let x1 = draw();
    let x2 = draw();
    [x1, x2]
}

/// Binomial samplers for every (tap, emitted count) pair of a link.
struct Samplers {
    own: [Vec<Binomial>; 2],
    cross: [Vec<Binomial>; 2],
    gain: Binomial,
}

impl Samplers {
    fn new(cfg: &LinkConfig, taps: &Taps) -> Result<Self> {
        let build = |q: u64, v: &[f64]| -> Result<Vec<Binomial>> {
            v.iter().map(|&p| Binomial::new(q, p).map_err(|_| Error::Domain("tap is not a probability"))).collect()
        };
        Ok(Self {
            own: [build(cfg.q0, &taps.own)?, build(cfg.q1, &taps.own)?],
            cross: [build(cfg.q0, &taps.cross)?, build(cfg.q1, &taps.cross)?],
            gain: Binomial::new(cfg.q1, taps.a0()).map_err(|_| Error::Domain("A_0 is not a probability"))?,
        })
    }
}

fn noise_sample<R: Rng + ?Sized>(cfg: &LinkConfig, rng: &mut R) -> f64 {
    if cfg.sigma_n2 == 0.0 {
        return cfg.mu_n;
    }
    let z: f64 = rng.sample(StandardNormal);
    cfg.mu_n + libm::sqrt(cfg.sigma_n2) * z
}

fn binomial_slot<R: Rng + ?Sized>(history: [&[u8]; 2], s: &Samplers, cfg: &LinkConfig, rng: &mut R) -> SlotState {
    let n = history[0].len() - 1;
    let memory = s.own[0].len() - 1;
    let mut y = [0.0; 2];
    let mut gain = [0; 2];
    let bits = [history[0][n], history[1][n]];
    for i in 0..2 {
        let own = history[i];
        let other = history[1 - i];
        gain[i] = s.gain.sample(rng);
        let mut count = match bits[i] {
            1 => gain[i],
            _ if cfg.q0 > 0 => s.own[0][0].sample(rng),
            _ => 0,
        };
        for k in 1..=memory.min(n) {
            let b = usize::from(own[n - k]);
            if cfg.q(own[n - k]) > 0 {
                count += s.own[b][k].sample(rng);
            }
        }
        for k in 0..=memory.min(n) {
            let b = usize::from(other[n - k]);
            if cfg.q(other[n - k]) > 0 {
                count += s.cross[b][k].sample(rng);
            }
        }
        y[i] = count as f64 + noise_sample(cfg, rng);
    }
    SlotState { y, gain, bits, slot: n }
}

/// One slot in binomial-taps mode. `history[i]` holds the bits of Tx `i+1`
/// up to and including the current slot.
pub fn channel_slot<R: Rng + ?Sized>(
    history: [&[u8]; 2],
    taps: &Taps,
    cfg: &LinkConfig,
    rng: &mut R,
) -> Result<SlotState> {
    if history[0].is_empty() || history[0].len() != history[1].len() {
        return Err(Error::Domain("bit histories must be non-empty and aligned"));
    }
    let s = Samplers::new(cfg, taps)?;
    Ok(binomial_slot(history, &s, cfg, rng))
}

/// Molecule accounting of the multinomial channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MoleculeLedger {
    pub emitted: u64,
    pub arrived: u64,
    pub lost: u64,
    pub pending: u64,
}

impl MoleculeLedger {
    pub fn balanced(&self) -> bool {
        self.emitted == self.arrived + self.lost + self.pending
    }
}

/// Stateful link channel in either mode.
pub struct LinkChannel<'a> {
    cfg: &'a LinkConfig,
    taps: &'a Taps,
    samplers: Samplers,
    history: [Vec<u8>; 2],
    // Multinomial mode: arrivals scheduled for future slots, ring-indexed.
    pending: [Vec<u64>; 2],
    ledger: MoleculeLedger,
}

impl<'a> LinkChannel<'a> {
    pub fn new(cfg: &'a LinkConfig, taps: &'a Taps) -> Result<Self> {
        cfg.validate()?;
        let len = taps.own.len();
        Ok(Self {
            cfg,
            taps,
            samplers: Samplers::new(cfg, taps)?,
            history: [Vec::new(), Vec::new()],
            pending: [vec![0; len], vec![0; len]],
            ledger: MoleculeLedger::default(),
        })
    }

    pub fn ledger(&self) -> MoleculeLedger {
        self.ledger
    }

    /// Emits `bits` and returns what both receivers count in this slot.
    pub fn next_slot<R: Rng + ?Sized>(&mut self, bits: [u8; 2], rng: &mut R) -> SlotState {
        self.history[0].push(bits[0]);
        self.history[1].push(bits[1]);
        match self.cfg.mode {
            ChannelMode::BinomialTaps => {
                binomial_slot([&self.history[0], &self.history[1]], &self.samplers, self.cfg, rng)
            }
            ChannelMode::Multinomial => self.multinomial_slot(bits, rng),
        }
    }

    fn multinomial_slot<R: Rng + ?Sized>(&mut self, bits: [u8; 2], rng: &mut R) -> SlotState {
        let n = self.history[0].len() - 1;
        let len = self.taps.own.len();
        let mut gain = [0; 2];
        for j in 0..2 {
            let q = self.cfg.q(bits[j]);
            let mut own_now = None;
            if q > 0 {
                self.ledger.emitted += q;
                let mut left = q;
                let mut mass = 1.0;
                let cells = self
                    .taps
                    .own
                    .iter()
                    .map(|&p| (j, p))
                    .enumerate()
                    .chain(self.taps.cross.iter().map(|&p| (1 - j, p)).enumerate());
                for (k, (rx, p)) in cells {
                    let c = conditional_binomial(left, p, mass, rng);
                    mass -= p;
                    left -= c;
                    self.pending[rx][(n + k) % len] += c;
                    self.ledger.pending += c;
                    if rx == j && k == 0 {
                        own_now = Some(c);
                    }
                }
                self.ledger.lost += left;
            }
            gain[j] = match (bits[j], own_now) {
                (1, Some(c)) => c,
                _ => self.samplers.gain.sample(rng),
            };
        }
        let mut y = [0.0; 2];
        for i in 0..2 {
            let arrived = core::mem::take(&mut self.pending[i][n % len]);
            self.ledger.pending -= arrived;
            self.ledger.arrived += arrived;
            y[i] = arrived as f64 + noise_sample(self.cfg, rng);
        }
        SlotState { y, gain, bits, slot: n }
    }
}

/// Draws `Binomial(n, p / mass)`, the next cell of a sequential multinomial.
fn conditional_binomial<R: Rng + ?Sized>(n: u64, p: f64, mass: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 || mass <= 0.0 {
        return 0;
    }
    let q = (p / mass).min(1.0);
    Binomial::new(n, q).map(|b| b.sample(rng)).unwrap_or(0)
}

/// The four detection schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DetectorKind {
    /// Predetermined threshold on `y / Q1_ref`; knows neither Q1 nor t_s.
    Fixed,
    /// `y / Q1` against MAP thresholds.
    Adaptive,
    /// `y / (Q1·A_0)`, zero forcing with the mean channel.
    PracticalZf,
    /// `y / N_ii`, zero forcing with the realized channel.
    GenieZf,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] =
        [DetectorKind::Fixed, DetectorKind::Adaptive, DetectorKind::PracticalZf, DetectorKind::GenieZf];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Fixed => "fixed",
            DetectorKind::Adaptive => "adaptive",
            DetectorKind::PracticalZf => "practical-zf",
            DetectorKind::GenieZf => "genie-zf",
        }
    }
}

/// Threshold rule applied to a normalized detector output.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Rule {
    /// Decode 1 iff the output is strictly above the threshold.
    Upper(f64),
    /// Decode 0 strictly between the pair, 1 otherwise.
    Pair(ThresholdPair),
}

impl Rule {
    pub fn decide(&self, y: f64) -> u8 {
        match self {
            Rule::Upper(eta) => u8::from(y > *eta),
            Rule::Pair(p) => analysis::decide(y, p),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Rule::Upper(eta) => eta.is_finite(),
            Rule::Pair(p) => p.lower.is_finite() && p.upper.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub rule: Rule,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind, rule: Rule) -> Result<Self> {
        if !rule.is_finite() {
            return Err(Error::Domain("thresholds must be finite"));
        }
        Ok(Self { kind, rule })
    }
}

/// What the receivers know for normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub q1: f64,
    pub a0: f64,
    /// Protocol reference count used by the fixed detector in place of Q1.
    pub q1_ref: f64,
}

impl Normalization {
    pub const DEFAULT_Q1_REF: f64 = 350.0;

    /// Mean channel gain `H̄(i,i) = Q1·A_0`.
    pub fn hbar(&self) -> f64 {
        self.q1 * self.a0
    }
}

/// Fixed threshold `η_f` used with [`Normalization::DEFAULT_Q1_REF`].
pub const DEFAULT_ETA_F: f64 = 0.2;

/// Normalized output of detector `kind` at receiver `rx` (0-based), and
/// whether the genie fell back to the mean channel because `N_ii = 0`.
pub fn detector_output(kind: DetectorKind, s: &SlotState, norm: &Normalization, rx: usize) -> (f64, bool) {
    let y = s.y[rx];
    match kind {
        DetectorKind::Fixed => (y / norm.q1_ref, false),
        DetectorKind::Adaptive => (y / norm.q1, false),
        DetectorKind::PracticalZf => (y / norm.hbar(), false),
        DetectorKind::GenieZf if s.gain[rx] == 0 => (y / norm.hbar(), true),
        DetectorKind::GenieZf => (y / s.gain[rx] as f64, false),
    }
}

pub fn detect_fixed(s: &SlotState, rule: &Rule, q1_ref: f64) -> [u8; 2] {
    core::array::from_fn(|i| rule.decide(s.y[i] / q1_ref))
}

pub fn detect_adaptive(s: &SlotState, q1: f64, thresholds: &ThresholdPair) -> [u8; 2] {
    core::array::from_fn(|i| analysis::decide(s.y[i] / q1, thresholds))
}

pub fn detect_practical(s: &SlotState, hbar: f64, thresholds: &ThresholdPair) -> [u8; 2] {
    core::array::from_fn(|i| analysis::decide(s.y[i] / hbar, thresholds))
}

/// Genie-aided zero forcing; also returns how many receivers fell back to
/// the mean channel.
pub fn detect_genie(s: &SlotState, rule: &Rule, hbar: f64) -> ([u8; 2], u32) {
    let mut fallbacks = 0;
    let bits = core::array::from_fn(|i| {
        let y = if s.gain[i] == 0 {
            fallbacks += 1;
            s.y[i] / hbar
        } else {
            s.y[i] / s.gain[i] as f64
        };
        rule.decide(y)
    });
    (bits, fallbacks)
}

pub fn detect(spec: &DetectorSpec, s: &SlotState, norm: &Normalization) -> ([u8; 2], u32) {
    match (spec.kind, &spec.rule) {
        (DetectorKind::Fixed, rule) => (detect_fixed(s, rule, norm.q1_ref), 0),
        (DetectorKind::Adaptive, Rule::Pair(p)) => (detect_adaptive(s, norm.q1, p), 0),
        (DetectorKind::PracticalZf, Rule::Pair(p)) => (detect_practical(s, norm.hbar(), p), 0),
        (DetectorKind::GenieZf, rule) => detect_genie(s, rule, norm.hbar()),
        (kind, rule) => {
            let bits = core::array::from_fn(|i| rule.decide(detector_output(kind, s, norm, i).0));
            (bits, 0)
        }
    }
}

/// Analytic steady-state moments and MAP thresholds for the adaptive and
/// practical detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnalyticThresholds {
    pub practical_moments: GaussApprox,
    pub practical: ThresholdPair,
    pub adaptive: ThresholdPair,
}

pub fn analytic_thresholds(cfg: &LinkConfig, taps: &Taps) -> Result<AnalyticThresholds> {
    let q1 = cfg.q1 as f64;
    let a0 = taps.a0();
    let stats = analysis::interference_stats(q1, taps, cfg.pi1, taps.memory() + 1)?;
    let g = analysis::gauss_approx_practical(q1, a0, &stats, cfg.noise())?;
    let practical = analysis::map_thresholds(&g, cfg.pi1)?;
    let adaptive = analysis::map_thresholds(&analysis::gauss_approx_adaptive(&g, a0), cfg.pi1)?;
    Ok(AnalyticThresholds { practical_moments: g, practical, adaptive })
}

/// Simulates `memory` warm-up slots followed by `n_bits` counted slots on
/// substream `index` of `domain`, returning the counted slots.
pub fn simulate_trace(cfg: &LinkConfig, taps: &Taps, domain: Domain, index: u64) -> Result<Vec<SlotState>> {
    let mut rng = rng::substream(cfg.seed, domain, 0, index);
    simulate_with(cfg, taps, &mut rng)
}

fn simulate_with(cfg: &LinkConfig, taps: &Taps, rng: &mut SimRng) -> Result<Vec<SlotState>> {
    if taps.memory() < cfg.memory {
        return Err(Error::Config("taps shorter than the configured memory"));
    }
    let truncated;
    let taps = if taps.memory() > cfg.memory {
        truncated = Taps { own: taps.own[..=cfg.memory].to_vec(), cross: taps.cross[..=cfg.memory].to_vec() };
        &truncated
    } else {
        taps
    };
    let total = cfg.memory + cfg.n_bits;
    let [x1, x2] = generate_bits(total, cfg.pi1, rng);
    let mut channel = LinkChannel::new(cfg, taps)?;
    let mut out = Vec::with_capacity(cfg.n_bits);
    for n in 0..total {
        let s = channel.next_slot([x1[n], x2[n]], rng);
        if n >= cfg.memory {
            out.push(s);
        }
    }
    Ok(out)
}

/// Error counts of one replication, per detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplicationOutcome {
    pub errors: Vec<u64>,
    /// Counted decisions (both links).
    pub decisions: u64,
    pub genie_fallbacks: u64,
}

/// Runs replication `rep` and scores every detector on the same trace.
pub fn simulate_replication(
    cfg: &LinkConfig,
    taps: &Taps,
    detectors: &[DetectorSpec],
    norm: &Normalization,
    rep: u64,
) -> Result<ReplicationOutcome> {
    let trace = simulate_trace(cfg, taps, Domain::Link, rep)?;
    let mut errors = vec![0u64; detectors.len()];
    let mut genie_fallbacks = 0;
    for s in &trace {
        for (e, spec) in errors.iter_mut().zip(detectors) {
            let (bits, fb) = detect(spec, s, norm);
            *e += u64::from(bits[0] != s.bits[0]) + u64::from(bits[1] != s.bits[1]);
            genie_fallbacks += u64::from(fb);
        }
    }
    Ok(ReplicationOutcome { errors, decisions: 2 * trace.len() as u64, genie_fallbacks })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BerResult {
    pub detector: DetectorKind,
    pub q1: u64,
    pub t_s: f64,
    pub ber_mean: f64,
    /// Sample standard deviation across replications (0 for one).
    pub ber_std: f64,
    /// Counted decisions over all replications and both links.
    pub bits: u64,
    pub replications: usize,
    pub genie_fallbacks: u64,
}

/// Reduces replication outcomes (in replication order) to one result per
/// detector.
pub fn aggregate(cfg: &LinkConfig, detectors: &[DetectorSpec], outcomes: &[ReplicationOutcome]) -> Vec<BerResult> {
    detectors
        .iter()
        .enumerate()
        .map(|(d, spec)| {
            let rates: Vec<f64> = outcomes.iter().map(|o| o.errors[d] as f64 / o.decisions as f64).collect();
            let n = rates.len() as f64;
            let mean = rates.iter().sum::<f64>() / n;
            let std = if rates.len() > 1 {
                libm::sqrt(rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0))
            } else {
                0.0
            };
            let fallbacks =
                if spec.kind == DetectorKind::GenieZf { outcomes.iter().map(|o| o.genie_fallbacks).sum() } else { 0 };
            BerResult {
                detector: spec.kind,
                q1: cfg.q1,
                t_s: cfg.t_s,
                ber_mean: mean,
                ber_std: std,
                bits: outcomes.iter().map(|o| o.decisions).sum(),
                replications: outcomes.len(),
                genie_fallbacks: fallbacks,
            }
        })
        .collect()
}

/// Sequential BER of several detectors on common traces.
pub fn run_ber_many(cfg: &LinkConfig, detectors: &[DetectorSpec], taps: &Taps, q1_ref: f64) -> Result<Vec<BerResult>> {
    cfg.validate()?;
    let norm = Normalization { q1: cfg.q1 as f64, a0: taps.a0(), q1_ref };
    let outcomes = (0..cfg.replications as u64)
        .map(|rep| simulate_replication(cfg, taps, detectors, &norm, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(cfg, detectors, &outcomes))
}

/// BER of one detector over `cfg.replications` seeded runs.
pub fn run_ber(cfg: &LinkConfig, spec: &DetectorSpec, model: &ChannelModel) -> Result<BerResult> {
    let taps = model.taps(cfg.t_s, cfg.memory)?;
    let mut r = run_ber_many(cfg, core::slice::from_ref(spec), &taps, Normalization::DEFAULT_Q1_REF)?;
    Ok(r.remove(0))
}

/// `lo, lo + step, ...` up to and including `hi`.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step > 0.0 && hi >= lo) {
        return Err(Error::Domain("threshold grid must be finite and increasing"));
    }
    let n = libm::floor((hi - lo) / step + 1e-9) as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Detector outputs of a trace, split by sent bit and sorted.
pub struct LabeledOutputs {
    zeros: Vec<f64>,
    ones: Vec<f64>,
}

impl LabeledOutputs {
    pub fn new(trace: &[SlotState], kind: DetectorKind, norm: &Normalization) -> Self {
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for s in trace {
            for rx in 0..2 {
                let (y, _) = detector_output(kind, s, norm, rx);
                if s.bits[rx] == 1 {
                    ones.push(y);
                } else {
                    zeros.push(y);
                }
            }
        }
        zeros.sort_by(f64::total_cmp);
        ones.sort_by(f64::total_cmp);
        Self { zeros, ones }
    }

    pub fn len(&self) -> usize {
        self.zeros.len() + self.ones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Error rate of the rule "1 iff output > eta".
    pub fn upper_ber(&self, eta: f64) -> f64 {
        let missed = self.ones.partition_point(|&y| y <= eta);
        let false_alarms = self.zeros.len() - self.zeros.partition_point(|&y| y <= eta);
        (missed + false_alarms) as f64 / self.len() as f64
    }

    pub fn ber(&self, rule: &Rule) -> f64 {
        let errs = self.ones.iter().filter(|&&y| rule.decide(y) != 1).count()
            + self.zeros.iter().filter(|&&y| rule.decide(y) != 0).count();
        errs as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: DetectorKind,
    /// Center of the first run of grid points attaining the minimum.
    pub best: f64,
    pub best_ber: f64,
    pub curve: Vec<(f64, f64)>,
}

/// Evaluates the single-threshold rule for every grid point on one shared
/// trace (stream 0 of the sweep domain).
pub fn sweep_thresholds(
    cfg: &LinkConfig,
    taps: &Taps,
    kind: DetectorKind,
    q1_ref: f64,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::Domain("threshold grid must be finite and non-empty"));
    }
    cfg.validate()?;
    let trace = simulate_trace(cfg, taps, Domain::Sweep, 0)?;
    let norm = Normalization { q1: cfg.q1 as f64, a0: taps.a0(), q1_ref };
    Ok(sweep_outputs(&LabeledOutputs::new(&trace, kind, &norm), kind, grid))
}

pub fn sweep_outputs(outputs: &LabeledOutputs, kind: DetectorKind, grid: &[f64]) -> SweepResult {
    let curve: Vec<(f64, f64)> = grid.iter().map(|&eta| (eta, outputs.upper_ber(eta))).collect();
    let best_ber = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let first = curve.iter().position(|c| c.1 == best_ber).unwrap_or(0);
    let run = curve[first..].iter().take_while(|c| c.1 == best_ber).count();
    let best = curve[first + (run - 1) / 2].0;
    SweepResult { kind, best, best_ber, curve }
}
