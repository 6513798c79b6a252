//! Interference moments, Gaussian approximations of the detector outputs and
//! MAP decision thresholds.
//!
//! A past emission `k` slots back contributes `Q·S[k]` molecules with
//! `Q ∈ {0, Q1}` drawn with prior `π1` and `S[k]` binomial in the tap. The
//! per-term moments are exact for that mixture, and terms from distinct
//! slots and links are independent, so the total interference moments are
//! plain sums (truncated at the channel memory).

use crate::channel_model::Taps;
use crate::{Error, Result};

/// Mean and variance of total interference at one symbol slot.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterferenceStats {
    pub mean: f64,
    pub variance: f64,
    /// 1-based slot index `n`.
    pub slot: usize,
    pub memory: usize,
}

/// Additive receiver noise `N(mean, variance)` in molecules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Noise {
    pub mean: f64,
    pub variance: f64,
}

/// Normalized detector-output moments conditioned on the sent bit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussApprox {
    pub mu0: f64,
    pub var0: f64,
    pub mu1: f64,
    pub var1: f64,
}

impl GaussApprox {
    /// `β = σ1² / σ0²`.
    pub fn beta(&self) -> f64 {
        self.var1 / self.var0
    }
}

/// Decision thresholds: decode 0 strictly between `lower` and `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdPair {
    pub lower: f64,
    pub upper: f64,
    /// Equal variances: a single threshold, `lower == upper`.
    pub degenerate: bool,
}

impl ThresholdPair {
    pub fn single(eta: f64) -> Self {
        Self { lower: eta, upper: eta, degenerate: true }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { lower: self.lower * factor, upper: self.upper * factor, degenerate: self.degenerate }
    }
}

/// Mean and variance of one ISI (or ILI) term `Q_x · S[k]`.
pub fn isi_term_stats(q1: f64, tap: f64, pi1: f64) -> (f64, f64) {
    let pi0 = 1.0 - pi1;
    let mean = pi1 * q1 * tap;
    let variance = pi1 * q1 * tap * (1.0 - tap) + pi0 * pi1 * q1 * q1 * tap * tap;
    (mean, variance)
}

/// Total interference moments at slot `n` (1-based). Own-link taps
/// `A_1..A_{n-1}` and cross-link taps `B_0..B_{n-1}` contribute, each
/// truncated at the memory of `taps`.
pub fn interference_stats(q1: f64, taps: &Taps, pi1: f64, n: usize) -> Result<InterferenceStats> {
    if n == 0 {
        return Err(Error::Domain("slot index is 1-based"));
    }
    let memory = taps.memory();
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut add = |tap: f64| {
        let (m, v) = isi_term_stats(q1, tap, pi1);
        mean += m;
        variance += v;
    };
    for &a in taps.own.iter().take((n - 1).min(memory) + 1).skip(1) {
        add(a);
    }
    for &b in taps.cross.iter().take(n.min(memory + 1)) {
        add(b);
    }
    Ok(InterferenceStats { mean, variance, slot: n, memory })
}

/// Moments of the practical zero-forcing output `y / (Q1·A_0)`.
///
/// A non-zero noise mean shifts both conditional means by `µ_n / (Q1·A_0)`.
pub fn gauss_approx_practical(q1: f64, a0: f64, stats: &InterferenceStats, noise: Noise) -> Result<GaussApprox> {
    let gain = q1 * a0;
    if !(gain > 0.0) {
        return Err(Error::Domain("Q1·A_0 must be positive"));
    }
    let mu0 = (stats.mean + noise.mean) / gain;
    let var0 = (stats.variance + noise.variance) / (gain * gain);
    Ok(GaussApprox { mu0, var0, mu1: 1.0 + mu0, var1: (1.0 - a0) / gain + var0 })
}

/// Moments of the adaptive output `y / Q1 = A_0 · y_practical`.
pub fn gauss_approx_adaptive(g: &GaussApprox, a0: f64) -> GaussApprox {
    GaussApprox { mu0: a0 * g.mu0, var0: a0 * a0 * g.var0, mu1: a0 * g.mu1, var1: a0 * a0 * g.var1 }
}

const BETA_TIE: f64 = 1e-12;

/// Intersections of the two conditional densities (equal priors).
///
/// With unit mean separation the roots are solved in closed form,
/// `η = µ0 + (-1 ± √(1 + (β-1)(1 + σ0²·β·ln β))) / (β-1)`, evaluated in a
/// cancellation-free arrangement. Any other separation goes through a
/// bracketed bisection of the log-density difference.
pub fn gaussian_intersection(g: &GaussApprox) -> Result<ThresholdPair> {
    check(g)?;
    let beta = g.beta();
    if beta < 1.0 - BETA_TIE {
        return Err(Error::Domain("σ1² < σ0²: inconsistent detector moments"));
    }
    if (beta - 1.0).abs() <= BETA_TIE {
        return Ok(ThresholdPair::single(0.5 * (g.mu0 + g.mu1)));
    }
    let separation = g.mu1 - g.mu0;
    if (separation - 1.0).abs() > 1e-12 {
        return numeric_intersection(g, 0.0);
    }
    let c = 1.0 + g.var0 * beta * libm::log(beta);
    let root = libm::sqrt(1.0 + (beta - 1.0) * c);
    // Roots of (β-1)x² + 2x - c = 0 with x = η - µ0.
    let plus = c / (1.0 + root);
    let minus = -(1.0 + root) / (beta - 1.0);
    Ok(ThresholdPair { lower: g.mu0 + minus, upper: g.mu0 + plus, degenerate: false })
}

/// MAP thresholds for prior `π1`. Equal priors reduce to
/// [`gaussian_intersection`]; otherwise the log prior ratio enters the
/// density equality and the roots are found numerically.
pub fn map_thresholds(g: &GaussApprox, pi1: f64) -> Result<ThresholdPair> {
    if !(pi1 > 0.0 && pi1 < 1.0) {
        return Err(Error::Domain("prior must lie strictly between 0 and 1"));
    }
    if pi1 == 0.5 {
        return gaussian_intersection(g);
    }
    check(g)?;
    if g.beta() < 1.0 - BETA_TIE {
        return Err(Error::Domain("σ1² < σ0²: inconsistent detector moments"));
    }
    numeric_intersection(g, libm::log((1.0 - pi1) / pi1))
}

fn check(g: &GaussApprox) -> Result<()> {
    if !(g.var0 > 0.0 && g.var1 > 0.0) {
        return Err(Error::Domain("variances must be positive"));
    }
    if !(g.mu1 > g.mu0) {
        return Err(Error::Domain("µ1 must exceed µ0"));
    }
    Ok(())
}

/// `ln(π0·φ0(η)) - ln(π1·φ1(η))` up to the prior term passed in as
/// `log_prior`.
fn log_ratio(g: &GaussApprox, log_prior: f64, eta: f64) -> f64 {
    let d0 = eta - g.mu0;
    let d1 = eta - g.mu1;
    log_prior - 0.5 * libm::log(g.var0) - d0 * d0 / (2.0 * g.var0) + 0.5 * libm::log(g.var1) + d1 * d1 / (2.0 * g.var1)
}

fn bisect(g: &GaussApprox, log_prior: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = log_ratio(g, log_prior, lo);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let f_mid = log_ratio(g, log_prior, mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
}

fn numeric_intersection(g: &GaussApprox, log_prior: f64) -> Result<ThresholdPair> {
    let sep = g.mu1 - g.mu0;
    if (g.beta() - 1.0).abs() <= BETA_TIE {
        // Linear in η.
        let var = 0.5 * (g.var0 + g.var1);
        return Ok(ThresholdPair::single(0.5 * (g.mu0 + g.mu1) + var * log_prior / sep));
    }
    // The log ratio is concave in η with its maximum at the vertex.
    let vertex = (g.mu0 * g.var1 - g.mu1 * g.var0) / (g.var1 - g.var0);
    if log_ratio(g, log_prior, vertex) <= 0.0 {
        // Bit 1 is more likely everywhere.
        return Ok(ThresholdPair { lower: vertex, upper: vertex, degenerate: false });
    }
    let scale = libm::sqrt(g.var1) + sep.abs() + vertex.abs();
    let bracket = |dir: f64| -> Result<f64> {
        let mut width = scale;
        for _ in 0..2000 {
            let edge = vertex + dir * width;
            if log_ratio(g, log_prior, edge) < 0.0 {
                return Ok(if dir < 0.0 {
                    bisect(g, log_prior, edge, vertex)
                } else {
                    bisect(g, log_prior, vertex, edge)
                });
            }
            width *= 2.0;
        }
        Err(Error::Domain("threshold root could not be bracketed"))
    };
    let lower = bracket(-1.0)?;
    let upper = bracket(1.0)?;
    Ok(ThresholdPair { lower, upper, degenerate: false })
}

/// Decision rule: 0 strictly between the thresholds, 1 otherwise. A
/// degenerate pair is a single threshold below which 0 is decoded.
pub fn decide(y: f64, t: &ThresholdPair) -> u8 {
    if t.degenerate {
        return u8::from(!(y < t.upper));
    }
    u8::from(!(t.lower < y && y < t.upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::{ChannelModel, ModelParams};
    use crate::rng::{substream, Domain};
    use crate::topology::Topology;
    use alloc::vec;
    use rand::Rng;
    use rand_distr::{Binomial, Distribution};

    fn selected_taps() -> Taps {
        ChannelModel::new(
            Topology::new(2.0, 2.0, 4.0, 50.0).unwrap(),
            ModelParams::new(0.9155, 0.5236, 0.5476).unwrap(),
            ModelParams::new(0.1534, 0.2780, 0.5363).unwrap(),
        )
        .taps(0.08, 4)
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn isi_term_edge_cases() {
        let (m, v) = isi_term_stats(500.0, 0.05, 1.0);
        assert_eq!(m, 25.0);
        assert!(rel(v, 500.0 * 0.05 * 0.95) < 1e-15);
        assert_eq!(isi_term_stats(500.0, 0.0, 0.5), (0.0, 0.0));
    }

    #[test]
    fn isi_term_matches_mixture_sampling() {
        let (q1, a, pi1) = (500u64, 0.05, 0.5);
        let (mean, var) = isi_term_stats(q1 as f64, a, pi1);
        assert_eq!(mean, 12.5);
        let mut rng = substream(42, Domain::Oracle, 1, 0);
        let bin = Binomial::new(q1, a).unwrap();
        let n = 1_000_000;
        let (mut s1, mut s2, mut s4) = (0.0f64, 0.0f64, 0.0f64);
        let xs: std::vec::Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < pi1 { bin.sample(&mut rng) as f64 } else { 0.0 }).collect();
        for &x in &xs {
            s1 += x;
        }
        let m = s1 / n as f64;
        for &x in &xs {
            let c = x - m;
            s2 += c * c;
            s4 += c * c * c * c;
        }
        let v = s2 / (n - 1) as f64;
        let se_mean = libm::sqrt(v / n as f64);
        let se_var = libm::sqrt((s4 / n as f64 - v * v) / n as f64);
        assert!((m - mean).abs() < 3.0 * se_mean, "mean {m} vs {mean}");
        assert!((v - var).abs() < 3.0 * se_var, "var {v} vs {var}");
    }

    #[test]
    fn first_slot_without_cross_link_is_quiet() {
        let taps = Taps::new(vec![0.3, 0.1, 0.05], vec![0.0, 0.02, 0.01]).unwrap();
        let s = interference_stats(500.0, &taps, 0.5, 1).unwrap();
        assert_eq!((s.mean, s.variance), (0.0, 0.0));
        assert!(interference_stats(500.0, &taps, 0.5, 0).is_err());
    }

    #[test]
    fn pure_isi_is_sum_of_terms() {
        let taps = Taps::new(vec![0.3, 0.1, 0.05, 0.02], vec![0.0; 4]).unwrap();
        for n in 1..8 {
            let s = interference_stats(400.0, &taps, 0.3, n).unwrap();
            let (mut m, mut v) = (0.0, 0.0);
            for k in 1..n.min(4) {
                let (a, b) = isi_term_stats(400.0, taps.own[k], 0.3);
                m += a;
                v += b;
            }
            assert!((s.mean - m).abs() < 1e-12 && (s.variance - v).abs() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn single_tap_moments_match_closed_form() {
        let taps = Taps::new(vec![0.3, 0.0, 0.07], vec![0.0; 3]).unwrap();
        let s = interference_stats(300.0, &taps, 0.5, 5).unwrap();
        assert_eq!((s.mean, s.variance), isi_term_stats(300.0, 0.07, 0.5));
    }

    #[test]
    fn practical_moments() {
        let taps = selected_taps();
        let a0 = taps.a0();
        let quiet = InterferenceStats { mean: 0.0, variance: 0.0, slot: 1, memory: 4 };
        let g = gauss_approx_practical(500.0, a0, &quiet, Noise::default()).unwrap();
        assert_eq!((g.mu0, g.var0, g.mu1), (0.0, 0.0, 1.0));
        assert!(rel(g.var1, (1.0 - a0) / (500.0 * a0)) < 1e-15);

        let stats = interference_stats(500.0, &taps, 0.5, 5).unwrap();
        let g = gauss_approx_practical(500.0, a0, &stats, Noise { mean: 0.0, variance: 10.0 }).unwrap();
        assert!(rel(g.var1 - g.var0, (1.0 - a0) / (500.0 * a0)) < 1e-12);
        assert!(rel(g.mu0, stats.mean / (500.0 * a0)) < 1e-15);
        assert!(gauss_approx_practical(500.0, 0.0, &stats, Noise::default()).is_err());
    }

    #[test]
    fn adaptive_scaling() {
        let g = GaussApprox { mu0: 0.3, var0: 0.02, mu1: 1.3, var1: 0.03 };
        assert_eq!(gauss_approx_adaptive(&g, 1.0), g);
        let a = gauss_approx_adaptive(&g, 0.29);
        assert!(rel(a.beta(), g.beta()) < 1e-14);
        let tp = gaussian_intersection(&g).unwrap();
        let ta = gaussian_intersection(&a).unwrap();
        assert!(rel(ta.lower, 0.29 * tp.lower) < 1e-12);
        assert!(rel(ta.upper, 0.29 * tp.upper) < 1e-12);
    }

    #[test]
    fn equal_variances_give_midpoint() {
        let g = GaussApprox { mu0: 0.25, var0: 0.04, mu1: 1.25, var1: 0.04 };
        let t = gaussian_intersection(&g).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.upper, 0.75);
        assert_eq!(t.lower, 0.75);
        assert_eq!(decide(0.7, &t), 0);
        assert_eq!(decide(0.75, &t), 1);
        assert_eq!(decide(0.8, &t), 1);
    }

    #[test]
    fn roots_zero_the_log_density_difference() {
        let g = GaussApprox { mu0: 0.4, var0: 0.01, mu1: 1.4, var1: 0.05 };
        let t = gaussian_intersection(&g).unwrap();
        assert!(t.lower < t.upper);
        for eta in [t.lower, t.upper] {
            assert!(log_ratio(&g, 0.0, eta).abs() < 1e-9, "{eta}");
        }
    }

    #[test]
    fn shrinking_variances_rejected() {
        let g = GaussApprox { mu0: 0.0, var0: 0.05, mu1: 1.0, var1: 0.01 };
        assert!(gaussian_intersection(&g).is_err());
        let g = GaussApprox { mu0: 0.0, var0: 0.0, mu1: 1.0, var1: 0.01 };
        assert!(gaussian_intersection(&g).is_err());
    }

    #[test]
    fn unequal_priors_shift_thresholds() {
        let g = GaussApprox { mu0: 0.2, var0: 0.02, mu1: 1.2, var1: 0.04 };
        let even = map_thresholds(&g, 0.5).unwrap();
        let rare_one = map_thresholds(&g, 0.2).unwrap();
        // Rarer ones widen the zero region.
        assert!(rare_one.upper > even.upper);
        assert!(rare_one.lower < even.lower);
        for eta in [rare_one.lower, rare_one.upper] {
            let lp = libm::log(0.8 / 0.2);
            assert!(log_ratio(&g, lp, eta).abs() < 1e-9);
        }
        assert!(map_thresholds(&g, 1.0).is_err());
    }

    #[test]
    fn numeric_route_agrees_with_closed_form() {
        let g = GaussApprox { mu0: 0.1, var0: 0.03, mu1: 1.1, var1: 0.07 };
        let closed = gaussian_intersection(&g).unwrap();
        let numeric = numeric_intersection(&g, 0.0).unwrap();
        assert!((closed.lower - numeric.lower).abs() < 1e-12);
        assert!((closed.upper - numeric.upper).abs() < 1e-12);
    }

    #[test]
    fn decision_rule() {
        let t = ThresholdPair { lower: -0.5, upper: 0.6, degenerate: false };
        assert_eq!(decide(0.0, &t), 0);
        assert_eq!(decide(0.7, &t), 1);
        assert_eq!(decide(-0.7, &t), 1);
        assert_eq!(decide(0.6, &t), 1);
        assert_eq!(decide(-0.5, &t), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn thresholds_zero_density_difference(mu0 in -2.0f64..2.0, s0 in 0.01f64..2.0, beta in 1.0001f64..50.0) {
                let g = GaussApprox { mu0, var0: s0 * s0, mu1: mu0 + 1.0, var1: beta * s0 * s0 };
                let t = gaussian_intersection(&g).unwrap();
                prop_assert!(t.lower <= t.upper);
                for eta in [t.lower, t.upper] {
                    let d0 = (eta - g.mu0) * (eta - g.mu0) / (2.0 * g.var0);
                    let scale = d0.max(1.0);
                    prop_assert!(log_ratio(&g, 0.0, eta).abs() <= 1e-9 * scale);
                }
            }

            #[test]
            fn adaptive_thresholds_are_scaled_practical(mu0 in 0.0f64..1.0, s0 in 0.02f64..0.5, beta in 1.01f64..20.0, a0 in 0.05f64..0.9) {
                let g = GaussApprox { mu0, var0: s0 * s0, mu1: mu0 + 1.0, var1: beta * s0 * s0 };
                let p = gaussian_intersection(&g).unwrap();
                let a = gaussian_intersection(&gauss_approx_adaptive(&g, a0)).unwrap();
                // Relative, floored at the unit mean separation (scaled by A_0)
                // so a root that happens to sit near zero stays well posed.
                prop_assert!((a.lower - a0 * p.lower).abs() <= 1e-12 * (a0 * p.lower).abs().max(a0));
                prop_assert!((a.upper - a0 * p.upper).abs() <= 1e-12 * (a0 * p.upper).abs().max(a0));
            }
        }
    }
}
