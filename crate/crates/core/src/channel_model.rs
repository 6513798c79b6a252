//! Hitting-probability models, slot taps and SIR.
//!
//! A single absorbing sphere of radius `r_r` at surface distance `d` from a
//! point source captures
//!
//! ```text
//! F(t) = r_r / (r_r + d) · erfc(d / √(4·D·t))
//! ```
//!
//! of the emitted molecules by time `t`. With two bulges the own and cross
//! links are described by the three-parameter family
//!
//! ```text
//! F(t) = b1·r_r / (d + r_r) · erfc(d / ((4·D)^b2 · t^b3))
//! ```
//!
//! fitted to simulated CDFs, which reduces to the single-sphere form at
//! `(b1, b2, b3) = (1, 0.5, 0.5)`.

use alloc::vec::Vec;

use crate::topology::{LinkId, Topology};
use crate::{Error, Result};

/// Shape parameters of the fitted hitting CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelParams {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl ModelParams {
    /// Parameters that reproduce the single-sphere closed form.
    pub const SISO: ModelParams = ModelParams { b1: 1.0, b2: 0.5, b3: 0.5 };

    pub const B1_MAX: f64 = 1.5;

    pub fn new(b1: f64, b2: f64, b3: f64) -> Result<Self> {
        let p = Self { b1, b2, b3 };
        p.validate()?;
        Ok(p)
    }

    /// Fitting bounds: `b1 ∈ (0, 1.5]`, `b2, b3 ∈ (0, 1)`.
    pub fn validate(&self) -> Result<()> {
        if !(self.b1 > 0.0 && self.b1 <= Self::B1_MAX) {
            return Err(Error::Domain("b1 must lie in (0, 1.5]"));
        }
        if !(self.b2 > 0.0 && self.b2 < 1.0 && self.b3 > 0.0 && self.b3 < 1.0) {
            return Err(Error::Domain("b2 and b3 must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Single-sphere hitting CDF.
pub fn f_siso(t: f64, r_r: f64, d: f64, diffusion: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain("time must be non-negative"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(r_r / (r_r + d) * libm::erfc(d / libm::sqrt(4.0 * diffusion * t)))
}

/// Fitted-family hitting CDF. Takes `b1` as given, so it also evaluates
/// `b1 = 0` (a link that never delivers).
pub fn f_model(t: f64, params: &ModelParams, r_r: f64, d: f64, diffusion: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain("time must be non-negative"));
    }
    Ok(model_value(t, params, r_r, d, diffusion))
}

#[inline]
pub(crate) fn model_value(t: f64, p: &ModelParams, r_r: f64, d: f64, diffusion: f64) -> f64 {
    if t == f64::INFINITY {
        return model_limit(p, r_r, d);
    }
    if t <= 0.0 {
        return 0.0;
    }
    let arg = d / (libm::pow(4.0 * diffusion, p.b2) * libm::pow(t, p.b3));
    p.b1 * r_r / (d + r_r) * libm::erfc(arg)
}

/// `lim t→∞` of the fitted family.
#[inline]
pub fn model_limit(p: &ModelParams, r_r: f64, d: f64) -> f64 {
    p.b1 * r_r / (d + r_r)
}

/// Per-slot arrival probabilities for a memory of `L` slots:
/// `own[k] = A_k`, `cross[k] = B_k`, `k = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Taps {
    pub own: Vec<f64>,
    pub cross: Vec<f64>,
}

impl Taps {
    pub fn new(own: Vec<f64>, cross: Vec<f64>) -> Result<Self> {
        if own.is_empty() || own.len() != cross.len() {
            return Err(Error::Domain("tap vectors must be non-empty and of equal length"));
        }
        let valid = |v: &[f64]| v.iter().all(|&p| (0.0..=1.0).contains(&p)) && v.iter().sum::<f64>() <= 1.0 + 1e-12;
        if !valid(&own) || !valid(&cross) || own.iter().sum::<f64>() + cross.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Domain("taps must be probabilities with total mass at most one"));
        }
        Ok(Self { own, cross })
    }

    /// Memory `L`.
    pub fn memory(&self) -> usize {
        self.own.len() - 1
    }

    /// `A_0`.
    pub fn a0(&self) -> f64 {
        self.own[0]
    }
}

/// Fitted channel of a symmetric topology: one parameter set for the own
/// links (11, 22) and one for the cross links (12, 21).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub topology: Topology,
    pub own: ModelParams,
    pub cross: ModelParams,
}

impl ChannelModel {
    pub fn new(topology: Topology, own: ModelParams, cross: ModelParams) -> Self {
        Self { topology, own, cross }
    }

    pub fn params(&self, link: LinkId) -> &ModelParams {
        if link.is_own() {
            &self.own
        } else {
            &self.cross
        }
    }

    /// `F_ij(t)`; `t = ∞` gives the analytic limit.
    pub fn cdf(&self, link: LinkId, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain("time must be non-negative"));
        }
        let topo = &self.topology;
        Ok(model_value(t, self.params(link), topo.r_r(), topo.d(), topo.diffusion()))
    }

    pub fn limit(&self, link: LinkId) -> f64 {
        model_limit(self.params(link), self.topology.r_r(), self.topology.d())
    }

    /// `F_ij(t1, t2) = F_ij(t2) - F_ij(t1)`.
    pub fn window(&self, link: LinkId, t1: f64, t2: f64) -> Result<f64> {
        Ok(self.cdf(link, t2)? - self.cdf(link, t1)?)
    }

    /// Slot taps `A_k = F_own((k+1)·t_s) - F_own(k·t_s)` and likewise `B_k`
    /// on the cross link, for `k = 0..=memory`.
    pub fn taps(&self, t_s: f64, memory: usize) -> Result<Taps> {
        if !(t_s > 0.0 && t_s.is_finite()) {
            return Err(Error::Domain("symbol duration must be positive"));
        }
        let slot = |link: LinkId| -> Vec<f64> {
            (0..=memory)
                .map(|k| {
                    let lo = self.cdf(link, k as f64 * t_s).unwrap_or(0.0);
                    let hi = self.cdf(link, (k + 1) as f64 * t_s).unwrap_or(0.0);
                    (hi - lo).max(0.0)
                })
                .collect()
        };
        Ok(Taps { own: slot(LinkId::L11), cross: slot(LinkId::L12) })
    }

    /// Current-slot own arrivals over the own tail plus the whole cross
    /// arrival mass, for a one-shot emission. Infinite when the denominator
    /// vanishes.
    pub fn sir(&self, t_s: f64) -> Result<f64> {
        if !(t_s > 0.0 && t_s.is_finite()) {
            return Err(Error::Domain("symbol duration must be positive"));
        }
        let signal = self.cdf(LinkId::L11, t_s)?;
        let tail = self.limit(LinkId::L11) - signal;
        let interference = tail.max(0.0) + self.limit(LinkId::L12);
        if interference <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok(signal / interference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from a 50-digit evaluation of erfc (mpmath).
    const ERFC_HALF: f64 = 0.47950012218695346232;
    const SISO_008: f64 = 0.31966674812463564154; // r=4, d=2, D=50, t=0.08
    const SISO_10: f64 = 0.63304731410073672556; // r=4, d=2, D=50, t=10

    fn selected() -> ChannelModel {
        ChannelModel::new(
            Topology::new(2.0, 2.0, 4.0, 50.0).unwrap(),
            ModelParams::new(0.9155, 0.5236, 0.5476).unwrap(),
            ModelParams::new(0.1534, 0.2780, 0.5363).unwrap(),
        )
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn erfc_backend_accuracy() {
        assert!(rel(libm::erfc(0.5), ERFC_HALF) < 1e-14);
    }

    #[test]
    fn siso_limits_and_reference_values() {
        assert_eq!(f_siso(0.0, 4.0, 2.0, 50.0).unwrap(), 0.0);
        let inf = f_siso(1e30, 4.0, 2.0, 50.0).unwrap();
        assert!(rel(inf, 4.0 / 6.0) < 1e-12);
        assert!(rel(f_siso(0.08, 4.0, 2.0, 50.0).unwrap(), SISO_008) < 1e-12);
        assert!(rel(f_siso(10.0, 4.0, 2.0, 50.0).unwrap(), SISO_10) < 1e-12);
        assert!(f_siso(-1.0, 4.0, 2.0, 50.0).is_err());
        assert!(f_model(-1.0, &ModelParams::SISO, 4.0, 2.0, 50.0).is_err());
    }

    #[test]
    fn model_limits() {
        let m = selected();
        assert!(rel(m.limit(LinkId::L11), 0.9155 * 4.0 / 6.0) < 1e-15);
        assert!(rel(m.limit(LinkId::L21), 0.1534 * 4.0 / 6.0) < 1e-15);
        assert!(rel(m.cdf(LinkId::L22, f64::INFINITY).unwrap(), 0.610_333_333_333_333_3) < 1e-15);
        assert!(rel(m.cdf(LinkId::L12, 1e40).unwrap(), 0.102_266_666_666_666_67) < 1e-9);
        assert_eq!(m.cdf(LinkId::L11, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn params_bounds() {
        assert!(ModelParams::new(0.0, 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.6, 0.5, 0.5).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5).is_err());
        assert!(ModelParams::new(1.0, 0.5, 0.0).is_err());
        assert!(ModelParams::new(1.5, 0.999, 0.001).is_ok());
    }

    #[test]
    fn taps_start_and_telescope() {
        let m = selected();
        let t_s = 0.08;
        let taps = m.taps(t_s, 4).unwrap();
        assert_eq!(taps.memory(), 4);
        assert_eq!(taps.a0(), m.cdf(LinkId::L11, t_s).unwrap());
        let sum: f64 = taps.own.iter().sum();
        let want = m.cdf(LinkId::L11, 5.0 * t_s).unwrap();
        assert!((sum - want).abs() < 1e-15);
        let sum_b: f64 = taps.cross.iter().sum();
        assert!(sum_b <= m.limit(LinkId::L12));
        assert!(taps.own.windows(2).skip(1).all(|w| w[1] < w[0]));
        assert!(Taps::new(taps.own.clone(), taps.cross.clone()).is_ok());
    }

    #[test]
    fn taps_match_integrated_density() {
        // Independent route: midpoint integration of a finite-difference
        // density of the model CDF over each slot.
        let m = selected();
        let t_s = 0.08;
        let taps = m.taps(t_s, 4).unwrap();
        let n = 20_000;
        for (k, &a) in taps.own.iter().enumerate() {
            let h = t_s / n as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let t = k as f64 * t_s + (i as f64 + 0.5) * h;
                let e = h * 1e-3;
                let dens =
                    (m.cdf(LinkId::L11, t + e).unwrap() - m.cdf(LinkId::L11, (t - e).max(0.0)).unwrap()) / (2.0 * e);
                acc += dens * h;
            }
            assert!((acc - a).abs() < 1e-6, "k={k}: {acc} vs {a}");
        }
    }

    #[test]
    fn taps_reject_bad_inputs() {
        assert!(selected().taps(0.0, 4).is_err());
        assert!(Taps::new(alloc::vec![0.5], alloc::vec![]).is_err());
        assert!(Taps::new(alloc::vec![0.7], alloc::vec![0.4]).is_err());
    }

    #[test]
    fn sir_is_infinite_without_interference() {
        // Cross link off, own CDF already saturated at t_s.
        let topo = Topology::new(2.0, 2.0, 4.0, 50.0).unwrap();
        let m = ChannelModel::new(topo, ModelParams::SISO, ModelParams { b1: 0.0, b2: 0.5, b3: 0.5 });
        let sir = m.sir(1e300).unwrap();
        assert!(sir.is_infinite() || sir > 1e100);
        assert!(m.sir(-1.0).is_err());
    }

    #[test]
    fn sir_grows_with_symbol_duration() {
        // Longer slots capture more of the own pulse and leave a smaller tail.
        let m = selected();
        let grid: Vec<f64> = (0..=95).map(|i| 0.05 + 0.01 * i as f64).collect();
        let sirs: Vec<f64> = grid.iter().map(|&t| m.sir(t).unwrap()).collect();
        assert!(sirs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sir_falls_with_distance_at_fixed_shape() {
        let make = |d: f64| {
            ChannelModel::new(
                Topology::new(d, 2.0, 4.0, 50.0).unwrap(),
                ModelParams::SISO,
                ModelParams::new(0.15, 0.3, 0.54).unwrap(),
            )
        };
        for &t in &[0.05, 0.2, 1.0] {
            assert!(make(2.0).sir(t).unwrap() > make(4.0).sir(t).unwrap());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn siso_parameters_reduce_to_closed_form(t in 1e-4f64..100.0, d in 0.5f64..10.0, r in 0.5f64..10.0, diff in 1.0f64..200.0) {
                let a = f_model(t, &ModelParams::SISO, r, d, diff).unwrap();
                let b = f_siso(t, r, d, diff).unwrap();
                prop_assert!(a == b || ((a - b) / b).abs() <= 1e-12);
            }

            #[test]
            fn model_is_monotone_probability(b1 in 0.01f64..1.5, b2 in 0.01f64..0.99, b3 in 0.01f64..0.99, t in 0.0f64..50.0, dt in 0.0f64..5.0) {
                let p = ModelParams { b1, b2, b3 };
                let a = f_model(t, &p, 4.0, 2.0, 50.0).unwrap();
                let b = f_model(t + dt, &p, 4.0, 2.0, 50.0).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b >= a);
            }
        }
    }
}
