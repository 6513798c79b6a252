//! Box-constrained Levenberg–Marquardt fit of the three-parameter hitting
//! CDF to an empirical curve.
//!
//! Residuals are unweighted on the grid of the empirical CDF. The Jacobian is
//! analytic: with `u = d / ((4D)^b2 · t^b3)` and `c = r_r / (d + r_r)`,
//!
//! ```text
//! ∂F/∂b1 = c·erfc(u)
//! ∂F/∂b2 = c·b1·(2/√π)·e^(-u²)·u·ln(4D)
//! ∂F/∂b3 = c·b1·(2/√π)·e^(-u²)·u·ln(t)
//! ```

use crate::channel_model::{model_value, ModelParams};
use crate::particle_sim::EmpiricalCdf;
use crate::{Error, Result};

const FRAC_2_SQRT_PI: f64 = core::f64::consts::FRAC_2_SQRT_PI;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitOptions {
    pub initial: ModelParams,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub max_iterations: usize,
    /// Converged when a step changes every parameter by less than this,
    /// relative to its magnitude.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            initial: ModelParams::SISO,
            lower: [1e-9, 1e-9, 1e-9],
            upper: [ModelParams::B1_MAX, 1.0 - 1e-9, 1.0 - 1e-9],
            max_iterations: 500,
            step_tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitReport {
    pub params: ModelParams,
    pub rmse: f64,
    pub iterations: usize,
    /// False when the iteration budget ran out; `params` is then the best
    /// point seen.
    pub converged: bool,
    pub n_points: usize,
}

/// Minimum number of grid points (excluding `t = 0`) a fit needs.
pub const MIN_POINTS: usize = 30;

/// Fits `(b1, b2, b3)` to an empirical CDF.
pub fn fit(cdf: &EmpiricalCdf, r_r: f64, d: f64, diffusion: f64, options: &FitOptions) -> Result<FitReport> {
    fit_points(&cdf.times, &cdf.values, r_r, d, diffusion, options)
}

/// Fits `(b1, b2, b3)` to `(t, F)` samples. Points at `t = 0` carry no
/// information (the model is pinned to zero there) and are skipped.
pub fn fit_points(
    times: &[f64],
    values: &[f64],
    r_r: f64,
    d: f64,
    diffusion: f64,
    options: &FitOptions,
) -> Result<FitReport> {
    if times.len() != values.len() {
        return Err(Error::Domain("times and values differ in length"));
    }
    if !(r_r > 0.0 && d > 0.0 && diffusion > 0.0) {
        return Err(Error::Domain("r_r, d and D must be positive"));
    }
    let used = times.iter().filter(|&&t| t > 0.0).count();
    if used < MIN_POINTS {
        return Err(Error::DegenerateData("fewer than 30 grid points"));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("empirical CDF is identically zero"));
    }
    for i in 0..3 {
        if !(options.lower[i] < options.upper[i]) {
            return Err(Error::Config("fit bounds are empty"));
        }
    }

    let problem = Problem { times, values, c: r_r / (d + r_r), d, ln4d: libm::log(4.0 * diffusion), diffusion, r_r };
    let clamp = |p: [f64; 3]| -> [f64; 3] { core::array::from_fn(|i| p[i].clamp(options.lower[i], options.upper[i])) };

    let init = options.initial;
    let mut p = clamp([init.b1, init.b2, init.b3]);
    let mut cost = problem.cost(p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(p);
        if jtr.iter().all(|g| g.abs() < 1e-300) {
            converged = true;
            break;
        }
        let mut accepted = false;
        // Raise damping until a step lowers the cost.
        for _ in 0..60 {
            let mut a = jtj;
            for i in 0..3 {
                a[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(delta) = solve3(a, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = clamp([p[0] + delta[0], p[1] + delta[1], p[2] + delta[2]]);
            let new_cost = problem.cost(candidate);
            if new_cost <= cost {
                let small =
                    (0..3).all(|i| (candidate[i] - p[i]).abs() <= options.step_tolerance * p[i].abs().max(1e-3));
                p = candidate;
                let flat = cost - new_cost <= 1e-15 * cost;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if small || (flat && lambda < 1e-6) || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // No descent direction left: a (constrained) minimum.
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let rmse = libm::sqrt(cost / times.len() as f64);
    Ok(FitReport {
        params: ModelParams { b1: p[0], b2: p[1], b3: p[2] },
        rmse,
        iterations,
        converged,
        n_points: times.len(),
    })
}

struct Problem<'a> {
    times: &'a [f64],
    values: &'a [f64],
    c: f64,
    d: f64,
    ln4d: f64,
    diffusion: f64,
    r_r: f64,
}

impl Problem<'_> {
    fn model(&self, t: f64, p: [f64; 3]) -> f64 {
        model_value(t, &ModelParams { b1: p[0], b2: p[1], b3: p[2] }, self.r_r, self.d, self.diffusion)
    }

    fn cost(&self, p: [f64; 3]) -> f64 {
        self.times
            .iter()
            .zip(self.values)
            .map(|(&t, &y)| {
                let r = self.model(t, p) - y;
                r * r
            })
            .sum()
    }

    fn normal_equations(&self, p: [f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&t, &y) in self.times.iter().zip(self.values) {
            if t <= 0.0 {
                continue;
            }
            let u = libm::exp(libm::log(self.d) - p[1] * self.ln4d - p[2] * libm::log(t));
            let erfc = libm::erfc(u);
            let r = p[0] * self.c * erfc - y;
            let g = self.c * p[0] * FRAC_2_SQRT_PI * libm::exp(-u * u) * u;
            let j = [self.c * erfc, g * self.ln4d, g * libm::log(t)];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        (jtj, jtr)
    }
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_model::f_model;
    use crate::particle_sim::uniform_grid;
    use crate::topology::LinkId;
    use alloc::vec::Vec;

    fn synthetic(p: ModelParams) -> EmpiricalCdf {
        let times = uniform_grid(10.0, 500);
        let values = times.iter().map(|&t| f_model(t, &p, 4.0, 2.0, 50.0).unwrap()).collect();
        EmpiricalCdf { link: LinkId::L11, times, values, n_total: 1 }
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = ModelParams::new(0.9, 0.5, 0.55).unwrap();
        let rep = fit(&synthetic(truth), 4.0, 2.0, 50.0, &FitOptions::default()).unwrap();
        assert!(rep.converged);
        assert!((rep.params.b1 - 0.9).abs() < 1e-6, "{rep:?}");
        assert!((rep.params.b2 - 0.5).abs() < 1e-6, "{rep:?}");
        assert!((rep.params.b3 - 0.55).abs() < 1e-6, "{rep:?}");
        assert!(rep.rmse < 1e-9);
    }

    #[test]
    fn recovers_cross_link_shape() {
        let truth = ModelParams::new(0.1534, 0.2780, 0.5363).unwrap();
        let rep = fit(&synthetic(truth), 4.0, 2.0, 50.0, &FitOptions::default()).unwrap();
        assert!((rep.params.b1 - truth.b1).abs() < 1e-6, "{rep:?}");
        assert!((rep.params.b2 - truth.b2).abs() < 1e-6, "{rep:?}");
        assert!((rep.params.b3 - truth.b3).abs() < 1e-6, "{rep:?}");
    }

    #[test]
    fn deterministic() {
        let cdf = synthetic(ModelParams::new(0.7, 0.6, 0.45).unwrap());
        let a = fit(&cdf, 4.0, 2.0, 50.0, &FitOptions::default()).unwrap();
        let b = fit(&cdf, 4.0, 2.0, 50.0, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_inputs() {
        let times = uniform_grid(10.0, 100);
        let zeros = alloc::vec![0.0; times.len()];
        assert!(matches!(
            fit_points(&times, &zeros, 4.0, 2.0, 50.0, &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
        let short = uniform_grid(10.0, 10);
        let ones = alloc::vec![0.5; short.len()];
        assert!(matches!(
            fit_points(&short, &ones, 4.0, 2.0, 50.0, &FitOptions::default()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn iteration_budget_flags_non_convergence() {
        let cdf = synthetic(ModelParams::new(0.9, 0.3, 0.7).unwrap());
        let opts = FitOptions { max_iterations: 1, ..FitOptions::default() };
        let rep = fit(&cdf, 4.0, 2.0, 50.0, &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn respects_bounds() {
        // A curve that saturates above r_r/(d+r_r)·1.5 pins b1 at its bound.
        let times = uniform_grid(10.0, 100);
        let values: Vec<f64> = times.iter().map(|&t| if t > 0.0 { 0.999 } else { 0.0 }).collect();
        let opts = FitOptions { upper: [1.2, 0.99, 0.99], ..FitOptions::default() };
        let rep = fit_points(&times, &values, 4.0, 2.0, 50.0, &opts).unwrap();
        assert!(rep.params.b1 <= 1.2);
        assert!(rep.params.b2 < 1.0 && rep.params.b3 < 1.0);
    }

    #[test]
    fn solve3_basic() {
        let x = solve3([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]], [3.0, 5.0, 5.0]).unwrap();
        for (got, want) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }
}
