//! SIR curves of the fitted topologies.

use std::path::{Path, PathBuf};

use molmimo_core::channel_model::ChannelModel;
use molmimo_core::link_sim::threshold_grid;
use serde::{Deserialize, Serialize};

use crate::config::Geometry;
use crate::error::{HarnessError, Result};
use crate::fitting::{load_model, FittedParams};
use crate::Harness;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirRow {
    pub d: f64,
    pub h: f64,
    pub r_r: f64,
    pub t_s: f64,
    pub sir: f64,
    pub sir_db: f64,
}

pub fn sir_curve(model: &ChannelModel, t_s: &[f64]) -> Result<Vec<SirRow>> {
    let topo = &model.topology;
    t_s.iter()
        .map(|&t| {
            let sir = model.sir(t)?;
            if sir.is_nan() {
                return Err(HarnessError::Numeric(format!("SIR undefined at t_s = {t}")));
            }
            Ok(SirRow { d: topo.d(), h: topo.h(), r_r: topo.r_r(), t_s: t, sir, sir_db: 10.0 * sir.log10() })
        })
        .collect()
}

pub fn cmd_sir(h: &Harness, params_path: &Path) -> Result<Vec<PathBuf>> {
    let grid = h.config.sweep()?.sir_t_s;
    let t_s = threshold_grid(grid.lo, grid.hi, grid.step)?;
    if t_s[0] <= 0.0 {
        return Err(HarnessError::Config("sweep.sir_t_s must start above zero".into()));
    }
    let models: Vec<ChannelModel> = if h.config.model.is_some() {
        vec![load_model(h, h.config.selected()?, params_path)?]
    } else {
        let mut fitted = FittedParams::load(params_path)?.topologies;
        fitted.sort_by(|a, b| {
            let key = |g: Geometry| (g.d, g.h, g.r_r);
            key(a.geometry()).partial_cmp(&key(b.geometry())).expect("finite geometry")
        });
        fitted.iter().map(|t| t.model()).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for m in &models {
        rows.extend(sir_curve(m, &t_s)?);
    }
    Ok(vec![h.out.write_csv("sir.csv", rows)?])
}
