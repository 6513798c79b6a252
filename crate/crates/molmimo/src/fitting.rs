//! Model fitting of characterized CDFs and the `fitted_params.json` file
//! consumed by the link-level commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use molmimo_core::channel_model::{ChannelModel, ModelParams};
use molmimo_core::fit::{self, FitOptions, FitReport};
use molmimo_core::topology::{LinkId, Reference, Topology};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characterize::{cdf_file_name, CdfRow};
use crate::config::{FitBlock, Geometry};
use crate::error::{HarnessError, Result};
use crate::output::read_json;
use crate::Harness;

pub const PARAMS_FILE: &str = "fitted_params.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkFit {
    pub link: String,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_points: usize,
}

impl LinkFit {
    fn new(link: LinkId, r: &FitReport) -> Self {
        Self {
            link: link.to_string(),
            b1: r.params.b1,
            b2: r.params.b2,
            b3: r.params.b3,
            rmse: r.rmse,
            iterations: r.iterations,
            converged: r.converged,
            n_points: r.n_points,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.b1, self.b2, self.b3)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTopology {
    pub d: f64,
    pub h: f64,
    pub r_r: f64,
    pub diffusion: f64,
    pub d_reference: Reference,
    pub h_reference: Reference,
    /// Model of the own links.
    pub own: LinkFit,
    /// Model of the cross links.
    pub cross: LinkFit,
    /// Per-link fits when links are fitted independently, in link order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkFit>,
    /// Largest parameter difference between congruent links (independent
    /// fits only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymmetry: Option<f64>,
}

impl FittedTopology {
    pub fn geometry(&self) -> Geometry {
        Geometry { d: self.d, h: self.h, r_r: self.r_r }
    }

    pub fn model(&self) -> Result<ChannelModel> {
        let topo =
            Topology::with_reference(self.d, self.h, self.r_r, self.diffusion, self.d_reference, self.h_reference)?;
        Ok(ChannelModel::new(topo, self.own.params()?, self.cross.params()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    pub fit: FitBlock,
    pub topologies: Vec<FittedTopology>,
}

impl FittedParams {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn find(&self, g: Geometry) -> Option<&FittedTopology> {
        self.topologies.iter().find(|t| t.d == g.d && t.h == g.h && t.r_r == g.r_r)
    }
}

/// Per-link `(times, values)` series keyed by link name.
pub type CdfSeries = BTreeMap<String, (Vec<f64>, Vec<f64>)>;

/// Reads a CDF file into per-link series.
pub fn read_cdfs(path: &Path) -> Result<CdfSeries> {
    let rows: Vec<CdfRow> = crate::output::read_csv(path)?;
    let mut out = CdfSeries::new();
    for r in rows {
        let e = out.entry(r.link).or_default();
        e.0.push(r.t);
        e.1.push(r.f_hat);
    }
    Ok(out)
}

/// Fits one topology's CDFs. Without `independent` the own model comes from
/// link 11 and the cross model from link 12 (or 21 when only Tx1 emitted).
pub fn fit_topology(
    topology: &Topology,
    cdfs: &CdfSeries,
    options: &FitOptions,
    independent: bool,
) -> Result<FittedTopology> {
    let fit_link = |link: LinkId| -> Result<LinkFit> {
        let (t, v) =
            cdfs.get(&link.to_string()).ok_or_else(|| HarnessError::Config(format!("no CDF for link {link}")))?;
        let r = fit::fit_points(t, v, topology.r_r(), topology.d(), topology.diffusion(), options)?;
        Ok(LinkFit::new(link, &r))
    };
    let links: Vec<LinkFit> =
        if independent { LinkId::ALL.iter().map(|&l| fit_link(l)).collect::<Result<_>>()? } else { Vec::new() };
    let (own, cross, asymmetry) = if independent {
        let diff = |a: &LinkFit, b: &LinkFit| {
            [(a.b1 - b.b1).abs(), (a.b2 - b.b2).abs(), (a.b3 - b.b3).abs()].into_iter().fold(0.0, f64::max)
        };
        let asym = diff(&links[0], &links[3]).max(diff(&links[1], &links[2]));
        (links[0].clone(), links[1].clone(), Some(asym))
    } else {
        let cross_link = if cdfs.contains_key(&LinkId::L12.to_string()) { LinkId::L12 } else { LinkId::L21 };
        (fit_link(LinkId::L11)?, fit_link(cross_link)?, None)
    };
    Ok(FittedTopology {
        d: topology.d(),
        h: topology.h(),
        r_r: topology.r_r(),
        diffusion: topology.diffusion(),
        d_reference: topology.d_reference(),
        h_reference: topology.h_reference(),
        own,
        cross,
        links,
        asymmetry,
    })
}

#[derive(Debug, Serialize)]
struct TableRow<'a> {
    d: f64,
    h: f64,
    r_r: f64,
    role: &'static str,
    link: &'a str,
    b1: f64,
    b2: f64,
    b3: f64,
    rmse: f64,
    iterations: usize,
    converged: bool,
    n_points: usize,
}

#[derive(Debug, Serialize)]
struct ParamRow {
    h: f64,
    r_r: f64,
    role: &'static str,
    d: f64,
    parameter: &'static str,
    value: f64,
}

pub fn cmd_fit(h: &Harness, cdf_dir: &Path) -> Result<Vec<PathBuf>> {
    let block = h.config.fit.clone().unwrap_or_default();
    let options = block.options()?;
    let geometries = h.config.geometries()?;
    let inputs = geometries
        .iter()
        .map(|&g| Ok((h.config.build_topology(g)?, read_cdfs(&cdf_dir.join(cdf_file_name(g)))?)))
        .collect::<Result<Vec<_>>>()?;
    let fitted = h.install(|| {
        inputs
            .par_iter()
            .map(|(topo, cdfs)| fit_topology(topo, cdfs, &options, block.independent_links))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut table = Vec::new();
    let mut by_param = Vec::new();
    for t in &fitted {
        let mut fits: Vec<(&'static str, &LinkFit)> = vec![("own", &t.own), ("cross", &t.cross)];
        if !t.links.is_empty() {
            fits =
                t.links.iter().map(|l| (if l.link == "11" || l.link == "22" { "own" } else { "cross" }, l)).collect();
        }
        for (role, f) in fits {
            table.push(TableRow {
                d: t.d,
                h: t.h,
                r_r: t.r_r,
                role,
                link: &f.link,
                b1: f.b1,
                b2: f.b2,
                b3: f.b3,
                rmse: f.rmse,
                iterations: f.iterations,
                converged: f.converged,
                n_points: f.n_points,
            });
        }
    }
    let mut order: Vec<&FittedTopology> = fitted.iter().collect();
    order.sort_by(|a, b| (a.h, a.r_r, a.d).partial_cmp(&(b.h, b.r_r, b.d)).expect("finite geometry"));
    for t in order {
        for (role, f) in [("own", &t.own), ("cross", &t.cross)] {
            for (parameter, value) in [("b1", f.b1), ("b2", f.b2), ("b3", f.b3)] {
                by_param.push(ParamRow { h: t.h, r_r: t.r_r, role, d: t.d, parameter, value });
            }
        }
    }

    let written = vec![
        h.out.write_csv("fit_table.csv", table)?,
        h.out.write_csv("fit_params_long.csv", by_param)?,
        h.out.write_json(PARAMS_FILE, &FittedParams { fit: block, topologies: fitted.clone() })?,
    ];
    let stalled: Vec<String> = fitted
        .iter()
        .flat_map(|t| [&t.own, &t.cross].into_iter().chain(&t.links).map(move |f| (t, f)))
        .filter(|(_, f)| !f.converged)
        .map(|(t, f)| format!("d={} h={} r_r={} link {}", t.d, t.h, t.r_r, f.link))
        .collect();
    if !stalled.is_empty() {
        return Err(HarnessError::Numeric(format!("fit did not converge for {}", stalled.join(", "))));
    }
    Ok(written)
}

/// Channel model of geometry `g`: the `[model]` block when present,
/// otherwise the fitted parameters in `params_path`.
pub fn load_model(h: &Harness, g: Geometry, params_path: &Path) -> Result<ChannelModel> {
    if let Some(m) = h.config.model {
        m.own.validate()?;
        m.cross.validate()?;
        return Ok(ChannelModel::new(h.config.build_topology(g)?, m.own, m.cross));
    }
    let fitted = FittedParams::load(params_path)?;
    fitted
        .find(g)
        .ok_or_else(|| HarnessError::Config(format!("{} has no fit for {g:?}", params_path.display())))?
        .model()
}
