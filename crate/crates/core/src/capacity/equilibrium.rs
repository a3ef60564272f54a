use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::{DiscreteMeasure, PanelShape};
use super::panels::{capacity_panels, energy_matrix, Normalization, PanelRule};
use super::qp::qp_registry;
use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, LogPolarPoint};
use crate::kernels::{green_smooth, mean_neg_log_segment, KernelKind};

/// Minimal energy above which a set is reported as numerically polar.
pub const POLAR_ENERGY: f64 = 1e6;

/// Convergence tolerance of the simplex QP (relative KKT violation).
pub const QP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    EquilibriumQp,
    ObstacleFem,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_potential_over_h: f64,
    pub qp_iterations: usize,
    pub residual: f64,
    #[serde(default)]
    pub polar: bool,
    /// Panels (QP route) or mesh nodes (FEM route).
    #[serde(default)]
    pub size: usize,
}

/// Capacity, Robin constant and equilibrium measure of a compact set.
/// `robin` is `None` when infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityResult {
    pub capacity: f64,
    pub robin: Option<f64>,
    pub equilibrium: DiscreteMeasure,
    pub route: Route,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize, Deserialize)]
struct CapacityJson {
    capacity: f64,
    robin: Option<f64>,
    route: Route,
    nodes: Vec<LogPolarPoint>,
    masses: Vec<f64>,
    diagnostics: Diagnostics,
}

impl Serialize for CapacityResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CapacityJson {
            capacity: self.capacity,
            robin: self.robin,
            route: self.route,
            nodes: self.equilibrium.nodes.clone(),
            masses: self.equilibrium.masses.clone(),
            diagnostics: self.diagnostics.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CapacityResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = CapacityJson::deserialize(d)?;
        let equilibrium = DiscreteMeasure::new(j.nodes, j.masses).map_err(serde::de::Error::custom)?;
        Ok(CapacityResult {
            capacity: j.capacity,
            robin: j.robin,
            equilibrium,
            route: j.route,
            diagnostics: j.diagnostics,
        })
    }
}

impl CapacityResult {
    pub fn empty(route: Route) -> Self {
        Self {
            capacity: 0.0,
            robin: None,
            equilibrium: DiscreteMeasure::empty(),
            route,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Options for the equilibrium (QP) route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumOptions {
    pub panels: PanelRule,
    /// QP solver name in [`qp_registry`]; `None` for the default.
    pub solver: Option<String>,
    /// Probe the maximum principle on a grid after solving.
    pub probe: bool,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { panels: PanelRule::default(), solver: None, probe: true }
    }
}

/// Minimizes the panel-discretized energy over probability measures on the
/// set; returns `C = 1/W` and `gamma = C * w`.
pub fn equilibrium_capacity(k: &CompactSetSpec, kind: &KernelKind, opts: &EquilibriumOptions) -> Result<CapacityResult> {
    solve_equilibrium(k, kind, opts, Normalization::H)
}

/// The same with `h = 1`: the Greenian capacity and its equilibrium measure.
pub fn greenian_capacity(k: &CompactSetSpec, kind: &KernelKind, opts: &EquilibriumOptions) -> Result<CapacityResult> {
    solve_equilibrium(k, kind, opts, Normalization::One)
}

fn solve_equilibrium(
    k: &CompactSetSpec,
    kind: &KernelKind,
    opts: &EquilibriumOptions,
    norm: Normalization,
) -> Result<CapacityResult> {
    let panels = capacity_panels(k, &opts.panels)?;
    if panels.is_empty() {
        return Ok(CapacityResult::empty(Route::EquilibriumQp));
    }
    let (mat, _) = energy_matrix(&panels, kind, norm)?;
    let solver = qp_registry().resolve(opts.solver.as_deref())?;
    let out = solver.minimize(&mat, None, QP_TOL)?;
    let nodes = panels.nodes();
    let shapes = panels.shapes();
    let mut diagnostics = Diagnostics {
        max_potential_over_h: f64::NAN,
        qp_iterations: out.iterations,
        residual: out.residual,
        polar: false,
        size: panels.len(),
    };
    if !(out.energy > 0.0) {
        return Err(Error::Invalid(format!("non-positive minimal energy {}", out.energy)));
    }
    if out.energy > POLAR_ENERGY {
        diagnostics.polar = true;
        let zero = vec![0.0; nodes.len()];
        return Ok(CapacityResult {
            capacity: 0.0,
            robin: None,
            equilibrium: DiscreteMeasure::new(nodes, zero)?.with_shapes(shapes)?,
            route: Route::EquilibriumQp,
            diagnostics,
        });
    }
    let cap = 1.0 / out.energy;
    let masses: Vec<f64> = out.w.iter().map(|w| w * cap).collect();
    let gamma = DiscreteMeasure::new(nodes, masses)?.with_shapes(shapes)?;
    if opts.probe {
        diagnostics.max_potential_over_h = max_potential_ratio(&gamma, k, kind, norm, &default_probes(k))?;
    }
    Ok(CapacityResult {
        capacity: cap,
        robin: Some(out.energy),
        equilibrium: gamma,
        route: Route::EquilibriumQp,
        diagnostics,
    })
}

/// A grid of probes covering `0 < t <= 2 t_max` at 24 angles.
pub fn default_probes(k: &CompactSetSpec) -> Vec<LogPolarPoint> {
    let top = if k.is_empty() { 1.0 } else { k.t_max() };
    let mut out = Vec::new();
    for i in 1..=20 {
        let t = 2.0 * top * i as f64 / 20.0;
        for j in 0..24 {
            out.push(LogPolarPoint::raw(t, (j as f64 + 0.5) * TAU / 24.0));
        }
    }
    out
}

fn max_potential_ratio(
    gamma: &DiscreteMeasure,
    k: &CompactSetSpec,
    kind: &KernelKind,
    norm: Normalization,
    probes: &[LogPolarPoint],
) -> Result<f64> {
    let vals: Vec<f64> = probes
        .par_iter()
        .map(|x| {
            let u = match norm {
                Normalization::H => potential_eval(gamma, x, kind)?,
                Normalization::One => greenian_potential(gamma, x, kind)?,
            };
            let bound = match norm {
                Normalization::H => kind.h(x),
                Normalization::One => 1.0,
            };
            Ok(u / bound)
        })
        .collect::<Result<_>>()?;
    let _ = k;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `G(x, y)` averaged over the panel carrying `y` when `x` is close to it.
fn panel_green(x: &LogPolarPoint, y: &LogPolarPoint, shape: Option<&PanelShape>, kind: &KernelKind) -> Result<f64> {
    if let (KernelKind::LaplaceDisk, Some(s)) = (kind, shape) {
        let len = s.log_len.exp();
        let (dt, dth) = y.offset_to(x);
        if dt.hypot(dth) <= 3.0 * len {
            let normal = (-s.tangent.1, s.tangent.0);
            let u = dt * s.tangent.0 + dth * s.tangent.1;
            let v = dt * normal.0 + dth * normal.1;
            if len > 0.0 {
                return Ok((green_smooth(x, y) + mean_neg_log_segment(u, v, len)).max(0.0));
            }
        }
    }
    match kind.green(x, y) {
        Err(Error::Singular { .. }) => match kind {
            KernelKind::DiscreteOperator(op) => op.green_value(x, y),
            KernelKind::LaplaceDisk => {
                let ll = shape.map_or(-30.0, |s| s.log_len);
                Ok(green_smooth(x, y) + 1.0 - ll)
            }
        },
        other => other,
    }
}

/// `U^mu(x) = sum_j G(x, y_j) / h(y_j) m_j`, with the panel average of `G`
/// for nodes whose panel passes near `x`.
pub fn potential_eval(mu: &DiscreteMeasure, x: &LogPolarPoint, kind: &KernelKind) -> Result<f64> {
    let mut acc = 0.0;
    for (j, (y, m)) in mu.nodes.iter().zip(&mu.masses).enumerate() {
        if *m == 0.0 {
            continue;
        }
        acc += panel_green(x, y, mu.shapes.get(j), kind)? / kind.h(y) * m;
    }
    Ok(acc)
}

/// `sum_j G(x, y_j) m_j`: the potential for the Greenian (`h = 1`) energy.
pub fn greenian_potential(mu: &DiscreteMeasure, x: &LogPolarPoint, kind: &KernelKind) -> Result<f64> {
    let mut acc = 0.0;
    for (j, (y, m)) in mu.nodes.iter().zip(&mu.masses).enumerate() {
        if *m == 0.0 {
            continue;
        }
        acc += panel_green(x, y, mu.shapes.get(j), kind)? * m;
    }
    Ok(acc)
}

/// `R_h^K(x)`: the equilibrium potential of `K` at `x`.
pub fn smoothed_reduction(k: &CompactSetSpec, x: &LogPolarPoint, kind: &KernelKind) -> Result<f64> {
    let res = equilibrium_capacity(k, kind, &EquilibriumOptions { probe: false, ..Default::default() })?;
    potential_eval(&res.equilibrium, x, kind)
}

/// `R_h^K` at the singular point, from rings of probes far above the set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaEstimate {
    pub value: f64,
    pub capacity: f64,
    /// `|value - capacity| / capacity`.
    pub gap: f64,
    pub probe_t: f64,
}

/// Ring average of the potential at `t_probe`.
pub fn ring_average<F>(t_probe: f64, n: usize, f: F) -> Result<f64>
where
    F: Fn(&LogPolarPoint) -> Result<f64> + Sync,
{
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| f(&LogPolarPoint::raw(t_probe, (j as f64 + 0.5) * TAU / n as f64)))
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / n as f64)
}

/// Evaluates the potential on rings at `t1 = max(4 t_max, t_max + 20)` and
/// `t1 + 4`, extrapolating the approach to the limit at rate `e^{-t}`.
pub fn zeta_limit<F>(t_max: f64, f: F) -> Result<(f64, f64)>
where
    F: Fn(&LogPolarPoint) -> Result<f64> + Sync,
{
    let t1 = (4.0 * t_max).max(t_max + 20.0);
    let t2 = t1 + 4.0;
    let v1 = ring_average(t1, 32, &f)?;
    let v2 = ring_average(t2, 32, &f)?;
    let r = (-4.0f64).exp();
    Ok((v2 + (v2 - v1) * r / (1.0 - r), t1))
}

/// `R_h^K(zeta)` and its gap to the capacity from the same equilibrium solve.
pub fn capacity_at_zeta(k: &CompactSetSpec, kind: &KernelKind, opts: &EquilibriumOptions) -> Result<ZetaEstimate> {
    if k.is_empty() {
        return Ok(ZetaEstimate { value: 0.0, capacity: 0.0, gap: 0.0, probe_t: f64::NAN });
    }
    let t_max = k.t_max();
    if !t_max.is_finite() {
        return Err(Error::Domain("set is not bounded away from the singular point".into()));
    }
    let res = equilibrium_capacity(k, kind, opts)?;
    let (value, probe_t) = zeta_limit(t_max, |x| potential_eval(&res.equilibrium, x, kind))?;
    let gap = if res.capacity > 0.0 { (value - res.capacity).abs() / res.capacity } else { value.abs() };
    Ok(ZetaEstimate { value, capacity: res.capacity, gap, probe_t })
}

/// `R_1^K(zeta) = sum_j G(zeta, y_j) gamma_j` for the Greenian equilibrium
/// measure, i.e. `sum_j h(y_j) gamma_j`.
pub fn greenian_reduction_at_zeta(k: &CompactSetSpec, kind: &KernelKind, opts: &EquilibriumOptions) -> Result<f64> {
    if k.is_empty() {
        return Ok(0.0);
    }
    let res = greenian_capacity(k, kind, opts)?;
    let (value, _) = zeta_limit(k.t_max(), |x| greenian_potential(&res.equilibrium, x, kind))?;
    Ok(value)
}
