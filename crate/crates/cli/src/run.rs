//! Execution of a [`RunConfig`]: every command yields a main JSON document
//! and a set of named output files, all computed before anything is written.

use std::sync::Arc;

use logcap::capacity::{route_registry, CapacityResult, EquilibriumOptions, PanelRule, RouteContext};
use logcap::geometry::{CompactSetSpec, LogPolarPoint};
use logcap::hdp::{harmonic_measure_of_zeta, solve_hdp, uniqueness_gap, BoundaryData, PieceData, TruncationSeries};
use logcap::kernels::KernelKind;
use logcap::mc::{estimate_hit_probability, sample_hpath, shell_cross_check, write_paths_csv, HitEstimate, ShellCheck};
use logcap::operator::{CoefficientField, DiscreteOperator, FieldSpec, Mesh, MeshOptions};
use logcap::wiener::{family_registry, family_report, wiener_report, FamilyParams, SeriesOptions, WienerReport};
use logcap::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

pub struct Outputs {
    /// Printed on stdout and stored as `result.json`.
    pub result: Value,
    /// Extra files, relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// One human-readable line for non-quiet runs.
    pub summary: String,
}

fn resolve(source: &Source) -> logcap::Result<CompactSetSpec> {
    match source {
        Source::Geometry(g) => {
            let k: CompactSetSpec = g.clone().into();
            k.validate()?;
            Ok(k)
        }
        Source::Family { name, params } => family_registry().get(name)?.build(params),
    }
}

fn kernel(choice: KernelChoice, field: &Arc<dyn CoefficientField>, k: &CompactSetSpec, n_theta: usize) -> logcap::Result<KernelKind> {
    match choice {
        KernelChoice::Laplace => Ok(KernelKind::LaplaceDisk),
        KernelChoice::Operator => {
            let mesh = Mesh::build(&MeshOptions::default().with_n_theta(n_theta), k)?;
            Ok(KernelKind::DiscreteOperator(Arc::new(DiscreteOperator::new(field.clone(), &mesh)?)))
        }
    }
}

fn context(
    choice: KernelChoice,
    field: &FieldSpec,
    k: &CompactSetSpec,
    n_theta: usize,
    panels_per_unit: Option<f64>,
) -> logcap::Result<RouteContext> {
    let field = field.build()?;
    let mut eq = EquilibriumOptions::default();
    if let Some(p) = panels_per_unit {
        eq.panels = PanelRule { per_unit: p, ..PanelRule::default() };
    }
    Ok(RouteContext {
        kernel: kernel(choice, &field, k, n_theta)?,
        field,
        equilibrium: eq,
        mesh: MeshOptions::default().with_n_theta(n_theta),
        obstacle_solver: None,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn csv(lines: Vec<String>) -> Vec<u8> {
    let mut s = lines.join("\n");
    s.push('\n');
    s.into_bytes()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn execute(cfg: &RunConfig) -> logcap::Result<Outputs> {
    match &cfg.command {
        CommandConfig::Capacity(c) => capacity(c),
        CommandConfig::Wiener(c) => wiener(c),
        CommandConfig::Solve(c) => solve(c),
        CommandConfig::Simulate(c) => simulate(c, cfg.seed),
        CommandConfig::Family(c) => family(c),
    }
}

fn capacity(c: &CapacityConfig) -> logcap::Result<Outputs> {
    if c.routes.is_empty() {
        return Err(Error::Parameter("no capacity route selected".into()));
    }
    let k = resolve(&c.source)?;
    let ctx = context(c.kernel, &c.field, &k, c.n_theta, Some(c.panels_per_unit))?;
    let results: Vec<CapacityResult> =
        c.routes.iter().map(|r| route_registry().get(r)?.capacity(&k, &ctx)).collect::<logcap::Result<_>>()?;
    let caps: Vec<f64> = results.iter().map(|r| r.capacity).collect();
    let summary = format!("capacity {}", caps.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" / "));
    let result = if results.len() == 1 {
        to_value(&results[0])
    } else {
        let hi = caps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = caps.iter().cloned().fold(f64::INFINITY, f64::min);
        let gap = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        json!({ "results": results, "agreement_gap": gap })
    };
    let mut rows = vec!["route,node_t,node_theta,mass".to_string()];
    for r in &results {
        for (p, m) in r.equilibrium.nodes.iter().zip(&r.equilibrium.masses) {
            rows.push(format!("{},{},{},{}", to_value(&r.route).as_str().unwrap_or(""), p.t, p.theta, m));
        }
    }
    Ok(Outputs { result, files: vec![("measure.csv".into(), csv(rows))], summary })
}

fn wiener(c: &WienerConfig) -> logcap::Result<Outputs> {
    let k = resolve(&c.source)?;
    let top = k.clip_t(0.0, c.a.powi(c.n_max + 1));
    let context = context(c.kernel, &c.field, &top, c.n_theta, None)?;
    let opts = SeriesOptions { route: c.route.clone(), context, classical: c.classical };
    let grid = c.rho_grid.as_deref();
    let report: WienerReport = match &c.source {
        Source::Family { name, params } => {
            let p = FamilyParams { a: c.a, n_min: c.n_min, n_max: c.n_max, ..*params };
            family_report(name, &p, &opts, grid)?
        }
        Source::Geometry(_) => wiener_report(&k, c.a, c.n_min, c.n_max, &opts, grid)?,
    };
    let mut rows = vec!["n,term_h,term_reduction,term_classical,reduction_classical,partial_sum,status".to_string()];
    for (s, ps) in report.shells.iter().zip(&report.partial_sums) {
        rows.push(format!(
            "{},{},{},{},{},{},{}",
            s.n,
            opt(s.term_h),
            opt(s.term_reduction),
            opt(s.term_classical),
            opt(s.reduction_classical),
            ps,
            s.status
        ));
    }
    let summary = format!("verdict {} ({})", report.verdict, report.confidence);
    Ok(Outputs { result: to_value(&report), files: vec![("terms.csv".into(), csv(rows))], summary })
}

fn series_rows(name: &str, s: &TruncationSeries, rows: &mut Vec<String>) {
    for (t, vals) in s.truncations.iter().zip(&s.values) {
        for (p, v) in s.probes.iter().zip(vals) {
            rows.push(format!("{name},{t},{},{},{v}", p.t, p.theta));
        }
    }
    for (p, v) in s.probes.iter().zip(&s.extrapolated) {
        rows.push(format!("{name},inf,{},{},{v}", p.t, p.theta));
    }
}

fn check_points(probes: &[LogPolarPoint]) -> logcap::Result<Vec<LogPolarPoint>> {
    probes.iter().map(|p| LogPolarPoint::new(p.t, p.theta)).collect()
}

fn solve(c: &SolveConfig) -> logcap::Result<Outputs> {
    let k = resolve(&c.source)?;
    let field = c.field.build()?;
    let mesh = MeshOptions::default().with_n_theta(c.n_theta);
    let probes = check_points(&c.probes)?;
    let data = c.data.clone().unwrap_or_else(|| BoundaryData::constant(&k, 0.0, 1.0));
    data.validate(&k)?;
    let values: Vec<PieceData> = data.values.clone();
    let gap = uniqueness_gap(&k, &values, field.as_ref(), &probes, &c.truncations, &mesh)?;
    let hm = harmonic_measure_of_zeta(&k, field.as_ref(), &probes, &c.truncations, &mesh)?;
    let last = *c.truncations.last().expect("validated by the series");
    let sol = solve_hdp(&k, &data, field.as_ref(), last, &mesh)?;
    let sup: Vec<f64> = gap.values.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect();
    let monotone = sup.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let mut rows = vec!["series,t_ceiling,probe_t,probe_theta,value".to_string()];
    series_rows("gap", &gap, &mut rows);
    series_rows("harmonic_measure", &hm, &mut rows);
    let mut solution = Vec::new();
    sol.write_csv(&mut solution).map_err(|e| Error::Invalid(e.to_string()))?;
    let result = json!({
        "truncations": c.truncations,
        "probes": probes,
        "gap": gap.values,
        "gap_sup": sup,
        "gap_nonincreasing": monotone,
        "gap_extrapolated": gap.extrapolated,
        "harmonic_measure": hm.values,
        "harmonic_measure_extrapolated": hm.extrapolated,
        "solution": {
            "t_ceiling": sol.t_ceiling,
            "residual": sol.residual,
            "u_min": sol.u.iter().cloned().fold(f64::INFINITY, f64::min),
            "u_max": sol.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        },
    });
    let summary = format!("sup gap per truncation {sup:?}");
    Ok(Outputs { result, files: vec![("gap.csv".into(), csv(rows)), ("solution.csv".into(), solution)], summary })
}

fn simulate(c: &SimulateConfig, seed: u64) -> logcap::Result<Outputs> {
    let k = resolve(&c.source)?;
    let start = LogPolarPoint::new(c.start.t, c.start.theta)?;
    let est: HitEstimate = estimate_hit_probability(&start, &k, c.n_paths, &c.mc, seed)?;
    let mut files = Vec::new();
    let mut hits = Vec::new();
    est.write_csv(&mut hits).map_err(|e| Error::Invalid(e.to_string()))?;
    files.push(("hits.csv".to_string(), hits));
    let checks: Option<Vec<ShellCheck>> = match c.check {
        Some((n1, n2)) => Some(shell_cross_check(&k, n1, n2, c.n_paths, &c.mc, seed)?),
        None => None,
    };
    if let Some(ch) = &checks {
        let mut rows = vec!["shell,probe_t,probe_theta,mc,standard_error,pde,z".to_string()];
        for r in ch {
            rows.push(format!("{},{},{},{},{},{},{}", r.shell, r.probe.t, r.probe.theta, r.mc, r.standard_error, r.pde, r.z));
        }
        files.push(("check.csv".into(), csv(rows)));
    }
    if c.dump_paths > 0 {
        let mut o = c.mc.clone();
        o.store_every = o.store_every.max(10);
        let paths = (0..c.dump_paths).map(|i| sample_hpath(&start, &k, &o, seed, i)).collect::<logcap::Result<Vec<_>>>()?;
        let mut buf = Vec::new();
        write_paths_csv(&paths, &mut buf).map_err(|e| Error::Invalid(e.to_string()))?;
        files.push(("paths.csv".into(), buf));
    }
    let summary = format!("hit rate {:.4} +- {:.4} over {} paths", est.p_hat, est.standard_error, est.n_paths);
    let result = json!({ "estimate": est, "checks": checks });
    Ok(Outputs { result, files, summary })
}

fn family(c: &FamilyConfig) -> logcap::Result<Outputs> {
    let k = family_registry().get(&c.name)?.build(&c.params)?;
    let g = k.to_geometry_file(Some(c.params.a));
    let summary = format!("{} with {} primitives", c.name, g.primitives.len());
    Ok(Outputs { result: to_value(&g), files: Vec::new(), summary })
}
