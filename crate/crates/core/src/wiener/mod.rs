//! Wiener series of a complement `Omega^c` and the regularity verdict at the
//! singular point.

mod family;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use family::{
    family_registry, iterated_log, sparse_exponent, sparse_log_length, DeletedRadius, FamilyParams, LevelCircles,
    SparseIntervals, WienerFamily,
};

use crate::capacity::{greenian_capacity, greenian_reduction_at_zeta, route_registry, CapacityRoute, RouteContext};
use crate::error::{Error, Result};
use crate::geometry::{shell_decompose, CompactSetSpec, ShellDecomposition};

/// Fewest computed shells on which a verdict is attempted.
pub const MIN_SHELLS: usize = 4;
/// Tail exponents at or below this are divergence evidence.
pub const DIVERGENT_MAX: f64 = 1.0;
/// Tail exponents above this are convergence evidence.
pub const CONVERGENT_MIN: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LogRegular,
    LogIrregular,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::LogRegular => "LogRegular",
            Verdict::LogIrregular => "LogIrregular",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// One row of the series. Terms are `None` when the shell's solve failed,
/// with the error kept in `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellTerm {
    pub n: i32,
    /// `a^-n C_h(E_n)`.
    pub term_h: Option<f64>,
    /// `a^-n R_h^{E_n}(zeta)`.
    pub term_reduction: Option<f64>,
    /// `a^n C_g(E_n)`, the Greenian capacity term.
    #[serde(default)]
    pub term_classical: Option<f64>,
    /// `R_1^{E_n}(zeta)`.
    #[serde(default)]
    pub reduction_classical: Option<f64>,
    pub status: String,
}

impl ShellTerm {
    fn empty(n: i32) -> Self {
        Self {
            n,
            term_h: Some(0.0),
            term_reduction: Some(0.0),
            term_classical: Some(0.0),
            reduction_classical: Some(0.0),
            status: "empty".into(),
        }
    }

    pub fn is_computed(&self) -> bool {
        self.term_h.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralSample {
    pub rho: f64,
    /// `c(rho) = C_h(Omega^c ∩ {1 <= t <= rho})`.
    pub c: f64,
    pub integrand: f64,
    /// Trapezoid integral of `c / rho^2` from the first sample.
    pub partial: f64,
}

/// Least-squares tail fit `terms ~ c / (n log n ... (log_d n)^p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub p: f64,
    pub r2: f64,
    /// Number of iterated logarithms `d` in the comparison scale.
    pub log_depth: u32,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerReport {
    pub a: f64,
    pub shells: Vec<ShellTerm>,
    #[serde(default)]
    pub integral: Vec<IntegralSample>,
    pub verdict: Verdict,
    pub confidence: String,
    pub fit: Option<Fit>,
    pub partial_sums: Vec<f64>,
}

/// What to compute besides the `h`-capacity terms.
#[derive(Debug, Clone)]
pub struct SeriesOptions {
    pub route: String,
    pub context: RouteContext,
    /// Also compute the Greenian (`h = 1`) columns.
    pub classical: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self { route: "equilibrium_qp".into(), context: RouteContext::default(), classical: true }
    }
}

fn shell_term(
    n: i32,
    shell: &CompactSetSpec,
    a: f64,
    route: &dyn CapacityRoute,
    opts: &SeriesOptions,
) -> Result<ShellTerm> {
    let scale = a.powi(n);
    let (res, reduction) = route.capacity_and_reduction(shell, &opts.context)?;
    let mut term = ShellTerm {
        n,
        term_h: Some(res.capacity / scale),
        term_reduction: Some(reduction / scale),
        term_classical: None,
        reduction_classical: None,
        status: if res.diagnostics.polar { "polar".into() } else { "ok".into() },
    };
    if opts.classical {
        let ctx = &opts.context;
        let g = greenian_capacity(shell, &ctx.kernel, &ctx.equilibrium)?;
        term.term_classical = Some(g.capacity * scale);
        term.reduction_classical = Some(greenian_reduction_at_zeta(shell, &ctx.kernel, &ctx.equilibrium)?);
    }
    Ok(term)
}

/// Per-shell terms, computed in parallel. A failing shell is reported in its
/// row and does not abort the others.
pub fn series_terms(shells: &ShellDecomposition, opts: &SeriesOptions) -> Result<Vec<ShellTerm>> {
    let route = route_registry().get(&opts.route)?;
    let rows: Vec<(i32, &CompactSetSpec)> = shells.iter().collect();
    Ok(rows
        .par_iter()
        .map(|&(n, shell)| {
            if shell.is_empty() {
                return ShellTerm::empty(n);
            }
            shell_term(n, shell, shells.a, route.as_ref(), opts).unwrap_or_else(|e| ShellTerm {
                n,
                term_h: None,
                term_reduction: None,
                term_classical: None,
                reduction_classical: None,
                status: format!("error: {e}"),
            })
        })
        .collect())
}

/// Greenian terms `a^n C_g(E_n)` and `R_1^{E_n}(zeta)` only.
pub fn classical_terms(shells: &ShellDecomposition, ctx: &RouteContext) -> Result<Vec<(i32, f64, f64)>> {
    let rows: Vec<(i32, &CompactSetSpec)> = shells.iter().collect();
    rows.par_iter()
        .map(|&(n, shell)| {
            if shell.is_empty() {
                return Ok((n, 0.0, 0.0));
            }
            let g = greenian_capacity(shell, &ctx.kernel, &ctx.equilibrium)?;
            let r = greenian_reduction_at_zeta(shell, &ctx.kernel, &ctx.equilibrium)?;
            Ok((n, g.capacity * shells.a.powi(n), r))
        })
        .collect()
}

/// `c(rho) / rho^2` on a grid of `rho > 1`, with trapezoid partial integrals.
pub fn integral_test(omega_c: &CompactSetSpec, rho_grid: &[f64], opts: &SeriesOptions) -> Result<Vec<IntegralSample>> {
    if rho_grid.iter().any(|&r| !(r > 1.0)) || rho_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("rho grid must increase and stay above 1".into()));
    }
    let route = route_registry().get(&opts.route)?;
    let caps: Vec<f64> = rho_grid
        .par_iter()
        .map(|&rho| {
            let part = omega_c.clip_t(1.0, rho);
            if part.is_empty() {
                Ok(0.0)
            } else {
                route.capacity(&part, &opts.context).map(|r| r.capacity)
            }
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<IntegralSample> = Vec::with_capacity(rho_grid.len());
    for (&rho, &c) in rho_grid.iter().zip(&caps) {
        let integrand = c / (rho * rho);
        let partial = match out.last() {
            Some(prev) => prev.partial + 0.5 * (prev.integrand + integrand) * (rho - prev.rho),
            None => 0.0,
        };
        out.push(IntegralSample { rho, c, integrand, partial });
    }
    Ok(out)
}

/// Fits `ln(terms_n prod_{j<d} log_j n) = c - p ln(log_d n)` over the given
/// shells with positive terms. `None` with fewer than three usable points.
pub fn tail_fit(terms: &[(i32, f64)], log_depth: u32) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = terms
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .filter_map(|&(n, v)| {
            let n = n as f64;
            let var = iterated_log(n, log_depth);
            if !(var > 0.0) {
                return None;
            }
            let weight: f64 = (0..log_depth).map(|j| iterated_log(n, j)).product();
            Some((var.ln(), (v * weight).ln()))
        })
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / m, b + y / m));
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Some(Fit { p: -slope, r2, log_depth, points: pts.len() })
}

/// Evidence verdict from the computed terms; `known` overrides it for
/// geometries whose term asymptotics are fixed by construction.
pub fn classify(shells: &[ShellTerm], log_depth: u32, known: Option<Verdict>) -> (Verdict, String, Option<Fit>) {
    let computed: Vec<(i32, f64)> = shells.iter().filter_map(|s| s.term_h.map(|v| (s.n, v))).collect();
    if computed.len() < MIN_SHELLS {
        return (
            Verdict::Inconclusive,
            format!("only {} computed shells; at least {MIN_SHELLS} are needed", computed.len()),
            None,
        );
    }
    if computed.iter().all(|&(_, v)| v == 0.0) {
        return (
            Verdict::LogIrregular,
            "every computed term vanishes: the complement misses the computed shells".into(),
            None,
        );
    }
    // the head shells are pre-asymptotic; fit the last two thirds
    let keep = (2 * computed.len()).div_ceil(3).max(3);
    let fit = tail_fit(&computed[computed.len() - keep..], log_depth);
    let (evidence, why) = match &fit {
        None => (Verdict::Inconclusive, "too few positive terms to fit a tail".to_string()),
        Some(f) if f.p <= DIVERGENT_MAX => {
            (Verdict::LogRegular, format!("tail exponent {:.3} <= {DIVERGENT_MAX}: divergence evidence", f.p))
        }
        Some(f) if f.p > CONVERGENT_MIN => {
            (Verdict::LogIrregular, format!("tail exponent {:.3} > {CONVERGENT_MIN}: convergence evidence", f.p))
        }
        Some(f) => (Verdict::Inconclusive, format!("tail exponent {:.3} between the evidence thresholds", f.p)),
    };
    match known {
        Some(v) => {
            let agree = if v == evidence { "agrees" } else { "does not agree" };
            (v, format!("analytic term asymptotics of the built-in family; the fit {agree} ({why})"), fit)
        }
        None => (evidence, format!("finite evidence only: {why}"), fit),
    }
}

fn partial_sums(shells: &[ShellTerm]) -> Vec<f64> {
    let mut acc = 0.0;
    shells
        .iter()
        .map(|s| {
            acc += s.term_h.unwrap_or(0.0);
            acc
        })
        .collect()
}

/// Full report for an arbitrary complement over shells `n_min..=n_max`.
pub fn wiener_report(
    omega_c: &CompactSetSpec,
    a: f64,
    n_min: i32,
    n_max: i32,
    opts: &SeriesOptions,
    rho_grid: Option<&[f64]>,
) -> Result<WienerReport> {
    let shells = shell_decompose(omega_c, a, n_min, n_max)?;
    report_from_shells(&shells, omega_c, opts, rho_grid, 0, None)
}

fn report_from_shells(
    shells: &ShellDecomposition,
    omega_c: &CompactSetSpec,
    opts: &SeriesOptions,
    rho_grid: Option<&[f64]>,
    log_depth: u32,
    known: Option<Verdict>,
) -> Result<WienerReport> {
    let terms = series_terms(shells, opts)?;
    let integral = match rho_grid {
        Some(grid) => integral_test(omega_c, grid, opts)?,
        None => Vec::new(),
    };
    let (verdict, confidence, fit) = classify(&terms, log_depth, known);
    Ok(WienerReport { a: shells.a, partial_sums: partial_sums(&terms), shells: terms, integral, verdict, confidence, fit })
}

/// Report for a registered family; its known asymptotics decide the verdict
/// whenever enough shells were computed.
pub fn family_report(
    name: &str,
    params: &FamilyParams,
    opts: &SeriesOptions,
    rho_grid: Option<&[f64]>,
) -> Result<WienerReport> {
    let family = family_registry().get(name)?;
    let omega_c = family.build(params)?;
    let shells = shell_decompose(&omega_c, params.a, params.n_min, params.n_max)?;
    let known = family.known_verdict(params);
    let mut report =
        report_from_shells(&shells, &omega_c, opts, rho_grid, family.log_depth(params), Some(known))?;
    if report.shells.iter().filter(|s| s.is_computed()).count() < MIN_SHELLS {
        report.verdict = Verdict::Inconclusive;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[(i32, f64)]) -> Vec<ShellTerm> {
        values
            .iter()
            .map(|&(n, v)| ShellTerm { term_h: Some(v), ..ShellTerm::empty(n) })
            .collect()
    }

    #[test]
    fn fit_recovers_exponents() {
        let harmonic: Vec<(i32, f64)> = (1..=8).map(|n| (n, 1.0 / n as f64)).collect();
        let f = tail_fit(&harmonic, 0).unwrap();
        assert!((f.p - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        let bertrand: Vec<(i32, f64)> =
            (3..=9).map(|n| (n, 1.0 / (n as f64 * (n as f64).ln().powi(2)))).collect();
        assert!((tail_fit(&bertrand, 1).unwrap().p - 2.0).abs() < 1e-12);
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&rows(&[(1, 1.0), (2, 1.0), (3, 1.0)]), 0, None).0, Verdict::Inconclusive);
        assert_eq!(classify(&rows(&[(1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0)]), 0, None).0, Verdict::LogRegular);
        let squares: Vec<(i32, f64)> = (1..=6).map(|n| (n, 1.0 / (n * n) as f64)).collect();
        assert_eq!(classify(&rows(&squares), 0, None).0, Verdict::LogIrregular);
        let zeros: Vec<(i32, f64)> = (1..=6).map(|n| (n, 0.0)).collect();
        assert_eq!(classify(&rows(&zeros), 0, None).0, Verdict::LogIrregular);
        let middle: Vec<(i32, f64)> = (1..=6).map(|n| (n, (n as f64).powf(-1.1))).collect();
        assert_eq!(classify(&rows(&middle), 0, None).0, Verdict::Inconclusive);
        let (v, why, _) = classify(&rows(&middle), 0, Some(Verdict::LogRegular));
        assert_eq!(v, Verdict::LogRegular);
        assert!(why.contains("does not agree"));
    }

    #[test]
    fn level_circles_terms_are_one() {
        let p = FamilyParams { n_min: 1, n_max: 4, ..Default::default() };
        let r = family_report("level_circles", &p, &SeriesOptions::default(), None).unwrap();
        for s in &r.shells {
            assert!((s.term_h.unwrap() - 1.0).abs() < 1e-3, "{s:?}");
            // R_1 of a full circle at the singular point is 1
            assert!((s.reduction_classical.unwrap() - 1.0).abs() < 1e-3, "{s:?}");
        }
        assert_eq!(r.verdict, Verdict::LogRegular);
    }

    #[test]
    fn verdict_does_not_depend_on_base() {
        for (a, n_max) in [(2.0, 6), (3.0, 5), (4.0, 4)] {
            let p = FamilyParams { a, n_min: 1, n_max, ..Default::default() };
            let r = family_report("deleted_radius", &p, &SeriesOptions::default(), None).unwrap();
            assert_eq!(r.verdict, Verdict::LogRegular, "a = {a}: {}", r.confidence);
        }
    }

    #[test]
    fn empty_complement_is_irregular() {
        let r = wiener_report(&CompactSetSpec::empty("D"), 2.0, 1, 5, &SeriesOptions::default(), Some(&[2.0, 4.0]))
            .unwrap();
        assert!(r.shells.iter().all(|s| s.term_h == Some(0.0)));
        assert!(r.integral.iter().all(|s| s.c == 0.0));
        assert_eq!(r.verdict, Verdict::LogIrregular);
    }
}
