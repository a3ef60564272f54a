//! The h-Dirichlet problem on `Omega = D \ K`, truncated at `t = T`, and the
//! harmonic measure of the singular point obtained by letting `T` grow.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, LogPolarPoint};
use crate::linalg::{solve_dirichlet, CsrMatrix};
use crate::operator::{assemble, discrete_h, CoefficientField, Mesh, MeshOptions};

/// Data on one primitive of `K`: a constant, or a named profile in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PieceData {
    Constant(f64),
    Profile { profile: Profile },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `sign(sin(log2 t))`: oscillates between -1 and 1 all the way to the
    /// singular point.
    SignSinLog2,
}

impl PieceData {
    pub fn value_at(&self, p: &LogPolarPoint) -> f64 {
        match self {
            PieceData::Constant(c) => *c,
            PieceData::Profile { profile: Profile::SignSinLog2 } => {
                let s = p.t.log2().sin();
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            PieceData::Constant(c) => (*c, *c),
            PieceData::Profile { .. } => (-1.0, 1.0),
        }
    }
}

/// `f = g / h` on `K` (one entry per primitive) and its value `f_bar` at the
/// singular point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub values: Vec<PieceData>,
    pub f_bar: f64,
}

impl BoundaryData {
    pub fn constant(k: &CompactSetSpec, value: f64, f_bar: f64) -> Self {
        Self { values: vec![PieceData::Constant(value); k.primitives.len()], f_bar }
    }

    pub fn validate(&self, k: &CompactSetSpec) -> Result<()> {
        if self.values.len() != k.primitives.len() {
            return Err(Error::Invalid(format!(
                "{} boundary values for {} primitives",
                self.values.len(),
                k.primitives.len()
            )));
        }
        let bad = self.values.iter().any(|v| matches!(v, PieceData::Constant(c) if !c.is_finite()));
        if bad || !self.f_bar.is_finite() {
            return Err(Error::Invalid("boundary data must be bounded".into()));
        }
        Ok(())
    }

    /// Value at a node of `K`; the first primitive containing it wins.
    fn at(&self, k: &CompactSetSpec, p: &LogPolarPoint, tol: f64) -> Option<f64> {
        k.primitives.iter().zip(&self.values).find(|(q, _)| q.contains(p, tol)).map(|(_, v)| v.value_at(p))
    }

    /// Range of `f` over the primitives reaching `t >= t_from`, or over all
    /// of `K` when none does; `None` for an empty `K`.
    fn band_near_top(&self, k: &CompactSetSpec, t_from: f64) -> Option<(f64, f64)> {
        let fold = |it: &mut dyn Iterator<Item = &PieceData>| {
            it.fold(None, |acc: Option<(f64, f64)>, v| {
                let (a, b) = v.range();
                Some(acc.map_or((a, b), |(lo, hi)| (lo.min(a), hi.max(b))))
            })
        };
        let mut near = k.primitives.iter().zip(&self.values).filter(|(q, _)| q.t_range().1 >= t_from).map(|(_, v)| v);
        fold(&mut near).or_else(|| fold(&mut self.values.iter()))
    }
}

/// `u` (the h-DP solution) and `v = h u` on the truncated mesh.
#[derive(Debug, Clone)]
pub struct HdpSolution {
    pub mesh: Mesh,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub t_ceiling: f64,
    /// Largest `|Av|` over free nodes, relative to `|A| max|v|`.
    pub residual: f64,
}

impl HdpSolution {
    pub fn u_at(&self, p: &LogPolarPoint) -> Option<f64> {
        self.mesh.interpolate(&self.u, p)
    }

    /// Rows of `t, theta, u, v`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,theta,u,v")?;
        for i in 0..self.mesh.n_nodes() {
            let (t, th) = self.mesh.coords(i);
            writeln!(w, "{t},{th},{},{}", self.u[i], self.v[i])?;
        }
        Ok(())
    }
}

/// A factored truncated problem, reusable for several data sets.
pub struct HdpProblem {
    mesh: Mesh,
    matrix: CsrMatrix,
    h: Vec<f64>,
    k: CompactSetSpec,
    obstacle: Vec<usize>,
}

impl HdpProblem {
    /// Meshes `Omega` up to `t_ceiling`. Parts of `K` above the ceiling are
    /// cut off; the truncation circle itself carries the data at the
    /// singular point.
    pub fn new(k: &CompactSetSpec, field: &dyn CoefficientField, t_ceiling: f64, opts: &MeshOptions) -> Result<Self> {
        k.validate()?;
        if !(t_ceiling > 0.0) || !t_ceiling.is_finite() {
            return Err(Error::Parameter(format!("t_ceiling must be positive, got {t_ceiling}")));
        }
        let mut opts = opts.clone();
        opts.t_ceiling = Some(t_ceiling);
        let k = if k.is_empty() || k.t_max() < t_ceiling { k.clone() } else { k.clip_t(0.0, t_ceiling * (1.0 - 1e-9)) };
        let mesh = Mesh::build(&opts, &k)?;
        if !k.is_empty() {
            mesh.check_resolves(&k)?;
        }
        let form = assemble(field, &mesh)?;
        let zero = form.boundary_mask();
        let chol = crate::linalg::EnvelopeCholesky::factor_with_fixed(&form.matrix, &zero)?;
        let h = discrete_h(&form, &chol);
        let obstacle = mesh.nodes_in(&k);
        Ok(Self { mesh, matrix: form.matrix, h, k, obstacle })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn solve(&self, data: &BoundaryData) -> Result<HdpSolution> {
        data.validate(&self.k)?;
        let mesh = &self.mesh;
        let n = mesh.n_nodes();
        let mut values: Vec<Option<f64>> = vec![None; n];
        let top = mesh.n_rows() - 1;
        for i in &self.obstacle {
            let (t, th) = mesh.coords(*i);
            let p = LogPolarPoint::raw(t, th);
            let tol = 1e-9 * t.max(1.0);
            let f = data.at(&self.k, &p, tol).unwrap_or(0.0);
            values[*i] = Some(self.h[*i] * f);
        }
        for i in mesh.row_nodes(top) {
            values[i] = Some(self.h[i] * data.f_bar);
        }
        for i in mesh.row_nodes(0) {
            values[i] = Some(0.0);
        }
        let v = solve_dirichlet(&self.matrix, &vec![0.0; n], &values)?;
        let av = self.matrix.mul_vec(&v);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let amax = (0..n).map(|i| self.matrix.diag(i)).fold(0.0, f64::max);
        let residual = (0..n).filter(|&i| values[i].is_none()).map(|i| av[i].abs()).fold(0.0, f64::max) / (amax * vmax);
        let nt = mesh.n_theta();
        let mut u: Vec<f64> = (0..n).map(|i| if i < nt { 0.0 } else { v[i] / self.h[i] }).collect();
        // on the unit circle h vanishes; continue u from the first row
        for j in 0..nt {
            u[j] = u[nt + j];
        }
        Ok(HdpSolution { mesh: mesh.clone(), u, v, h: self.h.clone(), t_ceiling: mesh.t_ceiling(), residual })
    }
}

/// Solves the h-DP on `D \ K` truncated at `t_ceiling`.
pub fn solve_hdp(
    k: &CompactSetSpec,
    data: &BoundaryData,
    field: &dyn CoefficientField,
    t_ceiling: f64,
    opts: &MeshOptions,
) -> Result<HdpSolution> {
    HdpProblem::new(k, field, t_ceiling, opts)?.solve(data)
}

fn check_probes(k: &CompactSetSpec, probes: &[LogPolarPoint]) -> Result<()> {
    for p in probes {
        if k.contains(p, 1e-9) {
            return Err(Error::Domain(format!("probe ({}, {}) lies on the obstacle", p.t, p.theta)));
        }
    }
    Ok(())
}

/// `u(probe)` for each truncation and the limit from fitting `alpha + beta / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSeries {
    pub probes: Vec<LogPolarPoint>,
    pub truncations: Vec<f64>,
    /// `values[m][j]`: probe `j` at truncation `m`.
    pub values: Vec<Vec<f64>>,
    pub extrapolated: Vec<f64>,
}

/// Least-squares `alpha` of `y = alpha + beta / T`.
pub fn extrapolate_inverse(ts: &[f64], ys: &[f64]) -> f64 {
    let m = ts.len() as f64;
    let xs: Vec<f64> = ts.iter().map(|t| 1.0 / t).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx > 0.0 {
        my - sxy / sxx * mx
    } else {
        my
    }
}

fn truncation_series<F>(
    k: &CompactSetSpec,
    field: &dyn CoefficientField,
    probes: &[LogPolarPoint],
    truncations: &[f64],
    opts: &MeshOptions,
    eval: F,
) -> Result<TruncationSeries>
where
    F: Fn(&HdpProblem) -> Result<Vec<f64>> + Sync,
{
    if truncations.len() < 3 {
        return Err(Error::Parameter("at least three truncations are needed to extrapolate".into()));
    }
    if truncations.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("truncations must increase".into()));
    }
    if let Some(p) = probes.iter().find(|p| p.t >= truncations[0]) {
        return Err(Error::Parameter(format!("probe at t={} is above the first truncation", p.t)));
    }
    check_probes(k, probes)?;
    let values: Vec<Vec<f64>> = truncations
        .par_iter()
        .map(|&t| eval(&HdpProblem::new(k, field, t, opts)?))
        .collect::<Result<_>>()?;
    let extrapolated = (0..probes.len())
        .map(|j| {
            let ys: Vec<f64> = values.iter().map(|row| row[j]).collect();
            extrapolate_inverse(truncations, &ys)
        })
        .collect();
    Ok(TruncationSeries { probes: probes.to_vec(), truncations: truncations.to_vec(), values, extrapolated })
}

fn probe_values(sol: &HdpSolution, probes: &[LogPolarPoint]) -> Result<Vec<f64>> {
    probes
        .iter()
        .map(|p| sol.u_at(p).ok_or_else(|| Error::Domain(format!("probe at t={} outside the mesh", p.t))))
        .collect()
}

/// `mu_Omega^h(probe, {zeta})`: data 0 on `K` and 1 at the singular point.
pub fn harmonic_measure_of_zeta(
    k: &CompactSetSpec,
    field: &dyn CoefficientField,
    probes: &[LogPolarPoint],
    truncations: &[f64],
    opts: &MeshOptions,
) -> Result<TruncationSeries> {
    let data = BoundaryData::constant(k, 0.0, 1.0);
    truncation_series(k, field, probes, truncations, opts, |pb| probe_values(&pb.solve(&data)?, probes))
}

/// `|u_{f_bar = 1} - u_{f_bar = 0}|` for the same data on `K`.
pub fn uniqueness_gap(
    k: &CompactSetSpec,
    values: &[PieceData],
    field: &dyn CoefficientField,
    probes: &[LogPolarPoint],
    truncations: &[f64],
    opts: &MeshOptions,
) -> Result<TruncationSeries> {
    let one = BoundaryData { values: values.to_vec(), f_bar: 1.0 };
    let zero = BoundaryData { values: values.to_vec(), f_bar: 0.0 };
    truncation_series(k, field, probes, truncations, opts, |pb| {
        let a = probe_values(&pb.solve(&one)?, probes)?;
        let b = probe_values(&pb.solve(&zero)?, probes)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect())
    })
}

/// The three inequalities `liminf f <= liminf u <= limsup u <= limsup f` at
/// the singular point, read off probes `t_j = 2^j` along three angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub data_liminf: f64,
    pub data_limsup: f64,
    pub solution_liminf: f64,
    pub solution_limsup: f64,
    pub holds: [bool; 3],
    pub probes: Vec<(LogPolarPoint, f64)>,
}

impl OscillationReport {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&b| b)
    }
}

/// Compares the oscillation of `u` near the singular point with the band of
/// the data on `K` near the top of the probe range. For an empty `K` the band
/// is `f_bar` alone. `tol` absorbs discretization error.
pub fn boundary_oscillation_check(
    k: &CompactSetSpec,
    data: &BoundaryData,
    field: &dyn CoefficientField,
    t_ceiling: f64,
    opts: &MeshOptions,
    tol: f64,
) -> Result<OscillationReport> {
    let sol = solve_hdp(k, data, field, t_ceiling, opts)?;
    let angles = [std::f64::consts::FRAC_PI_2, std::f64::consts::PI, 1.5 * std::f64::consts::PI];
    let mut probes = Vec::new();
    let mut j = 1;
    while 2f64.powi(j) < t_ceiling / 2.0 {
        for &th in &angles {
            let p = LogPolarPoint::raw(2f64.powi(j), th);
            if !k.contains(&p, 1e-9) {
                probes.push((p, sol.u_at(&p).unwrap_or(f64::NAN)));
            }
        }
        j += 1;
    }
    if probes.is_empty() {
        return Err(Error::Parameter("t_ceiling too small for the probe sequence".into()));
    }
    // the upper half of the probe sequence stands in for the limit
    let t_cut = probes.last().unwrap().0.t.sqrt() * probes[0].0.t.sqrt();
    let tail: Vec<f64> = probes.iter().filter(|(p, _)| p.t >= t_cut).map(|(_, v)| *v).collect();
    let s_inf = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let s_sup = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (d_inf, d_sup) = data.band_near_top(k, t_cut).unwrap_or((data.f_bar, data.f_bar));
    let holds = [d_inf <= s_inf + tol, s_inf <= s_sup + tol, s_sup <= d_sup + tol];
    Ok(OscillationReport {
        data_liminf: d_inf,
        data_limsup: d_sup,
        solution_liminf: s_inf,
        solution_limsup: s_sup,
        holds,
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;
    use crate::operator::Identity;

    fn opts() -> MeshOptions {
        MeshOptions::default().with_n_theta(32)
    }

    #[test]
    fn whole_disk_solution_is_f_bar() {
        let k = CompactSetSpec::empty("D");
        let s = solve_hdp(&k, &BoundaryData::constant(&k, 0.0, 0.7), &Identity, 12.0, &opts()).unwrap();
        assert!(s.u.iter().all(|u| (u - 0.7).abs() < 1e-9));
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn circle_obstacle_matches_radial_solution() {
        let k = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        let s = solve_hdp(&k, &BoundaryData::constant(&k, 0.0, 1.0), &Identity, 16.0, &opts()).unwrap();
        // v = T (t - 2) / (T - 2) is piecewise linear in t, hence exact
        let v = s.mesh.interpolate(&s.v, &LogPolarPoint::raw(4.0, 1.0)).unwrap();
        assert!((v - 16.0 * 2.0 / 14.0).abs() < 1e-9, "{v}");
        let hm = harmonic_measure_of_zeta(&k, &Identity, &[LogPolarPoint::raw(4.0, 1.0)], &[16.0, 32.0, 64.0], &opts())
            .unwrap();
        assert!((hm.extrapolated[0] - 0.5).abs() < 0.01, "{hm:?}");
    }

    #[test]
    fn gap_equals_harmonic_measure() {
        let k = CompactSetSpec::new("arc", vec![Primitive::arc(2.0, 0.0, 2.0)]);
        let probes = [LogPolarPoint::raw(1.0, 3.0), LogPolarPoint::raw(3.0, 0.5)];
        let ts = [8.0, 12.0, 16.0];
        let hm = harmonic_measure_of_zeta(&k, &Identity, &probes, &ts, &opts()).unwrap();
        let gap = uniqueness_gap(&k, &[PieceData::Constant(0.3)], &Identity, &probes, &ts, &opts()).unwrap();
        for (a, b) in hm.values.iter().flatten().zip(gap.values.iter().flatten()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn order_preserved() {
        let k = CompactSetSpec::new("two", vec![Primitive::arc(2.0, 0.0, 2.0), Primitive::circle(4.0)]);
        let lo = BoundaryData { values: vec![PieceData::Constant(-1.0), PieceData::Constant(0.0)], f_bar: 0.0 };
        let hi = BoundaryData { values: vec![PieceData::Constant(0.5), PieceData::Constant(0.2)], f_bar: 0.3 };
        let a = solve_hdp(&k, &lo, &Identity, 10.0, &opts()).unwrap();
        let b = solve_hdp(&k, &hi, &Identity, 10.0, &opts()).unwrap();
        assert!(a.u.iter().zip(&b.u).all(|(x, y)| x <= &(y + 1e-9)));
        assert!(a.u.iter().all(|&x| (-1.0 - 1e-9..=1e-9).contains(&x)));
    }

    #[test]
    fn constant_data_holds_with_equality() {
        let k = CompactSetSpec::new("seg", vec![Primitive::radial_segment(1.0, 60.0, 0.0)]);
        let r = boundary_oscillation_check(&k, &BoundaryData::constant(&k, 0.4, 0.4), &Identity, 64.0, &opts(), 1e-9)
            .unwrap();
        assert!(r.all_hold());
        assert!((r.solution_liminf - 0.4).abs() < 1e-9 && (r.solution_limsup - 0.4).abs() < 1e-9);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let k = CompactSetSpec::empty("D");
        let s = solve_hdp(&k, &BoundaryData::constant(&k, 0.0, 1.0), &Identity, 4.0, &opts()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,theta,u,v\n"));
        assert_eq!(text.lines().count(), s.mesh.n_nodes() + 1);
    }

    #[test]
    fn solution_is_linear_in_piecewise_constant_data() {
        let k = CompactSetSpec::new("two", vec![Primitive::circle(2.0), Primitive::circle(5.0)]);
        let pb = HdpProblem::new(&k, &Identity, 12.0, &opts()).unwrap();
        let d = |a: f64, b: f64, z: f64| BoundaryData { values: vec![PieceData::Constant(a), PieceData::Constant(b)], f_bar: z };
        let e1 = pb.solve(&d(1.0, 0.0, 0.0)).unwrap();
        let e2 = pb.solve(&d(0.0, 1.0, 0.0)).unwrap();
        let ez = pb.solve(&d(0.0, 0.0, 1.0)).unwrap();
        let mix = pb.solve(&d(0.3, -2.0, 0.7)).unwrap();
        for i in 0..mix.u.len() {
            let lin = 0.3 * e1.u[i] - 2.0 * e2.u[i] + 0.7 * ez.u[i];
            assert!((mix.u[i] - lin).abs() < 1e-10);
        }
    }

    #[test]
    fn gap_nonincreasing_in_truncation() {
        let k = CompactSetSpec::new("seg", vec![Primitive::radial_segment(1.0, 20.0, 0.0)]);
        let probes = [LogPolarPoint::raw(2.0, 3.0)];
        let hm = harmonic_measure_of_zeta(&k, &Identity, &probes, &[8.0, 12.0, 16.0], &opts()).unwrap();
        assert!(hm.values.windows(2).all(|w| w[1][0] <= w[0][0] + 1e-9), "{hm:?}");
    }

    #[test]
    fn single_circle_breaks_oscillation_bound() {
        // only one obstacle: the solution tends to f_bar, outside the data band
        let k = CompactSetSpec::new("c", vec![Primitive::circle(1.0)]);
        let data = BoundaryData { values: vec![PieceData::Constant(-1.0)], f_bar: 1.0 };
        let r = boundary_oscillation_check(&k, &data, &Identity, 64.0, &opts(), 0.02).unwrap();
        assert!(!r.holds[2] && r.solution_limsup > 0.5, "{r:?}");
    }

    #[test]
    fn inverse_extrapolation_exact_on_model() {
        let ts = [16.0, 32.0, 64.0];
        let ys: Vec<f64> = ts.iter().map(|t| 0.25 + 3.0 / t).collect();
        assert!((extrapolate_inverse(&ts, &ys) - 0.25).abs() < 1e-12);
    }
}
