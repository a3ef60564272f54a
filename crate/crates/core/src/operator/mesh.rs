use std::f64::consts::TAU;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, CompactSetSpec, LogPolarPoint, Primitive};

/// Smallest triangle angle accepted, in degrees.
pub const MIN_ANGLE_DEG: f64 = 15.0;

/// Largest accepted cell aspect ratio; keeps right triangles above
/// [`MIN_ANGLE_DEG`].
const MAX_ASPECT: f64 = 3.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Nominal number of angular columns.
    pub n_theta: usize,
    /// Top of the meshed strip; defaults to the set's top plus `margin`.
    pub t_ceiling: Option<f64>,
    /// Free strip kept above the set when `t_ceiling` is not given.
    pub margin: f64,
    /// Growth of the row height per unit of t away from the focus band.
    pub grading: f64,
    /// Extra band of t to resolve at the nominal spacing.
    pub focus: Option<(f64, f64)>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self { n_theta: 128, t_ceiling: None, margin: 8.0, grading: 0.25, focus: None }
    }
}

impl MeshOptions {
    pub fn with_n_theta(mut self, n: usize) -> Self {
        self.n_theta = n;
        self
    }

    pub fn with_ceiling(mut self, t: f64) -> Self {
        self.t_ceiling = Some(t);
        self
    }

    pub fn with_focus(mut self, lo: f64, hi: f64) -> Self {
        self.focus = Some((lo, hi));
        self
    }
}

#[derive(Debug)]
struct MeshData {
    rows: Vec<f64>,
    thetas: Vec<f64>,
}

/// Structured triangulation of the strip `[0, t_ceiling] x S^1`.
///
/// Node `(i, j)` sits at `(rows[i], thetas[j])` with index `i * n_theta + j`.
/// Every cell is split along its `(i, j) -> (i + 1, j + 1)` diagonal. Row 0 is
/// the unit circle; the last row is the truncation circle.
#[derive(Debug, Clone)]
pub struct Mesh(Arc<MeshData>);

/// Vertices and barycentric weights of the triangle containing a point.
pub type Location = [(usize, f64); 3];

impl Mesh {
    /// Rows and columns passing through every breakpoint of `set`, refined to
    /// the nominal spacing over the set's t-range.
    pub fn build(opts: &MeshOptions, set: &CompactSetSpec) -> Result<Mesh> {
        if opts.n_theta < 8 {
            return Err(Error::Mesh(format!("need at least 8 angular columns, got {}", opts.n_theta)));
        }
        if !(opts.grading >= 0.0) || !(opts.margin > 0.0) {
            return Err(Error::Parameter("mesh grading and margin must be nonnegative".into()));
        }
        let dth = TAU / opts.n_theta as f64;
        let (mut t_breaks, th_breaks) = breakpoints(set);
        let t_top = if set.is_empty() { 0.0 } else { set.t_max() };
        let ceiling = opts.t_ceiling.unwrap_or(t_top + opts.margin);
        if !(ceiling > t_top) || !ceiling.is_finite() {
            return Err(Error::Mesh(format!("t_ceiling {ceiling} must exceed the set's top {t_top}")));
        }
        if !set.is_empty() && set.t_min() <= 0.0 {
            return Err(Error::Mesh("set touches the unit circle".into()));
        }
        let thetas = columns(&th_breaks, opts.n_theta);
        let (col_min, col_max) = spacing_range(&thetas);

        let mut focus: Vec<(f64, f64)> = Vec::new();
        if !set.is_empty() {
            focus.push((set.t_min(), set.t_max()));
        }
        if let Some(f) = opts.focus {
            focus.push(f);
        }
        let lo = col_max / MAX_ASPECT;
        let hi = col_min * MAX_ASPECT;
        let nominal = dth.clamp(lo, hi);
        let target = |t: f64| -> f64 {
            let d = focus
                .iter()
                .map(|&(a, b)| if t < a { a - t } else if t > b { t - b } else { 0.0 })
                .fold(f64::INFINITY, f64::min);
            let d = if d.is_finite() { d } else { t };
            (nominal * (1.0 + opts.grading * d)).clamp(lo, hi)
        };

        t_breaks.retain(|&t| t > 0.0 && t < ceiling);
        let mut fixed = vec![0.0];
        for t in t_breaks {
            if t - fixed.last().unwrap() >= lo {
                fixed.push(t);
            }
        }
        if ceiling - fixed.last().unwrap() < lo {
            fixed.pop();
        }
        fixed.push(ceiling);

        let mut rows = vec![0.0];
        for w in fixed.windows(2) {
            fill_rows(&mut rows, w[0], w[1], &target);
        }
        let mesh = Mesh(Arc::new(MeshData { rows, thetas }));
        let angle = mesh.min_angle_deg();
        if angle < MIN_ANGLE_DEG - 1e-9 {
            return Err(Error::Mesh(format!(
                "minimum angle {angle:.2} deg below {MIN_ANGLE_DEG} deg; breakpoints too close for this resolution"
            )));
        }
        Ok(mesh)
    }

    /// Mesh over an empty set: nominal spacing over `focus`, graded elsewhere.
    pub fn plain(opts: &MeshOptions) -> Result<Mesh> {
        Self::build(opts, &CompactSetSpec::empty("plain"))
    }

    /// Explicit rows and columns, for tests and custom layouts.
    pub fn from_grid(rows: Vec<f64>, thetas: Vec<f64>) -> Result<Mesh> {
        if rows.len() < 2 || rows[0] != 0.0 || rows.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Mesh("rows must start at 0 and increase".into()));
        }
        if thetas.len() < 3
            || thetas.windows(2).any(|w| !(w[1] > w[0]))
            || thetas[0] < 0.0
            || *thetas.last().unwrap() >= TAU
        {
            return Err(Error::Mesh("columns must increase within [0, 2pi)".into()));
        }
        let m = Mesh(Arc::new(MeshData { rows, thetas }));
        if m.min_angle_deg() < MIN_ANGLE_DEG - 1e-9 {
            return Err(Error::Mesh(format!("minimum angle {:.2} deg", m.min_angle_deg())));
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[f64] {
        &self.0.rows
    }

    pub fn thetas(&self) -> &[f64] {
        &self.0.thetas
    }

    pub fn n_rows(&self) -> usize {
        self.0.rows.len()
    }

    pub fn n_theta(&self) -> usize {
        self.0.thetas.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_rows() * self.n_theta()
    }

    pub fn t_ceiling(&self) -> f64 {
        *self.0.rows.last().unwrap()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_theta() + (j % self.n_theta())
    }

    pub fn row_of(&self, idx: usize) -> usize {
        idx / self.n_theta()
    }

    /// `(t, theta)` of node `idx`.
    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let n = self.n_theta();
        (self.0.rows[idx / n], self.0.thetas[idx % n])
    }

    /// Angular width of cell column `j`, wrapping at the last column.
    pub fn dtheta(&self, j: usize) -> f64 {
        let th = &self.0.thetas;
        let n = th.len();
        if j + 1 < n {
            th[j + 1] - th[j]
        } else {
            th[0] + TAU - th[n - 1]
        }
    }

    /// Angular length attributed to node column `j` (half of each adjacent cell).
    pub fn dual_width(&self, j: usize) -> f64 {
        let n = self.n_theta();
        0.5 * (self.dtheta(j) + self.dtheta((j + n - 1) % n))
    }

    pub fn min_angle_deg(&self) -> f64 {
        let rows = &self.0.rows;
        let mut worst = 90.0f64;
        for w in rows.windows(2) {
            let dt = w[1] - w[0];
            for j in 0..self.n_theta() {
                let dth = self.dtheta(j);
                worst = worst.min((dt.min(dth) / dt.max(dth)).atan().to_degrees());
            }
        }
        worst
    }

    /// Node indices of row `i`.
    pub fn row_nodes(&self, i: usize) -> std::ops::Range<usize> {
        let n = self.n_theta();
        i * n..(i + 1) * n
    }

    /// The two triangles of cell `(i, j)` as node-index triples, each listed
    /// counter-clockwise in the `(t, theta)` plane.
    pub fn cell_triangles(&self, i: usize, j: usize) -> [[usize; 3]; 2] {
        let a = self.index(i, j);
        let b = self.index(i, j + 1);
        let c = self.index(i + 1, j + 1);
        let d = self.index(i + 1, j);
        [[a, c, b], [a, d, c]]
    }

    /// Containing triangle and barycentric weights; `None` outside the strip.
    pub fn locate(&self, p: &LogPolarPoint) -> Option<Location> {
        let rows = &self.0.rows;
        if !(p.t >= 0.0) || p.t > self.t_ceiling() {
            return None;
        }
        let i = match rows.partition_point(|&r| r <= p.t) {
            0 => 0,
            k if k >= rows.len() => rows.len() - 2,
            k => k - 1,
        };
        let th = &self.0.thetas;
        let n = th.len();
        let rel = normalize_angle(p.theta - th[0]);
        let j = th.partition_point(|&c| c - th[0] <= rel).saturating_sub(1).min(n - 1);
        let xi = ((p.t - rows[i]) / (rows[i + 1] - rows[i])).clamp(0.0, 1.0);
        let eta = ((rel - (th[j] - th[0])) / self.dtheta(j)).clamp(0.0, 1.0);
        let (a, b, c, d) =
            (self.index(i, j), self.index(i, j + 1), self.index(i + 1, j + 1), self.index(i + 1, j));
        Some(if eta >= xi {
            [(a, 1.0 - eta), (b, eta - xi), (c, xi)]
        } else {
            [(a, 1.0 - xi), (c, eta), (d, xi - eta)]
        })
    }

    /// Piecewise-linear interpolation of nodal values; `None` outside the strip.
    pub fn interpolate(&self, values: &[f64], p: &LogPolarPoint) -> Option<f64> {
        self.locate(p).map(|loc| loc.iter().map(|&(k, w)| w * values[k]).sum())
    }

    /// Nodes lying on the set, within a relative tolerance.
    pub fn nodes_in(&self, set: &CompactSetSpec) -> Vec<usize> {
        if set.is_empty() {
            return Vec::new();
        }
        let (lo, hi) = (set.t_min(), set.t_max());
        let mut out = Vec::new();
        for (i, &t) in self.0.rows.iter().enumerate() {
            let tol = 1e-9 * t.max(1.0);
            if t < lo - tol || t > hi + tol {
                continue;
            }
            for j in 0..self.n_theta() {
                let p = LogPolarPoint::raw(t, self.0.thetas[j]);
                if set.contains(&p, tol) {
                    out.push(self.index(i, j));
                }
            }
        }
        out
    }

    /// Errors unless every primitive of the set carries enough mesh nodes to
    /// be seen by the discrete problem.
    pub fn check_resolves(&self, set: &CompactSetSpec) -> Result<()> {
        for (k, p) in set.primitives.iter().enumerate() {
            let single = CompactSetSpec::new("", vec![*p]);
            let n = self.nodes_in(&single).len();
            let needed = match p {
                Primitive::Disk { .. } | Primitive::AnnulusBand { .. } => 1,
                _ => 2,
            };
            if n < needed {
                return Err(Error::Mesh(format!(
                    "primitive {k} ({}) covers {n} mesh nodes; refine the mesh",
                    p.kind_name()
                )));
            }
        }
        Ok(())
    }
}

fn breakpoints(set: &CompactSetSpec) -> (Vec<f64>, Vec<f64>) {
    let mut ts = Vec::new();
    let mut ths = Vec::new();
    for p in &set.primitives {
        match *p {
            Primitive::RadialSegment { t_lo, t_hi, theta, log_length } => {
                ts.push(t_hi);
                if log_length.is_none() {
                    ts.push(t_lo);
                }
                ths.push(theta);
            }
            Primitive::Arc { t, theta_lo, theta_hi } => {
                ts.push(t);
                if theta_hi - theta_lo < TAU - 1e-12 {
                    ths.push(theta_lo);
                    ths.push(theta_hi);
                }
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                ts.push(t_lo);
                ts.push(t_hi);
                if theta_hi - theta_lo < TAU - 1e-12 {
                    ths.push(theta_lo);
                    ths.push(theta_hi);
                }
            }
            Primitive::Disk { t, theta, .. } => {
                ts.push(t);
                ths.push(theta);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    (ts, ths)
}

/// Columns through every angular breakpoint, with uniform spacing close to
/// `2pi / n` between consecutive breakpoints.
fn columns(breaks: &[f64], n: usize) -> Vec<f64> {
    let dth = TAU / n as f64;
    let mut b: Vec<f64> = breaks.iter().map(|&x| normalize_angle(x)).collect();
    b.sort_by(f64::total_cmp);
    let mut kept: Vec<f64> = Vec::new();
    for x in b {
        if kept.last().is_none_or(|&l| x - l >= 0.5 * dth) {
            kept.push(x);
        }
    }
    if kept.len() > 1 && kept[0] + TAU - kept[kept.len() - 1] < 0.5 * dth {
        kept.pop();
    }
    if kept.is_empty() {
        return (0..n).map(|j| j as f64 * dth).collect();
    }
    let mut out = Vec::new();
    for k in 0..kept.len() {
        let a = kept[k];
        let b = if k + 1 < kept.len() { kept[k + 1] } else { kept[0] + TAU };
        let m = ((b - a) / dth).round().max(1.0) as usize;
        for s in 0..m {
            out.push(normalize_angle(a + (b - a) * s as f64 / m as f64));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

fn spacing_range(thetas: &[f64]) -> (f64, f64) {
    let n = thetas.len();
    (0..n)
        .map(|j| if j + 1 < n { thetas[j + 1] - thetas[j] } else { thetas[0] + TAU - thetas[n - 1] })
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

fn fill_rows(rows: &mut Vec<f64>, u: f64, v: f64, target: &dyn Fn(f64) -> f64) {
    let mut steps = Vec::new();
    let mut s = u;
    while s < v {
        let h = target(s);
        steps.push(h);
        s += h;
    }
    let total: f64 = steps.iter().sum();
    if steps.len() > 1 && total - (v - u) > 0.5 * steps[steps.len() - 1] {
        steps.pop();
    }
    let scale = (v - u) / steps.iter().sum::<f64>();
    let mut acc = u;
    let m = steps.len();
    for (k, h) in steps.into_iter().enumerate() {
        acc += h * scale;
        rows.push(if k + 1 == m { v } else { acc });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_hit_breakpoints() {
        let set = CompactSetSpec::new(
            "s",
            vec![Primitive::radial_segment(2.0, 4.0, 1.0), Primitive::arc(3.0, 0.5, 2.0)],
        );
        let m = Mesh::build(&MeshOptions::default().with_n_theta(64), &set).unwrap();
        for t in [2.0, 3.0, 4.0] {
            assert!(m.rows().contains(&t), "{t}");
        }
        for th in [0.5, 1.0, 2.0] {
            assert!(m.thetas().iter().any(|&c| (c - th).abs() < 1e-12), "{th}");
        }
        assert!(m.min_angle_deg() >= MIN_ANGLE_DEG);
        assert_eq!(m.t_ceiling(), 12.0);
        m.check_resolves(&set).unwrap();
        let on = m.nodes_in(&set);
        assert!(on.iter().all(|&k| {
            let (t, th) = m.coords(k);
            set.contains(&LogPolarPoint::raw(t, th), 1e-9)
        }));
    }

    #[test]
    fn locate_and_interpolate_linear() {
        let m = Mesh::plain(&MeshOptions::default().with_n_theta(32).with_ceiling(5.0)).unwrap();
        let vals: Vec<f64> = (0..m.n_nodes())
            .map(|k| {
                let (t, th) = m.coords(k);
                2.0 * t + th.cos()
            })
            .collect();
        let p = LogPolarPoint::raw(1.234, 6.2);
        let v = m.interpolate(&vals, &p).unwrap();
        assert!((v - (2.0 * 1.234 + 6.2f64.cos())).abs() < 5e-3);
        let loc = m.locate(&p).unwrap();
        assert!((loc.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(m.locate(&LogPolarPoint::raw(6.0, 0.0)).is_none());
    }

    #[test]
    fn tiny_set_is_not_resolved() {
        let set = CompactSetSpec::new("a", vec![Primitive::arc(1.0, 0.0, 1e-3)]);
        let m = Mesh::build(&MeshOptions::default(), &set).unwrap();
        assert!(matches!(m.check_resolves(&set), Err(Error::Mesh(_))));
    }

    #[test]
    fn bad_grids_rejected() {
        assert!(Mesh::from_grid(vec![0.0, 1.0], vec![0.0, 0.1, 0.2]).is_err());
        assert!(Mesh::build(&MeshOptions::default().with_ceiling(1.0), &CompactSetSpec::new("c", vec![Primitive::circle(2.0)])).is_err());
    }
}
