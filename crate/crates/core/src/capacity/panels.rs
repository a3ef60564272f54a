use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::PanelShape;
use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, Curve, LogPolarPoint};
use crate::kernels::{green_disk, green_smooth, mean_neg_log_segment, self_panel_mean_neg_log, KernelKind, GAUSS8};

/// Largest panel count accepted for one dense energy matrix.
pub const MAX_TOTAL_PANELS: usize = 4096;

/// Pairs closer than this many panel lengths get the analytic near-field rule.
const NEAR_FIELD: f64 = 3.0;

/// Curves shorter than `e^MICRO_LOG_LEN` are handled in their own normalized
/// coordinate, since their panels are not resolvable in absolute `t`.
const MICRO_LOG_LEN: f64 = -20.0;

/// How many panels each boundary curve gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRule {
    pub per_unit: f64,
    pub min_panels: usize,
    pub max_panels: usize,
}

impl Default for PanelRule {
    fn default() -> Self {
        Self { per_unit: 40.0, min_panels: 32, max_panels: 640 }
    }
}

impl PanelRule {
    /// Exactly `n` panels per curve.
    pub fn fixed(n: usize) -> Self {
        Self { per_unit: 0.0, min_panels: n, max_panels: n }
    }

    pub fn count(&self, log_len: f64) -> usize {
        let want = (log_len.exp() * self.per_unit).ceil();
        let want = if want.is_finite() { want as usize } else { self.max_panels };
        want.clamp(self.min_panels.max(1), self.max_panels.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.per_unit >= 0.0) || self.min_panels == 0 || self.max_panels < self.min_panels {
            return Err(Error::Parameter(format!("bad panel rule {self:?}")));
        }
        Ok(())
    }
}

/// One panel of a boundary curve carrying a uniform density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub mid: LogPolarPoint,
    pub tangent: (f64, f64),
    pub log_len: f64,
    pub curve: usize,
    /// Normalized position of the midpoint along the curve, in `[0, 1]`.
    pub sigma: f64,
    /// Normalized half-width.
    pub half_sigma: f64,
    pub source_primitive: usize,
}

impl Panel {
    pub fn len(&self) -> f64 {
        self.log_len.exp()
    }

    pub fn shape(&self) -> PanelShape {
        PanelShape { tangent: self.tangent, log_len: self.log_len }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PanelSet {
    pub panels: Vec<Panel>,
    pub curve_log_len: Vec<f64>,
    pub curve_straight: Vec<bool>,
}

impl PanelSet {
    pub fn len(&self) -> usize {
        self.panels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.panels.is_empty()
    }

    pub fn nodes(&self) -> Vec<LogPolarPoint> {
        self.panels.iter().map(|p| p.mid).collect()
    }

    pub fn shapes(&self) -> Vec<PanelShape> {
        self.panels.iter().map(Panel::shape).collect()
    }
}

fn is_closed(c: &Curve) -> bool {
    match c {
        Curve::Straight { dir, length, .. } => dir.0 == 0.0 && *length >= TAU - 1e-12,
        Curve::CircleArc { phi_lo, phi_hi, .. } => phi_hi - phi_lo >= TAU - 1e-12,
    }
}

/// Panels on the outer boundary of the set: the curve primitives plus the
/// boundary curves of disks and bands, without pieces buried inside an area
/// primitive and with overlapping arcs and radial segments merged.
pub fn capacity_panels(spec: &CompactSetSpec, rule: &PanelRule) -> Result<PanelSet> {
    rule.validate()?;
    spec.validate()?;
    let spec = spec.normalized();
    let mut out = PanelSet::default();
    let mut seen = std::collections::HashSet::new();
    for (k, prim) in spec.primitives.iter().enumerate() {
        for curve in prim.boundary_curves() {
            let cid = out.curve_log_len.len();
            let log_l = curve.log_length();
            out.curve_log_len.push(log_l);
            out.curve_straight.push(curve.is_straight());
            let n = rule.count(log_l);
            let cuts: Vec<f64> = if is_closed(&curve) {
                (0..=n).map(|m| m as f64 / n as f64).collect()
            } else {
                (0..=n).map(|m| 0.5 * (1.0 - (PI * m as f64 / n as f64).cos())).collect()
            };
            for w in cuts.windows(2) {
                let sigma = 0.5 * (w[0] + w[1]);
                let half = 0.5 * (w[1] - w[0]);
                let ((t, th), tangent) = curve.at(sigma);
                let mid = LogPolarPoint::raw(t, th);
                let buried = spec
                    .primitives
                    .iter()
                    .enumerate()
                    .any(|(j, q)| j != k && q.contains_interior(&mid, 1e-12 * t.max(1.0)));
                if buried {
                    continue;
                }
                if log_l >= MICRO_LOG_LEN && !seen.insert((mid.t.to_bits(), mid.theta.to_bits())) {
                    continue;
                }
                out.panels.push(Panel {
                    mid,
                    tangent,
                    log_len: log_l + (2.0 * half).ln(),
                    curve: cid,
                    sigma,
                    half_sigma: half,
                    source_primitive: k,
                });
            }
        }
    }
    if out.len() > MAX_TOTAL_PANELS {
        return Err(Error::Parameter(format!(
            "{} panels exceed the dense limit of {MAX_TOTAL_PANELS}; lower the panel rule",
            out.len()
        )));
    }
    Ok(out)
}

/// Mean of `G` over the panel pair for the Laplacian kernel.
fn laplace_pair(set: &PanelSet, a: &Panel, b: &Panel, same: bool) -> f64 {
    if same {
        return green_smooth(&a.mid, &a.mid) + self_panel_mean_neg_log(a.log_len);
    }
    let curve_ll = set.curve_log_len[a.curve];
    if a.curve == b.curve && curve_ll < MICRO_LOG_LEN && set.curve_straight[a.curve] {
        // normalized coordinate along the curve; distances are e^curve_ll * dsigma
        let ds = a.sigma - b.sigma;
        let s = green_smooth(&a.mid, &b.mid) - curve_ll;
        if ds.abs() > NEAR_FIELD * 2.0 * a.half_sigma.max(b.half_sigma) {
            return s - ds.abs().ln();
        }
        let m: f64 = GAUSS8
            .iter()
            .map(|&(x, w)| 0.5 * w * mean_neg_log_segment(ds + x * a.half_sigma, 0.0, 2.0 * b.half_sigma))
            .sum();
        return s + m;
    }
    let (dt, dth) = b.mid.offset_to(&a.mid);
    let d = dt.hypot(dth);
    let (la, lb) = (a.len(), b.len());
    if d > NEAR_FIELD * la.max(lb) {
        return green_disk(&a.mid, &b.mid).unwrap_or(0.0);
    }
    let normal_b = (-b.tangent.1, b.tangent.0);
    let m: f64 = GAUSS8
        .iter()
        .map(|&(x, w)| {
            let px = dt + 0.5 * x * la * a.tangent.0;
            let py = dth + 0.5 * x * la * a.tangent.1;
            let u = px * b.tangent.0 + py * b.tangent.1;
            let v = px * normal_b.0 + py * normal_b.1;
            0.5 * w * mean_neg_log_segment(u, v, lb)
        })
        .sum();
    green_smooth(&a.mid, &b.mid) + m
}

/// Whether the energy is normalized by `h` (the `h`-capacity) or not (the
/// Greenian capacity, `h = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    H,
    One,
}

/// Panel-averaged Green matrix `G_ij`.
pub fn green_matrix(set: &PanelSet, kind: &KernelKind) -> Result<DMatrix<f64>> {
    let n = set.len();
    let rows: Vec<Vec<f64>> = match kind {
        KernelKind::LaplaceDisk => (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| laplace_pair(set, &set.panels[i], &set.panels[j], i == j)).collect())
            .collect(),
        KernelKind::DiscreteOperator(op) => (0..n)
            .map(|i| {
                (i..n)
                    .map(|j| {
                        let (a, b) = (&set.panels[i].mid, &set.panels[j].mid);
                        if i == j || a.cylinder_distance(b) == 0.0 {
                            op.green_value(a, a)
                        } else {
                            kind.green(a, b)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?,
    };
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            g[(i, i + off)] = v;
            g[(i + off, i)] = v;
        }
    }
    Ok(g)
}

/// `K_ij = G_ij / (h_i h_j)` (or `G_ij` for the Greenian energy) and the
/// `h` values used.
pub fn energy_matrix(set: &PanelSet, kind: &KernelKind, norm: Normalization) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut k = green_matrix(set, kind)?;
    let h: Vec<f64> = set.panels.iter().map(|p| kind.h(&p.mid)).collect();
    if norm == Normalization::H {
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                k[(i, j)] /= h[i] * h[j];
            }
        }
    }
    Ok((k, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;

    #[test]
    fn circle_panels_uniform_and_segments_graded() {
        let c = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        let p = capacity_panels(&c, &PanelRule::fixed(512)).unwrap();
        assert_eq!(p.len(), 512);
        let total: f64 = p.panels.iter().map(Panel::len).sum();
        assert!((total - TAU).abs() < 1e-10);
        let s = CompactSetSpec::new("s", vec![Primitive::radial_segment(2.0, 4.0, 0.0)]);
        let p = capacity_panels(&s, &PanelRule::fixed(64)).unwrap();
        assert!(p.panels[0].len() < p.panels[32].len() / 10.0);
    }

    #[test]
    fn band_becomes_its_boundary() {
        let b = CompactSetSpec::new("b", vec![Primitive::band(1.0, 2.0, 0.0, TAU)]);
        let p = capacity_panels(&b, &PanelRule::fixed(16)).unwrap();
        assert_eq!(p.len(), 32);
        // an arc buried inside a band adds nothing
        let both = CompactSetSpec::new("bb", vec![Primitive::band(1.0, 2.0, 0.0, TAU), Primitive::circle(1.5)]);
        assert_eq!(capacity_panels(&both, &PanelRule::fixed(16)).unwrap().len(), 32);
    }

    #[test]
    fn circle_row_sums_match_mean_green() {
        // mean of G over the circle t = a against any point of it is a
        let c = CompactSetSpec::new("c", vec![Primitive::circle(1.5)]);
        let p = capacity_panels(&c, &PanelRule::fixed(256)).unwrap();
        let g = green_matrix(&p, &KernelKind::LaplaceDisk).unwrap();
        for i in [0, 100] {
            let mean: f64 = (0..256).map(|j| g[(i, j)] * p.panels[j].len()).sum::<f64>() / TAU;
            assert!((mean - 1.5).abs() < 1e-3, "{mean}");
        }
        assert!((g.clone() - g.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn micro_segment_rows() {
        let s = Primitive::RadialSegment { t_lo: 300.0, t_hi: 300.0, theta: 0.0, log_length: Some(-5000.0) };
        let p = capacity_panels(&CompactSetSpec::new("m", vec![s]), &PanelRule::default()).unwrap();
        assert_eq!(p.len(), 32);
        let g = green_matrix(&p, &KernelKind::LaplaceDisk).unwrap();
        assert!(g.iter().all(|v| v.is_finite() && *v > 5000.0));
    }
}
