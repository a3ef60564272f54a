use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::point::{normalize_angle, LogPolarPoint};
use super::primitive::Primitive;
use crate::error::{Error, Result};

/// A compact subset of the punctured disk: a finite union of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSetSpec {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub label: String,
}

/// On-disk geometry document. `a` is the shell ratio used by Wiener runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub label: String,
}

impl From<GeometryFile> for CompactSetSpec {
    fn from(g: GeometryFile) -> Self {
        CompactSetSpec { primitives: g.primitives, label: g.label }
    }
}

/// Nodes and nonnegative weights approximating the set's length/area measure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Discretization {
    pub nodes: Vec<LogPolarPoint>,
    pub weights: Vec<f64>,
    pub source_primitive: Vec<usize>,
}

impl Discretization {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

impl CompactSetSpec {
    pub fn new(label: impl Into<String>, primitives: Vec<Primitive>) -> Self {
        Self { primitives, label: label.into() }
    }

    pub fn empty(label: impl Into<String>) -> Self {
        Self::new(label, Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GeometryFile =
            serde_json::from_str(text).map_err(|e| Error::Parameter(format!("geometry JSON: {e}")))?;
        let spec: CompactSetSpec = g.into();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_geometry_file(&self, a: Option<f64>) -> GeometryFile {
        GeometryFile { a, primitives: self.primitives.clone(), label: self.label.clone() }
    }

    /// Smallest `t` reached by the set; `+inf` for the empty set.
    pub fn t_min(&self) -> f64 {
        self.primitives.iter().map(|p| p.t_range().0).fold(f64::INFINITY, f64::min)
    }

    /// Largest `t` reached by the set; `-inf` for the empty set.
    pub fn t_max(&self) -> f64 {
        self.primitives.iter().map(|p| p.t_range().1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: &LogPolarPoint, tol: f64) -> bool {
        self.primitives.iter().any(|q| q.contains(p, tol))
    }

    pub fn distance(&self, p: &LogPolarPoint) -> f64 {
        self.primitives.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains_interior(&self, p: &LogPolarPoint, margin: f64) -> bool {
        self.primitives.iter().any(|q| q.contains_interior(p, margin))
    }

    /// Exact intersection with `lo <= t <= hi`.
    pub fn clip_t(&self, lo: f64, hi: f64) -> CompactSetSpec {
        CompactSetSpec {
            primitives: self.primitives.iter().filter_map(|p| p.clip_t(lo, hi)).collect(),
            label: format!("{} [t in {lo}..{hi}]", self.label),
        }
    }

    pub fn union(&self, other: &CompactSetSpec) -> CompactSetSpec {
        let mut primitives = self.primitives.clone();
        primitives.extend(other.primitives.iter().copied());
        CompactSetSpec { primitives, label: format!("{} + {}", self.label, other.label) }
    }

    /// Merges overlapping arcs on a common circle and overlapping radial
    /// segments on a common ray, so no two curve primitives share a piece.
    pub fn normalized(&self) -> CompactSetSpec {
        let mut arcs: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        let mut rays: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        let mut rest = Vec::new();
        for p in &self.primitives {
            match *p {
                Primitive::Arc { t, theta_lo, theta_hi } => {
                    arcs.entry(t.to_bits()).or_default().push((theta_lo, theta_hi));
                }
                Primitive::RadialSegment { t_lo, t_hi, theta, log_length: None } => {
                    rays.entry(normalize_angle(theta).to_bits()).or_default().push((t_lo, t_hi));
                }
                other => rest.push(other),
            }
        }
        let mut out = Vec::new();
        for (tb, ivs) in arcs {
            let t = f64::from_bits(tb);
            for (lo, hi) in merge_circle_intervals(&ivs) {
                out.push(Primitive::arc(t, lo, hi));
            }
        }
        for (thb, mut ivs) in rays {
            let theta = f64::from_bits(thb);
            ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cur = ivs[0];
            for &(a, b) in &ivs[1..] {
                if a <= cur.1 {
                    cur.1 = cur.1.max(b);
                } else {
                    out.push(Primitive::radial_segment(cur.0, cur.1, theta));
                    cur = (a, b);
                }
            }
            out.push(Primitive::radial_segment(cur.0, cur.1, theta));
        }
        out.extend(rest);
        CompactSetSpec { primitives: out, label: self.label.clone() }
    }
}

/// Union of angular intervals on the circle, returned as `(lo, hi)` with
/// `lo` in `[0, 2pi)` and `hi - lo <= 2pi`.
fn merge_circle_intervals(ivs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = Vec::new();
    for &(lo, hi) in ivs {
        let span = (hi - lo).min(TAU);
        if span >= TAU - 1e-12 {
            return vec![(0.0, TAU)];
        }
        let l = normalize_angle(lo);
        v.push((l, l + span));
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in v {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    // wrap-around: the last interval may reach past 2pi into the first
    while merged.len() > 1 {
        let first = merged[0];
        let last = *merged.last().unwrap();
        if last.1 >= first.0 + TAU {
            merged.remove(0);
            let l = merged.last_mut().unwrap();
            l.1 = l.1.max(first.1 + TAU);
        } else {
            break;
        }
    }
    if let Some(&(lo, hi)) = merged.first() {
        if merged.len() == 1 && hi - lo >= TAU - 1e-12 {
            return vec![(0.0, TAU)];
        }
    }
    merged
}

/// Lays nodes at panel/cell midpoints, `resolution` nodes per unit length.
/// An empty spec yields an empty discretization.
pub fn discretize(spec: &CompactSetSpec, resolution: f64) -> Result<Discretization> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::Parameter(format!("resolution must be positive, got {resolution}")));
    }
    spec.validate()?;
    let mut out = Discretization::default();
    for (k, p) in spec.primitives.iter().enumerate() {
        let (nodes, weights) = p.layout(resolution);
        out.source_primitive.extend(std::iter::repeat(k).take(nodes.len()));
        out.nodes.extend(nodes);
        out.weights.extend(weights);
    }
    Ok(out)
}

/// `E_n = K ∩ {a^n <= t <= a^{n+1}}` for `n` in `[n_min, n_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellDecomposition {
    pub a: f64,
    pub n_min: i32,
    pub n_max: i32,
    pub shells: BTreeMap<i32, CompactSetSpec>,
}

impl ShellDecomposition {
    pub fn bounds(&self, n: i32) -> (f64, f64) {
        shell_bounds(self.a, n)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &CompactSetSpec)> {
        self.shells.iter().map(|(n, s)| (*n, s))
    }
}

pub fn shell_bounds(a: f64, n: i32) -> (f64, f64) {
    (a.powi(n), a.powi(n + 1))
}

pub fn shell_decompose(
    omega_complement: &CompactSetSpec,
    a: f64,
    n_min: i32,
    n_max: i32,
) -> Result<ShellDecomposition> {
    if !(a > 1.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("shell ratio a must exceed 1, got {a}")));
    }
    if n_min > n_max {
        return Err(Error::Parameter(format!("empty shell range {n_min}..{n_max}")));
    }
    omega_complement.validate()?;
    let shells = (n_min..=n_max)
        .map(|n| {
            let (lo, hi) = shell_bounds(a, n);
            let mut s = omega_complement.clip_t(lo, hi);
            // a circle on the shared level belongs to the upper shell only
            s.primitives.retain(|p| !matches!(p, Primitive::Arc { t, .. } if *t == hi));
            s.label = format!("{} E_{n}", omega_complement.label);
            (n, s)
        })
        .collect();
    Ok(ShellDecomposition { a, n_min, n_max, shells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deleted_radius_shells() {
        let k = CompactSetSpec::new("radius", vec![Primitive::radial_segment(0.1, 1e9, 0.0)]);
        let d = shell_decompose(&k, 2.0, 1, 3).unwrap();
        assert_eq!(d.shells[&1].primitives, vec![Primitive::radial_segment(2.0, 4.0, 0.0)]);
        assert_eq!(d.shells[&2].primitives, vec![Primitive::radial_segment(4.0, 8.0, 0.0)]);
        assert_eq!(d.shells[&3].primitives, vec![Primitive::radial_segment(8.0, 16.0, 0.0)]);
    }

    #[test]
    fn empty_complement_gives_empty_shells() {
        let d = shell_decompose(&CompactSetSpec::empty("D"), 2.0, 1, 5).unwrap();
        assert!(d.shells.values().all(CompactSetSpec::is_empty));
        assert!(shell_decompose(&CompactSetSpec::empty("D"), 1.0, 1, 5).is_err());
        assert!(shell_decompose(&CompactSetSpec::empty("D"), 2.0, 3, 1).is_err());
    }

    #[test]
    fn discretize_examples() {
        let circle = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        let d = discretize(&circle, 512.0 / TAU).unwrap();
        assert_eq!(d.len(), 512);
        assert!((d.total_weight() - TAU).abs() < 1e-12);
        assert!(d.weights.iter().all(|w| (w - TAU / 512.0).abs() < 1e-15));

        let seg = CompactSetSpec::new("s", vec![Primitive::radial_segment(2.0, 4.0, 0.0)]);
        let d = discretize(&seg, 100.0).unwrap();
        assert_eq!(d.len(), 200);
        assert!(d.weights.iter().all(|w| (w - 0.01).abs() < 1e-12));

        let a1 = Primitive::arc(1.0, 0.0, 1.0);
        let a2 = Primitive::arc(1.5, 2.0, 3.0);
        let both = discretize(&CompactSetSpec::new("u", vec![a1, a2]), 10.0).unwrap();
        let d1 = discretize(&CompactSetSpec::new("1", vec![a1]), 10.0).unwrap();
        let d2 = discretize(&CompactSetSpec::new("2", vec![a2]), 10.0).unwrap();
        assert_eq!(both.nodes[..d1.len()], d1.nodes[..]);
        assert_eq!(both.nodes[d1.len()..], d2.nodes[..]);
        assert!(discretize(&CompactSetSpec::empty("e"), 10.0).unwrap().is_empty());
        assert!(discretize(&seg, 0.0).is_err());
    }

    #[test]
    fn merge_arcs_with_wrap() {
        let k = CompactSetSpec::new(
            "arcs",
            vec![
                Primitive::arc(1.0, 5.0, 7.0),
                Primitive::arc(1.0, 0.5, 1.0),
                Primitive::arc(1.0, 0.9, 2.0),
            ],
        );
        let n = k.normalized();
        assert_eq!(n.primitives.len(), 1);
        let Primitive::Arc { theta_lo, theta_hi, .. } = n.primitives[0] else { panic!() };
        assert!((theta_lo - 5.0).abs() < 1e-12 && (theta_hi - (2.0 + TAU)).abs() < 1e-12);

        let full = CompactSetSpec::new(
            "full",
            vec![Primitive::arc(1.0, 0.0, 4.0), Primitive::arc(1.0, 3.0, 6.5)],
        );
        assert_eq!(full.normalized().primitives, vec![Primitive::circle(1.0)]);
    }

    #[test]
    fn geometry_json_schema() {
        let text = r#"{"a": 2, "label": "demo", "primitives": [
            {"kind": "radial_segment", "t_lo": 1, "t_hi": 3, "theta": 0},
            {"kind": "arc", "t": 2, "theta_lo": 0, "theta_hi": 3.14},
            {"kind": "disk", "t": 3, "theta": 1, "radius": 0.5},
            {"kind": "annulus_band", "t_lo": 1, "t_hi": 2, "theta_lo": 0, "theta_hi": 1}
        ]}"#;
        let spec = CompactSetSpec::from_json(text).unwrap();
        assert_eq!(spec.primitives.len(), 4);
        assert!(CompactSetSpec::from_json("{\"primitives\": [{\"kind\": \"blob\"}]}").is_err());
    }
}
