use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::point::{normalize_angle, wrap_angle, LogPolarPoint};
use crate::error::{Error, Result};

const FULL_TURN_TOL: f64 = 1e-12;

/// One of the four building blocks of a compact set. All fields are in
/// cylinder units: `t = -log r` and angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// `{theta} x [t_lo, t_hi]`. When the segment is too short for `t_hi - t_lo`
    /// to be representable, `log_length` carries `ln(t_hi - t_lo)` and
    /// `t_lo` is only indicative.
    RadialSegment {
        t_lo: f64,
        t_hi: f64,
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        log_length: Option<f64>,
    },
    /// `{t} x [theta_lo, theta_hi]`, span at most a full turn.
    Arc { t: f64, theta_lo: f64, theta_hi: f64 },
    /// A round disk in the cylinder metric, optionally cut to a band of t.
    Disk {
        t: f64,
        theta: f64,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_clip: Option<[f64; 2]>,
    },
    /// `[t_lo, t_hi] x [theta_lo, theta_hi]`.
    AnnulusBand { t_lo: f64, t_hi: f64, theta_lo: f64, theta_hi: f64 },
}

/// A curve in the `(t, theta)` plane used for panel layouts.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `start + s * length * dir` for `s` in `[0, 1]`.
    Straight { start: (f64, f64), dir: (f64, f64), length: f64, log_length: f64 },
    /// `center + radius * (cos phi, sin phi)` for `phi` in `[phi_lo, phi_hi]`.
    CircleArc { center: (f64, f64), radius: f64, phi_lo: f64, phi_hi: f64 },
}

impl Curve {
    pub fn log_length(&self) -> f64 {
        match self {
            Curve::Straight { log_length, .. } => *log_length,
            Curve::CircleArc { radius, phi_lo, phi_hi, .. } => (radius * (phi_hi - phi_lo)).ln(),
        }
    }

    pub fn length(&self) -> f64 {
        self.log_length().exp()
    }

    /// Position and unit tangent at fraction `s` of the way along the curve.
    pub fn at(&self, s: f64) -> ((f64, f64), (f64, f64)) {
        match self {
            Curve::Straight { start, dir, length, .. } => {
                ((start.0 + s * length * dir.0, start.1 + s * length * dir.1), *dir)
            }
            Curve::CircleArc { center, radius, phi_lo, phi_hi } => {
                let phi = phi_lo + s * (phi_hi - phi_lo);
                let (sn, cs) = phi.sin_cos();
                ((center.0 + radius * cs, center.1 + radius * sn), (-sn, cs))
            }
        }
    }

    pub fn is_straight(&self) -> bool {
        matches!(self, Curve::Straight { .. })
    }
}

fn angle_in_span(theta: f64, lo: f64, hi: f64, tol: f64) -> bool {
    let span = hi - lo;
    if span >= TAU - FULL_TURN_TOL {
        return true;
    }
    let d = normalize_angle(theta - lo);
    d <= span + tol || d >= TAU - tol
}

/// Distance from an angle to the interval `[lo, hi]` on the circle.
fn angle_distance(theta: f64, lo: f64, hi: f64) -> f64 {
    if angle_in_span(theta, lo, hi, 0.0) {
        return 0.0;
    }
    wrap_angle(theta - lo).abs().min(wrap_angle(theta - hi).abs())
}

impl Primitive {
    pub fn radial_segment(t_lo: f64, t_hi: f64, theta: f64) -> Self {
        Primitive::RadialSegment { t_lo, t_hi, theta, log_length: None }
    }

    pub fn arc(t: f64, theta_lo: f64, theta_hi: f64) -> Self {
        Primitive::Arc { t, theta_lo, theta_hi }
    }

    pub fn circle(t: f64) -> Self {
        Primitive::Arc { t, theta_lo: 0.0, theta_hi: TAU }
    }

    pub fn disk(t: f64, theta: f64, radius: f64) -> Self {
        Primitive::Disk { t, theta, radius, t_clip: None }
    }

    pub fn band(t_lo: f64, t_hi: f64, theta_lo: f64, theta_hi: f64) -> Self {
        Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Primitive::RadialSegment { .. } => "radial_segment",
            Primitive::Arc { .. } => "arc",
            Primitive::Disk { .. } => "disk",
            Primitive::AnnulusBand { .. } => "annulus_band",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{} field {name} is not finite", self.kind_name())))
            }
        };
        match *self {
            Primitive::RadialSegment { t_lo, t_hi, theta, log_length } => {
                finite(t_lo, "t_lo")?;
                finite(t_hi, "t_hi")?;
                finite(theta, "theta")?;
                if !(t_lo > 0.0) || t_hi < t_lo {
                    return Err(Error::Invalid(format!(
                        "radial segment needs 0 < t_lo <= t_hi, got [{t_lo}, {t_hi}]"
                    )));
                }
                if let Some(l) = log_length {
                    if l.is_nan() || l > (t_hi).ln() {
                        return Err(Error::Invalid(format!("bad log_length {l}")));
                    }
                }
            }
            Primitive::Arc { t, theta_lo, theta_hi } => {
                finite(t, "t")?;
                finite(theta_lo, "theta_lo")?;
                finite(theta_hi, "theta_hi")?;
                if !(t > 0.0) {
                    return Err(Error::Invalid(format!("arc needs t > 0, got {t}")));
                }
                let span = theta_hi - theta_lo;
                if !(span > 0.0) || span > TAU + FULL_TURN_TOL {
                    return Err(Error::Invalid(format!("arc span must be in (0, 2pi], got {span}")));
                }
            }
            Primitive::Disk { t, theta, radius, t_clip } => {
                finite(t, "t")?;
                finite(theta, "theta")?;
                finite(radius, "radius")?;
                if !(radius > 0.0) || radius >= PI || t - radius <= 0.0 {
                    return Err(Error::Invalid(format!(
                        "disk needs 0 < radius < min(pi, t), got radius {radius} at t {t}"
                    )));
                }
                if let Some([lo, hi]) = t_clip {
                    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                        return Err(Error::Invalid(format!("bad disk clip [{lo}, {hi}]")));
                    }
                }
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                finite(t_lo, "t_lo")?;
                finite(t_hi, "t_hi")?;
                finite(theta_lo, "theta_lo")?;
                finite(theta_hi, "theta_hi")?;
                if !(t_lo > 0.0) || !(t_hi > t_lo) {
                    return Err(Error::Invalid(format!(
                        "band needs 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]"
                    )));
                }
                let span = theta_hi - theta_lo;
                if !(span > 0.0) || span > TAU + FULL_TURN_TOL {
                    return Err(Error::Invalid(format!("band span must be in (0, 2pi], got {span}")));
                }
            }
        }
        Ok(())
    }

    /// `[min t, max t]` over the primitive.
    pub fn t_range(&self) -> (f64, f64) {
        match *self {
            Primitive::RadialSegment { t_lo, t_hi, .. } => (t_lo, t_hi),
            Primitive::Arc { t, .. } => (t, t),
            Primitive::Disk { t, radius, t_clip, .. } => {
                let (mut lo, mut hi) = (t - radius, t + radius);
                if let Some([a, b]) = t_clip {
                    lo = lo.max(a);
                    hi = hi.min(b);
                }
                (lo, hi)
            }
            Primitive::AnnulusBand { t_lo, t_hi, .. } => (t_lo, t_hi),
        }
    }

    pub fn is_area(&self) -> bool {
        matches!(self, Primitive::Disk { .. } | Primitive::AnnulusBand { .. })
    }

    /// `ln` of the length of a curve primitive, `None` for areas.
    pub fn log_length(&self) -> Option<f64> {
        match *self {
            Primitive::RadialSegment { t_lo, t_hi, log_length, .. } => {
                Some(log_length.unwrap_or_else(|| (t_hi - t_lo).ln()))
            }
            Primitive::Arc { theta_lo, theta_hi, .. } => Some((theta_hi - theta_lo).ln()),
            _ => None,
        }
    }

    /// Length for curves, area for the two-dimensional primitives.
    pub fn measure(&self) -> f64 {
        match *self {
            Primitive::RadialSegment { .. } | Primitive::Arc { .. } => {
                self.log_length().map(f64::exp).unwrap_or(0.0)
            }
            Primitive::Disk { t, radius, t_clip, .. } => match t_clip {
                None => PI * radius * radius,
                Some([a, b]) => {
                    // area of the disk between two horizontal chords
                    let seg = |y: f64| -> f64 {
                        let y = y.clamp(-radius, radius);
                        y * (radius * radius - y * y).sqrt() + radius * radius * (y / radius).asin()
                    };
                    seg(b - t) - seg(a - t)
                }
            },
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                (t_hi - t_lo) * (theta_hi - theta_lo).min(TAU)
            }
        }
    }

    /// Membership with an absolute tolerance in the cylinder metric.
    pub fn contains(&self, p: &LogPolarPoint, tol: f64) -> bool {
        self.distance(p) <= tol
    }

    /// Cylinder-metric distance from `p` to the primitive (zero inside).
    /// For clipped disks this is a lower bound.
    pub fn distance(&self, p: &LogPolarPoint) -> f64 {
        match *self {
            Primitive::RadialSegment { t_lo, t_hi, theta, log_length } => {
                let lo = if log_length.is_some() { t_lo.min(t_hi) } else { t_lo };
                let dt = if p.t < lo {
                    lo - p.t
                } else if p.t > t_hi {
                    p.t - t_hi
                } else {
                    0.0
                };
                dt.hypot(wrap_angle(p.theta - theta))
            }
            Primitive::Arc { t, theta_lo, theta_hi } => {
                (p.t - t).hypot(angle_distance(p.theta, theta_lo, theta_hi))
            }
            Primitive::Disk { t, theta, radius, t_clip } => {
                let d = (p.t - t).hypot(wrap_angle(p.theta - theta));
                let mut dist = (d - radius).max(0.0);
                if let Some([a, b]) = t_clip {
                    let dt = if p.t < a { a - p.t } else if p.t > b { p.t - b } else { 0.0 };
                    dist = dist.max(dt);
                }
                dist
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                let dt = if p.t < t_lo {
                    t_lo - p.t
                } else if p.t > t_hi {
                    p.t - t_hi
                } else {
                    0.0
                };
                dt.hypot(angle_distance(p.theta, theta_lo, theta_hi))
            }
        }
    }

    /// True when `p` is inside the primitive by at least `margin`.
    /// Curves have no interior.
    pub fn contains_interior(&self, p: &LogPolarPoint, margin: f64) -> bool {
        match *self {
            Primitive::RadialSegment { .. } | Primitive::Arc { .. } => false,
            Primitive::Disk { t, theta, radius, t_clip } => {
                let d = (p.t - t).hypot(wrap_angle(p.theta - theta));
                let in_clip = t_clip.map_or(true, |[a, b]| p.t > a + margin && p.t < b - margin);
                d < radius - margin && in_clip
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                if !(p.t > t_lo + margin && p.t < t_hi - margin) {
                    return false;
                }
                let span = theta_hi - theta_lo;
                if span >= TAU - FULL_TURN_TOL {
                    return true;
                }
                let d = normalize_angle(p.theta - theta_lo);
                d > margin && d < span - margin
            }
        }
    }

    /// Intersection with the band `lo <= t <= hi`. Pieces of zero length
    /// (single points) are dropped since they carry no capacity.
    pub fn clip_t(&self, lo: f64, hi: f64) -> Option<Primitive> {
        match *self {
            Primitive::RadialSegment { t_lo, t_hi, theta, log_length } => match log_length {
                None => {
                    let a = t_lo.max(lo);
                    let b = t_hi.min(hi);
                    (b > a).then(|| Primitive::radial_segment(a, b, theta))
                }
                Some(ll) => {
                    // exponent-symbolic segment [t_hi - e^ll, t_hi]
                    if t_hi <= lo {
                        return None;
                    }
                    let lo_cuts = (t_hi - lo).ln() < ll;
                    if hi >= t_hi {
                        return Some(if lo_cuts {
                            Primitive::radial_segment(lo, t_hi, theta)
                        } else {
                            *self
                        });
                    }
                    if (t_hi - hi).ln() > ll {
                        return None;
                    }
                    let a = if lo_cuts { lo } else { t_hi - ll.exp() };
                    (hi > a).then(|| Primitive::radial_segment(a, hi, theta))
                }
            },
            Primitive::Arc { t, .. } => (t >= lo && t <= hi).then_some(*self),
            Primitive::Disk { t, theta, radius, t_clip } => {
                let (mut a, mut b) = (lo, hi);
                if let Some([c, d]) = t_clip {
                    a = a.max(c);
                    b = b.min(d);
                }
                a = a.max(t - radius);
                b = b.min(t + radius);
                if !(b > a) {
                    return None;
                }
                let clip = if a <= t - radius && b >= t + radius { None } else { Some([a, b]) };
                Some(Primitive::Disk { t, theta, radius, t_clip: clip })
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                let a = t_lo.max(lo);
                let b = t_hi.min(hi);
                (b > a).then_some(Primitive::AnnulusBand { t_lo: a, t_hi: b, theta_lo, theta_hi })
            }
        }
    }

    /// The curves carrying this primitive's boundary (the curve itself for
    /// one-dimensional primitives).
    pub fn boundary_curves(&self) -> Vec<Curve> {
        match *self {
            Primitive::RadialSegment { t_hi, theta, .. } => {
                let ll = self.log_length().unwrap();
                vec![Curve::Straight {
                    start: (t_hi, theta),
                    dir: (-1.0, 0.0),
                    length: ll.exp(),
                    log_length: ll,
                }]
            }
            Primitive::Arc { t, theta_lo, theta_hi } => {
                let span = (theta_hi - theta_lo).min(TAU);
                vec![Curve::Straight {
                    start: (t, theta_lo),
                    dir: (0.0, 1.0),
                    length: span,
                    log_length: span.ln(),
                }]
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                let span = (theta_hi - theta_lo).min(TAU);
                let mut out = vec![
                    Curve::Straight {
                        start: (t_lo, theta_lo),
                        dir: (0.0, 1.0),
                        length: span,
                        log_length: span.ln(),
                    },
                    Curve::Straight {
                        start: (t_hi, theta_lo),
                        dir: (0.0, 1.0),
                        length: span,
                        log_length: span.ln(),
                    },
                ];
                if span < TAU - FULL_TURN_TOL {
                    let len = t_hi - t_lo;
                    for th in [theta_lo, theta_hi] {
                        out.push(Curve::Straight {
                            start: (t_lo, th),
                            dir: (1.0, 0.0),
                            length: len,
                            log_length: len.ln(),
                        });
                    }
                }
                out
            }
            Primitive::Disk { t, theta, radius, t_clip } => {
                let Some([a, b]) = t_clip else {
                    return vec![Curve::CircleArc {
                        center: (t, theta),
                        radius,
                        phi_lo: 0.0,
                        phi_hi: TAU,
                    }];
                };
                // phi is measured from the +t axis; t = t0 + R cos(phi)
                let mut out = Vec::new();
                let ca = ((a - t) / radius).clamp(-1.0, 1.0);
                let cb = ((b - t) / radius).clamp(-1.0, 1.0);
                let phi_b = cb.acos();
                let phi_a = ca.acos();
                // circle parts with cos(phi) in [ca, cb]
                if phi_a - phi_b > 0.0 {
                    out.push(Curve::CircleArc {
                        center: (t, theta),
                        radius,
                        phi_lo: phi_b,
                        phi_hi: phi_a,
                    });
                    out.push(Curve::CircleArc {
                        center: (t, theta),
                        radius,
                        phi_lo: -phi_a,
                        phi_hi: -phi_b,
                    });
                }
                for (cut, c) in [(a, ca), (b, cb)] {
                    if c > -1.0 && c < 1.0 {
                        let half = radius * (1.0 - c * c).sqrt();
                        out.push(Curve::Straight {
                            start: (cut, theta - half),
                            dir: (0.0, 1.0),
                            length: 2.0 * half,
                            log_length: (2.0 * half).ln(),
                        });
                    }
                }
                out
            }
        }
    }

    /// Node/weight layout with `resolution` nodes per unit of cylinder length
    /// (per unit length squared for areas). Nodes sit at panel or cell midpoints.
    pub fn layout(&self, resolution: f64) -> (Vec<LogPolarPoint>, Vec<f64>) {
        let count = |len: f64| -> usize { ((len * resolution) - 1e-9).ceil().max(1.0) as usize };
        match *self {
            Primitive::RadialSegment { .. } | Primitive::Arc { .. } => {
                let curve = &self.boundary_curves()[0];
                let len = curve.length();
                let n = count(len);
                let w = len / n as f64;
                let nodes = (0..n)
                    .map(|i| {
                        let ((t, th), _) = curve.at((i as f64 + 0.5) / n as f64);
                        LogPolarPoint::raw(t, th)
                    })
                    .collect();
                (nodes, vec![w; n])
            }
            Primitive::AnnulusBand { t_lo, t_hi, theta_lo, theta_hi } => {
                let span = (theta_hi - theta_lo).min(TAU);
                let nt = count(t_hi - t_lo);
                let nth = count(span);
                let dt = (t_hi - t_lo) / nt as f64;
                let dth = span / nth as f64;
                let mut nodes = Vec::with_capacity(nt * nth);
                for i in 0..nt {
                    for j in 0..nth {
                        nodes.push(LogPolarPoint::raw(
                            t_lo + (i as f64 + 0.5) * dt,
                            theta_lo + (j as f64 + 0.5) * dth,
                        ));
                    }
                }
                let n = nodes.len();
                (nodes, vec![dt * dth; n])
            }
            Primitive::Disk { t, theta, radius, t_clip } => {
                let nr = count(radius);
                let dr = radius / nr as f64;
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for k in 0..nr {
                    let r = (k as f64 + 0.5) * dr;
                    let nphi = count(TAU * r);
                    let ring_area = PI * dr * dr * ((k + 1) * (k + 1) - k * k) as f64;
                    for m in 0..nphi {
                        let phi = (m as f64 + 0.5) * TAU / nphi as f64;
                        let pt = t + r * phi.cos();
                        if let Some([a, b]) = t_clip {
                            if pt < a || pt > b {
                                continue;
                            }
                        }
                        nodes.push(LogPolarPoint::raw(pt, theta + r * phi.sin()));
                        weights.push(ring_area / nphi as f64);
                    }
                }
                (nodes, weights)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contains_everything_on_it() {
        let c = Primitive::circle(2.0);
        assert!(c.contains(&LogPolarPoint::raw(2.0, 5.9), 1e-12));
        assert!(!c.contains(&LogPolarPoint::raw(2.1, 5.9), 1e-3));
    }

    #[test]
    fn wrapped_arc_membership() {
        let a = Primitive::arc(1.0, 5.5, 7.0);
        assert!(a.contains(&LogPolarPoint::raw(1.0, 0.3), 1e-12));
        assert!(a.contains(&LogPolarPoint::raw(1.0, 6.0), 1e-12));
        assert!(!a.contains(&LogPolarPoint::raw(1.0, 1.0), 1e-6));
        let d = a.distance(&LogPolarPoint::raw(1.0, 1.0));
        assert!((d - (1.0 - (7.0 - TAU))).abs() < 1e-12);
    }

    #[test]
    fn clipping_radial_segment() {
        let s = Primitive::radial_segment(0.1, 1e6, 0.0);
        assert_eq!(s.clip_t(2.0, 4.0), Some(Primitive::radial_segment(2.0, 4.0, 0.0)));
        assert_eq!(s.clip_t(1e6, 2e6), None);
    }

    #[test]
    fn symbolic_segment_clip_keeps_log_length() {
        let s = Primitive::RadialSegment { t_lo: 512.0, t_hi: 512.0, theta: 0.0, log_length: Some(-8000.0) };
        assert_eq!(s.clip_t(256.0, 512.0), Some(s));
        assert_eq!(s.clip_t(512.0, 1024.0), None);
        assert_eq!(s.clip_t(100.0, 200.0), None);
        assert!((s.log_length().unwrap() + 8000.0).abs() < 1e-12);
    }

    #[test]
    fn disk_clip_area_and_curves() {
        let d = Primitive::disk(3.0, 1.0, 1.0);
        let c = d.clip_t(3.0, 10.0).unwrap();
        assert!((c.measure() - PI / 2.0).abs() < 1e-12);
        let curves = c.boundary_curves();
        let total: f64 = curves.iter().map(Curve::length).sum();
        assert!((total - (PI + 2.0)).abs() < 1e-12, "{total}");
    }

    #[test]
    fn layouts_sum_to_measure() {
        for p in [
            Primitive::radial_segment(2.0, 4.0, 0.3),
            Primitive::arc(1.0, 0.0, 2.5),
            Primitive::band(1.0, 1.7, 0.5, 2.0),
            Primitive::disk(2.0, 0.0, 0.8),
        ] {
            let (_, w) = p.layout(64.0);
            let s: f64 = w.iter().sum();
            assert!((s - p.measure()).abs() <= 1e-3 * p.measure(), "{p:?}: {s}");
        }
    }

    #[test]
    fn bad_primitives_rejected() {
        assert!(Primitive::radial_segment(0.0, 1.0, 0.0).validate().is_err());
        assert!(Primitive::arc(1.0, 1.0, 1.0).validate().is_err());
        assert!(Primitive::disk(0.5, 0.0, 0.6).validate().is_err());
        assert!(Primitive::band(2.0, 1.0, 0.0, 1.0).validate().is_err());
    }
}
