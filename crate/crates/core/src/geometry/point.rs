use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `t` for which Cartesian coordinates are produced.
pub const CARTESIAN_T_LIMIT: f64 = 30.0;

/// A point of the punctured unit disk stored as `t = -log|x|` and its angle.
///
/// `t` is the distance to the unit circle in the flat cylinder metric and
/// equals `h(x)` for the Laplacian. The origin sits at `t = +inf` and is
/// never represented.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPolarPoint {
    pub t: f64,
    pub theta: f64,
}

impl LogPolarPoint {
    /// Builds a point, normalizing the angle into `[0, 2pi)`.
    pub fn new(t: f64, theta: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("t must be positive and finite, got {t}")));
        }
        if !theta.is_finite() {
            return Err(Error::Domain(format!("theta must be finite, got {theta}")));
        }
        Ok(Self { t, theta: normalize_angle(theta) })
    }

    /// Unchecked constructor for internal use where `t > 0` is already known.
    pub(crate) fn raw(t: f64, theta: f64) -> Self {
        Self { t, theta: normalize_angle(theta) }
    }

    pub fn from_cartesian(x: f64, y: f64) -> Result<Self> {
        let r = x.hypot(y);
        if !(r > 0.0) || r >= 1.0 || !r.is_finite() {
            return Err(Error::Domain(format!(
                "point ({x}, {y}) is not in the punctured unit disk"
            )));
        }
        Self::new(-r.ln(), y.atan2(x))
    }

    /// Cartesian coordinates; refused for `t > 30` where they lose meaning.
    pub fn to_cartesian(&self) -> Result<(f64, f64)> {
        if self.t > CARTESIAN_T_LIMIT {
            return Err(Error::Domain(format!(
                "Cartesian output is limited to t <= {CARTESIAN_T_LIMIT}, got t = {}",
                self.t
            )));
        }
        let r = (-self.t).exp();
        Ok((r * self.theta.cos(), r * self.theta.sin()))
    }

    /// Offset `(dt, dtheta)` from `self` to `other`, angle wrapped into `(-pi, pi]`.
    pub fn offset_to(&self, other: &LogPolarPoint) -> (f64, f64) {
        (other.t - self.t, wrap_angle(other.theta - self.theta))
    }

    /// Distance in the flat cylinder metric `dt^2 + dtheta^2`.
    pub fn cylinder_distance(&self, other: &LogPolarPoint) -> f64 {
        let (dt, dth) = self.offset_to(other);
        dt.hypot(dth)
    }
}

/// Maps any angle into `[0, 2pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Maps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let r = (d + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// `-log|p|` for a Cartesian point.
pub fn to_logpolar(x: f64, y: f64) -> Result<LogPolarPoint> {
    LogPolarPoint::from_cartesian(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = to_logpolar((-1.0f64).exp(), 0.0).unwrap();
        assert!((p.t - 1.0).abs() < 1e-15 && p.theta == 0.0);
        let p = to_logpolar(0.0, (-4.0f64).exp()).unwrap();
        assert!((p.t - 4.0).abs() < 1e-14);
        assert!((p.theta - PI / 2.0).abs() < 1e-15);
        let p = to_logpolar(0.5, 0.5).unwrap();
        let expected = -(0.5f64.sqrt()).ln();
        assert!((p.t - expected).abs() < 1e-15);
        assert!((p.theta - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(to_logpolar(0.0, 0.0).is_err());
        assert!(to_logpolar(1.0, 0.0).is_err());
        assert!(to_logpolar(0.8, 0.8).is_err());
        assert!(LogPolarPoint::new(-1.0, 0.0).is_err());
        assert!(LogPolarPoint::new(31.0, 0.0).unwrap().to_cartesian().is_err());
    }

    #[test]
    fn negative_angle_normalized() {
        let p = to_logpolar(0.1, -0.1).unwrap();
        assert!((p.theta - 7.0 * PI / 4.0).abs() < 1e-14);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(PI), PI);
    }
}
