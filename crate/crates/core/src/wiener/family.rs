use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::Verdict;
use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, Primitive};
use crate::registry::{Named, Registry};

/// Parameters shared by the built-in geometries. Unused fields are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamilyParams {
    pub a: f64,
    pub n_min: i32,
    pub n_max: i32,
    /// Depth of the iterated logarithm in the sparse-interval product.
    pub k: u32,
    pub eps: f64,
    /// First index `N` of the sparse-interval family.
    pub big_n: i32,
    /// Inner end of the deleted radius.
    pub t_min: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self { a: 2.0, n_min: 1, n_max: 8, k: 1, eps: 1.0, big_n: 2, t_min: 1.0 }
    }
}

impl FamilyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 1.0) || !self.a.is_finite() {
            return Err(Error::Parameter(format!("shell ratio a must exceed 1, got {}", self.a)));
        }
        if self.n_min > self.n_max {
            return Err(Error::Parameter(format!("empty shell range {}..{}", self.n_min, self.n_max)));
        }
        if !(self.t_min > 0.0) {
            return Err(Error::Parameter(format!("t_min must be positive, got {}", self.t_min)));
        }
        if !self.eps.is_finite() {
            return Err(Error::Parameter("eps must be finite".into()));
        }
        Ok(())
    }
}

/// A parametrized geometry with known term asymptotics.
pub trait WienerFamily: Named + Send + Sync {
    fn build(&self, p: &FamilyParams) -> Result<CompactSetSpec>;

    /// The verdict implied by the construction itself.
    fn known_verdict(&self, p: &FamilyParams) -> Verdict;

    /// How many logarithms the terms carry: the tail fit is done on the
    /// matching scale `terms ~ 1 / (n log n ... (log_d n)^s)`.
    fn log_depth(&self, p: &FamilyParams) -> u32 {
        let _ = p;
        0
    }
}

/// `log_j n` iterated `j` times; `log_0 n = n`.
pub fn iterated_log(n: f64, j: u32) -> f64 {
    (0..j).fold(n, |x, _| x.ln())
}

/// Radial segment `theta = 0`, `t in [t_min, a^(n_max + 1)]`: the slit disk.
pub struct DeletedRadius;

impl Named for DeletedRadius {
    fn name(&self) -> &'static str {
        "deleted_radius"
    }
}

impl WienerFamily for DeletedRadius {
    fn build(&self, p: &FamilyParams) -> Result<CompactSetSpec> {
        p.validate()?;
        let top = p.a.powi(p.n_max + 1);
        if !(top > p.t_min) {
            return Err(Error::Parameter(format!("t_min {} is above the last shell {top}", p.t_min)));
        }
        Ok(CompactSetSpec::new("deleted_radius", vec![Primitive::radial_segment(p.t_min, top, 0.0)]))
    }

    fn known_verdict(&self, _: &FamilyParams) -> Verdict {
        Verdict::LogRegular
    }
}

/// Full circles `t = a^n`: every term equals one.
pub struct LevelCircles;

impl Named for LevelCircles {
    fn name(&self) -> &'static str {
        "level_circles"
    }
}

impl WienerFamily for LevelCircles {
    fn build(&self, p: &FamilyParams) -> Result<CompactSetSpec> {
        p.validate()?;
        let prims = (p.n_min..=p.n_max).map(|n| Primitive::circle(p.a.powi(n))).collect();
        Ok(CompactSetSpec::new("level_circles", prims))
    }

    fn known_verdict(&self, _: &FamilyParams) -> Verdict {
        Verdict::LogRegular
    }
}

/// Intervals `[e^{-a^{n+1}}, e^{-a^{n+1}} + delta_n]` on the positive axis,
/// `delta_n = exp(-a^n P_n)` with `P_n = n log n ... log_{k-1} n (log_k n)^{1+eps}`.
pub struct SparseIntervals;

impl Named for SparseIntervals {
    fn name(&self) -> &'static str {
        "sparse_intervals"
    }
}

/// `P_n`; positive exactly when the `k`-fold logarithm of `n` is.
pub fn sparse_exponent(n: i32, k: u32, eps: f64) -> f64 {
    let n = n as f64;
    let mut p = n;
    for j in 1..k {
        p *= iterated_log(n, j);
    }
    if k == 0 {
        return p.powf(1.0 + eps);
    }
    let last = iterated_log(n, k);
    p * last.signum() * last.abs().powf(1.0 + eps)
}

/// `ln(t-length)` of the n-th interval: `ln log(1 + delta_n e^{a^{n+1}})`,
/// evaluated through the exponent `x = a^{n+1} + ln delta_n`.
pub fn sparse_log_length(a: f64, n: i32, k: u32, eps: f64) -> f64 {
    let x = a.powi(n + 1) - a.powi(n) * sparse_exponent(n, k, eps);
    if x < -30.0 {
        // log1p(e^x) = e^x (1 - e^x / 2 + ...)
        x + (-0.5 * x.exp()).ln_1p()
    } else if x > 30.0 {
        (x + (-x).exp()).ln()
    } else {
        x.exp().ln_1p().ln()
    }
}

impl SparseIntervals {
    /// The n-th interval as a radial segment ending at `t = a^{n+1}`.
    pub fn interval(p: &FamilyParams, n: i32) -> Primitive {
        let t_hi = p.a.powi(n + 1);
        let ll = sparse_log_length(p.a, n, p.k, p.eps);
        let len = ll.exp();
        if len > 1e-9 * t_hi {
            Primitive::radial_segment(t_hi - len, t_hi, 0.0)
        } else {
            Primitive::RadialSegment { t_lo: t_hi, t_hi, theta: 0.0, log_length: Some(ll) }
        }
    }

    /// First index at or after `max(N, n_min)` where the `k`-fold logarithm
    /// is positive; earlier shells carry no interval.
    pub fn first_index(p: &FamilyParams) -> Result<i32> {
        p.validate()?;
        if p.k == 0 {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        (p.big_n.max(p.n_min).max(1)..=p.n_max).find(|&n| iterated_log(n as f64, p.k) > 0.0).ok_or_else(|| {
            Error::Parameter(format!("the {}-fold logarithm is not positive for any n up to {}", p.k, p.n_max))
        })
    }
}

impl WienerFamily for SparseIntervals {
    fn build(&self, p: &FamilyParams) -> Result<CompactSetSpec> {
        let first = Self::first_index(p)?;
        let prims = (first..=p.n_max).map(|n| Self::interval(p, n)).collect();
        Ok(CompactSetSpec::new(format!("sparse_intervals k={} eps={}", p.k, p.eps), prims))
    }

    fn known_verdict(&self, p: &FamilyParams) -> Verdict {
        if p.eps > 0.0 {
            Verdict::LogIrregular
        } else {
            Verdict::LogRegular
        }
    }

    fn log_depth(&self, p: &FamilyParams) -> u32 {
        p.k
    }
}

pub fn family_registry() -> &'static Registry<dyn WienerFamily> {
    static REG: OnceLock<Registry<dyn WienerFamily>> = OnceLock::new();
    REG.get_or_init(|| {
        let radius: Arc<dyn WienerFamily> = Arc::new(DeletedRadius);
        let sparse: Arc<dyn WienerFamily> = Arc::new(SparseIntervals);
        let circles: Arc<dyn WienerFamily> = Arc::new(LevelCircles);
        Registry::new("family").with(radius).with(sparse).with(circles).with_default("deleted_radius")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shell_decompose;

    #[test]
    fn deleted_radius_shell_lengths() {
        let p = FamilyParams { n_max: 4, ..Default::default() };
        let k = DeletedRadius.build(&p).unwrap();
        let s = shell_decompose(&k, 2.0, 1, 4).unwrap();
        for (n, e) in s.iter() {
            let len = e.primitives[0].log_length().unwrap().exp();
            assert!((len - 2f64.powi(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn sparse_lengths_match_direct_formula() {
        // where everything is representable the direct formula is exact enough
        let p = FamilyParams { k: 1, eps: 0.0, ..Default::default() };
        for n in 2..=3 {
            let direct = (1.0 + (-(2f64.powi(n)) * sparse_exponent(n, 1, 0.0) + 2f64.powi(n + 1)).exp()).ln();
            let ll = sparse_log_length(p.a, n, 1, 0.0);
            assert!((ll.exp() - direct).abs() < 1e-9 * direct, "{n}");
        }
        assert!(sparse_log_length(2.0, 8, 1, 1.0) < sparse_log_length(2.0, 8, 1, 0.0));
        // log log 2 < 0, so k = 2 starts at n = 3
        assert_eq!(SparseIntervals::first_index(&FamilyParams { k: 2, big_n: 2, ..Default::default() }).unwrap(), 3);
        assert!(SparseIntervals::first_index(&FamilyParams { k: 2, n_min: 9, n_max: 8, ..Default::default() }).is_err());
    }

    #[test]
    fn sparse_shell_membership() {
        let p = FamilyParams { k: 1, eps: 1.0, n_min: 2, n_max: 8, ..Default::default() };
        let k = SparseIntervals.build(&p).unwrap();
        let s = shell_decompose(&k, 2.0, 2, 8).unwrap();
        for (n, e) in s.iter() {
            // the interval ends on the shell's outer circle
            let top = e.primitives.iter().map(|q| q.t_range().1).fold(0.0, f64::max);
            assert_eq!(top, 2f64.powi(n + 1));
        }
    }
}
