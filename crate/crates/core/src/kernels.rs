//! The unit-disk Green function, `h`, and the `h`-normalized kernel, all in
//! cylinder coordinates so that nothing underflows for `t` up to `1e4`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{discretize, CompactSetSpec, LogPolarPoint};
use crate::operator::DiscreteOperator;

/// `|1 - q e^{i phi}|^2 = (1-q)^2 + 4 q sin^2(phi/2)` for `q = e^{-d}`, `d >= 0`.
fn q_form(d: f64, phi: f64) -> f64 {
    let one_minus_q = -(-d).exp_m1();
    let s = (0.5 * phi).sin();
    one_minus_q * one_minus_q + 4.0 * (-d).exp() * s * s
}

/// Laplacian `h(x) = log 1/|x|`, i.e. the `t` coordinate.
pub fn h_value(p: &LogPolarPoint) -> f64 {
    p.t
}

/// `G(xi, eta) = log(|xi' - eta| |xi| / |xi - eta|)` for the unit disk.
pub fn green_disk(xi: &LogPolarPoint, eta: &LogPolarPoint) -> Result<f64> {
    let (dt, dth) = xi.offset_to(eta);
    if dt == 0.0 && dth == 0.0 {
        return Err(Error::Singular { t: xi.t, theta: xi.theta });
    }
    Ok(green_from_offsets(xi.t, eta.t, dth))
}

fn green_from_offsets(t1: f64, t2: f64, dth: f64) -> f64 {
    let tmin = t1.min(t2);
    let g = tmin + 0.5 * q_form(t1 + t2, dth).ln() - 0.5 * q_form((t1 - t2).abs(), dth).ln();
    g.max(0.0)
}

/// `G(xi, eta) + log |w(xi) - w(eta)|` with `w = (t, theta)` and the angle
/// difference wrapped. This part is smooth across the diagonal, where it
/// equals `t + log(1 - e^{-2t})`.
pub fn green_smooth(xi: &LogPolarPoint, eta: &LogPolarPoint) -> f64 {
    let (dt, dth) = xi.offset_to(eta);
    let tmin = xi.t.min(eta.t);
    let far = 0.5 * q_form(xi.t + eta.t, dth).ln() + tmin;
    let r2 = dt * dt + dth * dth;
    if r2 == 0.0 {
        return far;
    }
    // Q_delta / |dw|^2 -> 1 at coincidence; written as a ratio to keep accuracy
    let q = q_form(dt.abs(), dth);
    far - 0.5 * (q / r2).ln()
}

/// Mean over `s` in `[-len/2, len/2]` of `-log|(u - s, v)|`: a straight
/// panel of length `len` seen from the point at offset `(u, v)` in the
/// panel's own frame.
pub fn mean_neg_log_segment(u: f64, v: f64, len: f64) -> f64 {
    let av = v.abs();
    let f = |x: f64| -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let r2 = x * x + av * av;
        let tail = if av > 0.0 { 2.0 * av * (x / av).atan() } else { 0.0 };
        x * r2.ln() - 2.0 * x + tail
    };
    let half = 0.5 * len;
    -(f(half - u) + f(half + u)) / (2.0 * len)
}

/// Mean of `-log|s - s'|` over a straight panel of length `exp(log_len)`
/// against itself.
pub fn self_panel_mean_neg_log(log_len: f64) -> f64 {
    1.5 - log_len
}

/// Eight-point Gauss-Legendre rule on `[-1, 1]`.
pub const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// A Green function together with its own positive harmonic `h`.
pub trait GreenKernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn green(&self, xi: &LogPolarPoint, eta: &LogPolarPoint) -> Result<f64>;
    fn h(&self, p: &LogPolarPoint) -> f64;
}

struct LaplaceDisk;

impl GreenKernel for LaplaceDisk {
    fn name(&self) -> &'static str {
        "laplace_disk"
    }

    fn green(&self, xi: &LogPolarPoint, eta: &LogPolarPoint) -> Result<f64> {
        green_disk(xi, eta)
    }

    fn h(&self, p: &LogPolarPoint) -> f64 {
        h_value(p)
    }
}

impl GreenKernel for DiscreteOperator {
    fn name(&self) -> &'static str {
        "discrete_operator"
    }

    fn green(&self, xi: &LogPolarPoint, eta: &LogPolarPoint) -> Result<f64> {
        if xi.cylinder_distance(eta) == 0.0 {
            return Err(Error::Singular { t: xi.t, theta: xi.theta });
        }
        let a = self.green_value(eta, xi)?;
        let b = self.green_value(xi, eta)?;
        Ok(0.5 * (a + b))
    }

    fn h(&self, p: &LogPolarPoint) -> f64 {
        self.h_at(p)
    }
}

/// Which Green function a computation uses.
#[derive(Clone)]
pub enum KernelKind {
    /// The exact Laplacian Green function of the unit disk.
    LaplaceDisk,
    /// A finite-element Green function of a general operator.
    DiscreteOperator(Arc<DiscreteOperator>),
}

impl fmt::Debug for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelKind::LaplaceDisk => write!(f, "LaplaceDisk"),
            KernelKind::DiscreteOperator(op) => write!(
                f,
                "DiscreteOperator({}, n_theta={}, rows={}, order=1)",
                op.field_description(),
                op.mesh().n_theta(),
                op.mesh().n_rows()
            ),
        }
    }
}

impl KernelKind {
    fn inner(&self) -> &dyn GreenKernel {
        match self {
            KernelKind::LaplaceDisk => &LaplaceDisk,
            KernelKind::DiscreteOperator(op) => op.as_ref(),
        }
    }

    pub fn name(&self) -> &'static str {
        self.inner().name()
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, KernelKind::LaplaceDisk)
    }

    pub fn green(&self, xi: &LogPolarPoint, eta: &LogPolarPoint) -> Result<f64> {
        self.inner().green(xi, eta)
    }

    pub fn h(&self, p: &LogPolarPoint) -> f64 {
        self.inner().h(p)
    }
}

/// `G(xi, eta) / (h(xi) h(eta))`.
pub fn h_kernel(xi: &LogPolarPoint, eta: &LogPolarPoint, kind: &KernelKind) -> Result<f64> {
    Ok(kind.green(xi, eta)? / (kind.h(xi) * kind.h(eta)))
}

/// Pairs closer than this in the cylinder metric are skipped when sampling
/// kernel ratios, since both kernels are then dominated by their
/// discretization at the pole.
const COMPARABILITY_MIN_SEPARATION: f64 = 0.25;

/// `[min, max]` of `G_A / G_B` over well-separated pairs drawn from the set.
pub fn comparability_check(
    kind_a: &KernelKind,
    kind_b: &KernelKind,
    sample_set: &CompactSetSpec,
) -> Result<(f64, f64)> {
    let d = discretize(sample_set, 4.0)?;
    let stride = (d.len() / 24).max(1);
    let pts: Vec<LogPolarPoint> = d.nodes.iter().step_by(stride).copied().collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, x) in pts.iter().enumerate() {
        for y in &pts[i + 1..] {
            if x.cylinder_distance(y) < COMPARABILITY_MIN_SEPARATION {
                continue;
            }
            let r = kind_a.green(x, y)? / kind_b.green(x, y)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 {
        return Err(Error::Parameter(
            "comparability sample has no well-separated pairs".into(),
        ));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Textbook Cartesian form, valid while `|x|` is representable.
    fn green_cartesian(xi: &LogPolarPoint, eta: &LogPolarPoint) -> f64 {
        let (x1, y1) = xi.to_cartesian().unwrap();
        let (x2, y2) = eta.to_cartesian().unwrap();
        let r2 = x1 * x1 + y1 * y1;
        let (xs, ys) = (x1 / r2, y1 / r2);
        ((xs - x2).hypot(ys - y2) * r2.sqrt() / (x1 - x2).hypot(y1 - y2)).ln()
    }

    fn p(t: f64, th: f64) -> LogPolarPoint {
        LogPolarPoint::new(t, th).unwrap()
    }

    #[test]
    fn matches_cartesian_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let a = p(rng.random_range(0.05..6.0), rng.random_range(0.0..2.0 * PI));
            let b = p(rng.random_range(0.05..6.0), rng.random_range(0.0..2.0 * PI));
            let g = green_disk(&a, &b).unwrap();
            let c = green_cartesian(&a, &b);
            assert!((g - c).abs() <= 1e-10 * c.abs().max(1.0), "{a:?} {b:?}: {g} vs {c}");
        }
    }

    #[test]
    fn positive_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a = p(rng.random_range(1e-3..1e4), rng.random_range(0.0..2.0 * PI));
            let b = p(rng.random_range(1e-3..1e4), rng.random_range(0.0..2.0 * PI));
            let g = green_disk(&a, &b).unwrap();
            assert!(g >= 0.0 && g.is_finite());
            assert_eq!(g, green_disk(&b, &a).unwrap());
        }
    }

    #[test]
    fn limits() {
        // towards the singular point G -> t of the other argument
        let g = green_disk(&p(1.5, 0.3), &p(80.0, 2.0)).unwrap();
        assert!((g - 1.5).abs() < 1e-12);
        // vanishes on the unit circle
        assert!(green_disk(&p(1e-6, 0.0), &p(2.0, 1.0)).unwrap() < 1e-4);
        assert!(green_disk(&p(1e-6, 0.0), &p(0.5, 0.1)).unwrap() < 1e-4);
        assert!(matches!(green_disk(&p(1.0, 1.0), &p(1.0, 1.0)), Err(Error::Singular { .. })));
    }

    #[test]
    fn h_kernel_examples() {
        let k = KernelKind::LaplaceDisk;
        let (a, b) = (p(1.0, 0.0), p(1.0, PI));
        assert_eq!(h_kernel(&a, &b, &k).unwrap(), green_disk(&a, &b).unwrap());
        let (a, b) = (p(2.0, 0.0), p(2.0, 1.0));
        assert!((h_kernel(&a, &b, &k).unwrap() - green_disk(&a, &b).unwrap() / 4.0).abs() < 1e-15);
        assert_eq!(h_value(&p(3.0, 0.0)), 3.0);
    }

    #[test]
    fn smooth_part_is_continuous() {
        let x = p(1.3, 0.4);
        let at = green_smooth(&x, &x);
        assert!((at - (1.3 + (1.0 - (-2.6f64).exp()).ln())).abs() < 1e-14);
        for eps in [1e-3, 1e-6, 1e-9] {
            let y = p(1.3 + 0.6 * eps, 0.4 - 0.8 * eps);
            assert!((green_smooth(&x, &y) - at).abs() < 10.0 * eps);
            let g = green_disk(&x, &y).unwrap();
            let (dt, dth) = x.offset_to(&y);
            assert!((g - (green_smooth(&x, &y) - dt.hypot(dth).ln())).abs() < 1e-9);
        }
    }

    #[test]
    fn harmonic_away_from_pole() {
        let eta = p(1.0, 0.0);
        let (x0, y0) = p(0.7, 2.0).to_cartesian().unwrap();
        let f = |x: f64, y: f64| green_disk(&LogPolarPoint::from_cartesian(x, y).unwrap(), &eta).unwrap();
        let mut prev = f64::INFINITY;
        for hstep in [1e-2, 5e-3, 2.5e-3] {
            let lap = (f(x0 + hstep, y0) + f(x0 - hstep, y0) + f(x0, y0 + hstep) + f(x0, y0 - hstep)
                - 4.0 * f(x0, y0))
                / (hstep * hstep);
            assert!(lap.abs() < prev);
            prev = lap.abs();
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn log_band_on_compact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..5000 {
            let a = p(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0));
            let b = p(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0));
            let (x1, y1) = a.to_cartesian().unwrap();
            let (x2, y2) = b.to_cartesian().unwrap();
            let r = green_disk(&a, &b).unwrap() / (2.0 / (x1 - x2).hypot(y1 - y2)).ln();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        assert!(lo > 0.05 && hi < 20.0, "[{lo}, {hi}]");
    }

    #[test]
    fn segment_mean_against_quadrature() {
        for &(u, v, len) in &[(0.3, 0.2, 0.5), (0.0, 0.0, 0.1), (1.0, 0.0, 0.4), (0.05, 1e-3, 0.2)] {
            let n = 200_000;
            let mut acc = 0.0;
            for i in 0..n {
                let s = -0.5 * len + (i as f64 + 0.5) * len / n as f64;
                acc -= ((u - s) * (u - s) + v * v).sqrt().ln();
            }
            let exact = mean_neg_log_segment(u, v, len);
            assert!((acc / n as f64 - exact).abs() < 1e-4, "{u} {v}: {exact}");
        }
        // averaging the point formula over the panel gives the self term
        let len = 0.3;
        let mut acc = 0.0;
        for (x, w) in GAUSS8 {
            acc += 0.5 * w * mean_neg_log_segment(0.5 * len * x, 0.0, len);
        }
        assert!((acc - self_panel_mean_neg_log(len.ln())).abs() < 2e-3);
    }
}
