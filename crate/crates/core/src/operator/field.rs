use std::f64::consts::TAU;
use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::LogPolarPoint;
use crate::registry::{Named, Registry};

/// Symmetric 2x2 matrix `[[a11, a12], [a12, a22]]` in the Cartesian frame.
pub type Sym2 = [[f64; 2]; 2];

/// A bounded measurable coefficient matrix `a_ij(x)` of a divergence-form
/// operator, together with its declared ellipticity constant.
pub trait CoefficientField: Send + Sync + Debug {
    /// The matrix at `p` in Cartesian components.
    fn eval(&self, p: &LogPolarPoint) -> Sym2;
    fn lambda(&self) -> f64;
    fn description(&self) -> String;
}

/// Eigenvalues `(min, max)` of a symmetric 2x2 matrix.
pub fn sym2_eigen(a: &Sym2) -> (f64, f64) {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.5 * (a[0][0] - a[1][1])).hypot(a[0][1]);
    (m - d, m + d)
}

/// `M^T a M` with `M = [-r_hat, theta_hat]`: the coefficient seen by the
/// Dirichlet energy in `(t, theta)` coordinates.
pub fn to_cylinder_frame(a: &Sym2, theta: f64) -> Sym2 {
    let (s, c) = theta.sin_cos();
    let m = [[-c, -s], [-s, c]];
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    v += m[k][i] * a[k][l] * m[l][j];
                }
            }
            out[i][j] = v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl CoefficientField for Identity {
    fn eval(&self, _: &LogPolarPoint) -> Sym2 {
        [[1.0, 0.0], [0.0, 1.0]]
    }
    fn lambda(&self) -> f64 {
        1.0
    }
    fn description(&self) -> String {
        "identity".into()
    }
}

/// The constant matrix `R(angle) diag(major, minor) R(angle)^T`.
#[derive(Debug, Clone, Copy)]
pub struct RotatedDiag {
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
}

impl RotatedDiag {
    pub fn new(major: f64, minor: f64, angle: f64) -> Result<Self> {
        if !(major > 0.0 && minor > 0.0) || !major.is_finite() || !minor.is_finite() || !angle.is_finite() {
            return Err(Error::Parameter(format!(
                "diagonal entries must be positive and finite, got {major}, {minor}"
            )));
        }
        Ok(Self { major, minor, angle })
    }

    pub fn diag(a11: f64, a22: f64) -> Result<Self> {
        Self::new(a11, a22, 0.0)
    }
}

impl CoefficientField for RotatedDiag {
    fn eval(&self, _: &LogPolarPoint) -> Sym2 {
        let (s, c) = self.angle.sin_cos();
        let (p, q) = (self.major, self.minor);
        [[p * c * c + q * s * s, (p - q) * c * s], [(p - q) * c * s, p * s * s + q * c * c]]
    }
    fn lambda(&self) -> f64 {
        self.major.max(self.minor).max(1.0 / self.major.min(self.minor))
    }
    fn description(&self) -> String {
        if self.angle == 0.0 {
            format!("diag({}, {})", self.major, self.minor)
        } else {
            format!("rotated_diag({}, {}, angle {})", self.major, self.minor, self.angle)
        }
    }
}

/// Isotropic coefficient alternating between `high` and `low` on cells of
/// the `(t, theta)` grid.
#[derive(Debug, Clone, Copy)]
pub struct Checkerboard {
    pub high: f64,
    pub low: f64,
    pub cell_t: f64,
    pub cells_theta: usize,
}

impl CoefficientField for Checkerboard {
    fn eval(&self, p: &LogPolarPoint) -> Sym2 {
        let i = (p.t / self.cell_t).floor() as i64;
        let j = (p.theta / (TAU / self.cells_theta as f64)).floor() as i64;
        let v = if (i + j).rem_euclid(2) == 0 { self.high } else { self.low };
        [[v, 0.0], [0.0, v]]
    }
    fn lambda(&self) -> f64 {
        let (lo, hi) = (self.low.min(self.high), self.low.max(self.high));
        hi.max(1.0 / lo)
    }
    fn description(&self) -> String {
        format!(
            "checkerboard({}, {}, cell_t {}, {} angular cells)",
            self.high, self.low, self.cell_t, self.cells_theta
        )
    }
}

/// Builds a field from JSON parameters.
pub trait FieldFactory: Named + Send + Sync {
    fn build(&self, params: &Value) -> Result<Arc<dyn CoefficientField>>;
}

fn param(params: &Value, key: &str) -> Result<f64> {
    params
        .get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Parameter(format!("coefficient field needs numeric '{key}'")))
}

fn param_or(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(_) => param(params, key),
    }
}

macro_rules! factory {
    ($ty:ident, $name:literal, |$p:ident| $body:expr) => {
        struct $ty;
        impl Named for $ty {
            fn name(&self) -> &'static str {
                $name
            }
        }
        impl FieldFactory for $ty {
            fn build(&self, $p: &Value) -> Result<Arc<dyn CoefficientField>> {
                $body
            }
        }
    };
}

factory!(IdentityFactory, "identity", |_p| Ok(Arc::new(Identity)));
factory!(DiagFactory, "diag", |p| Ok(Arc::new(RotatedDiag::diag(param(p, "a11")?, param(p, "a22")?)?)));
factory!(RotatedDiagFactory, "rotated_diag", |p| Ok(Arc::new(RotatedDiag::new(
    param(p, "major")?,
    param(p, "minor")?,
    param_or(p, "angle", 0.0)?
)?)));
factory!(CheckerboardFactory, "checkerboard", |p| {
    let high = param(p, "high")?;
    let low = param(p, "low")?;
    let cell_t = param_or(p, "cell_t", 1.0)?;
    let cells = param_or(p, "cells_theta", 8.0)?;
    if !(high > 0.0 && low > 0.0 && cell_t > 0.0) || cells < 1.0 || cells.fract() != 0.0 {
        return Err(Error::Parameter("checkerboard needs positive values and cell sizes".into()));
    }
    Ok(Arc::new(Checkerboard { high, low, cell_t, cells_theta: cells as usize }))
});

/// Registry of the built-in coefficient fields by JSON `kind`. Programmatic
/// fields implement [`CoefficientField`] directly.
pub fn field_registry() -> &'static Registry<dyn FieldFactory> {
    static REG: OnceLock<Registry<dyn FieldFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let entries: [Arc<dyn FieldFactory>; 4] = [
            Arc::new(IdentityFactory),
            Arc::new(DiagFactory),
            Arc::new(RotatedDiagFactory),
            Arc::new(CheckerboardFactory),
        ];
        entries.into_iter().fold(Registry::new("coefficient field"), |r, f| r.with(f)).with_default("identity")
    })
}

/// `{"kind": ..., params...}` as stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec(pub Value);

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec(serde_json::json!({"kind": "identity"}))
    }
}

impl FieldSpec {
    pub fn build(&self) -> Result<Arc<dyn CoefficientField>> {
        field_from_json(&self.0)
    }
}

pub fn field_from_json(v: &Value) -> Result<Arc<dyn CoefficientField>> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Parameter("coefficient field needs a 'kind'".into()))?;
    let field = field_registry().get(kind)?.build(v)?;
    if let Some(declared) = v.get("lambda") {
        let declared = declared
            .as_f64()
            .ok_or_else(|| Error::Parameter("'lambda' must be numeric".into()))?;
        return Ok(Arc::new(Declared { inner: field, lambda: declared }));
    }
    Ok(field)
}

/// A field whose declared constant differs from the computed one.
#[derive(Debug)]
struct Declared {
    inner: Arc<dyn CoefficientField>,
    lambda: f64,
}

impl CoefficientField for Declared {
    fn eval(&self, p: &LogPolarPoint) -> Sym2 {
        self.inner.eval(p)
    }
    fn lambda(&self) -> f64 {
        self.lambda
    }
    fn description(&self) -> String {
        format!("{} (declared lambda {})", self.inner.description(), self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub pass: bool,
    pub measured_lambda: f64,
}

/// Samples points of `0 < t <= 20` and returns the tightest constant for
/// which the ellipticity bounds hold at every sample.
pub fn validate_ellipticity(field: &dyn CoefficientField, n_samples: usize) -> Result<EllipticityReport> {
    if n_samples == 0 {
        return Err(Error::Parameter("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut measured = 1.0f64;
    for _ in 0..n_samples {
        let p = LogPolarPoint::raw(rng.random_range(1e-3..20.0), rng.random_range(0.0..TAU));
        let a = field.eval(&p);
        let scale = a[0][0].abs().max(a[1][1].abs()).max(1.0);
        if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
            return Err(Error::Invalid(format!(
                "coefficient matrix not symmetric at t={}, theta={}",
                p.t, p.theta
            )));
        }
        let (lo, hi) = sym2_eigen(&a);
        if !(lo > 0.0) {
            return Err(Error::Invalid(format!("coefficient matrix not positive at t={}", p.t)));
        }
        measured = measured.max(hi).max(1.0 / lo);
    }
    Ok(EllipticityReport { pass: measured <= field.lambda() + 1e-9, measured_lambda: measured })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct Skewed;
    impl CoefficientField for Skewed {
        fn eval(&self, _: &LogPolarPoint) -> Sym2 {
            [[1.0, 0.5], [0.0, 1.0]]
        }
        fn lambda(&self) -> f64 {
            2.0
        }
        fn description(&self) -> String {
            "skewed".into()
        }
    }

    #[test]
    fn measured_lambda_examples() {
        let r = validate_ellipticity(&Identity, 100).unwrap();
        assert!(r.pass && r.measured_lambda == 1.0);
        let r = validate_ellipticity(&RotatedDiag::diag(2.0, 0.5).unwrap(), 100).unwrap();
        assert!(r.pass && (r.measured_lambda - 2.0).abs() < 1e-12);
        for angle in [0.0, 0.3, 1.0, 2.5] {
            let f = RotatedDiag::new(3.0, 1.0 / 3.0, angle).unwrap();
            let r = validate_ellipticity(&f, 50).unwrap();
            assert!(r.pass && (r.measured_lambda - 3.0).abs() < 1e-12);
        }
        assert!(matches!(validate_ellipticity(&Skewed, 10), Err(Error::Invalid(_))));
        assert!(validate_ellipticity(&Identity, 0).is_err());
    }

    #[test]
    fn declared_lambda_too_small_fails() {
        let f = field_from_json(&serde_json::json!({"kind": "diag", "a11": 4, "a22": 1, "lambda": 2})).unwrap();
        let r = validate_ellipticity(f.as_ref(), 20).unwrap();
        assert!(!r.pass && (r.measured_lambda - 4.0).abs() < 1e-12);
    }

    #[test]
    fn json_kinds() {
        for v in [
            serde_json::json!({"kind": "identity"}),
            serde_json::json!({"kind": "diag", "a11": 2, "a22": 0.5}),
            serde_json::json!({"kind": "rotated_diag", "major": 2, "minor": 0.5, "angle": 0.4}),
            serde_json::json!({"kind": "checkerboard", "high": 2, "low": 0.5}),
        ] {
            let f = field_from_json(&v).unwrap();
            assert!(validate_ellipticity(f.as_ref(), 200).unwrap().pass, "{v}");
        }
        assert!(field_from_json(&serde_json::json!({"kind": "plasma"})).is_err());
        assert!(field_from_json(&serde_json::json!({"kind": "diag", "a11": 2})).is_err());
    }

    #[test]
    fn identity_is_frame_invariant() {
        for th in [0.0, 0.7, 3.0] {
            let a = to_cylinder_frame(&[[1.0, 0.0], [0.0, 1.0]], th);
            assert!((a[0][0] - 1.0).abs() < 1e-15 && a[0][1].abs() < 1e-15 && (a[1][1] - 1.0).abs() < 1e-15);
        }
        // radial stiffness becomes t-stiffness
        let a = to_cylinder_frame(&RotatedDiag::diag(2.0, 0.5).unwrap().eval(&LogPolarPoint::raw(1.0, 0.0)), 0.0);
        assert!((a[0][0] - 2.0).abs() < 1e-15 && (a[1][1] - 0.5).abs() < 1e-15);
    }
}
