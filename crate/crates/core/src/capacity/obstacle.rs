use std::f64::consts::TAU;
use std::sync::{Arc, OnceLock};

use super::equilibrium::{CapacityResult, Diagnostics, Route};
use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, LogPolarPoint};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::operator::{assemble, discrete_h, CoefficientField, GridFunction, Mesh};
use crate::registry::{Named, Registry};

/// Discrete obstacle problem `min u^T A u` subject to `u = 0` on `zero`
/// nodes and `u >= psi_i` wherever `psi_i` is given.
pub struct ObstacleProblem<'a> {
    pub matrix: &'a CsrMatrix,
    pub zero: &'a [bool],
    pub psi: &'a [Option<f64>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Largest `|min(u - psi, Au)|` on obstacle nodes and `|Au|` elsewhere,
    /// relative to `max |psi|`.
    pub residual: f64,
}

pub trait ObstacleSolver: Named + Send + Sync {
    fn solve(&self, problem: &ObstacleProblem<'_>, tol: f64) -> Result<ObstacleOutcome>;
}

fn scale_of(psi: &[Option<f64>]) -> f64 {
    psi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
}

/// Complementarity residual of a candidate solution.
pub fn obstacle_residual(problem: &ObstacleProblem<'_>, u: &[f64]) -> f64 {
    let scale = scale_of(problem.psi);
    let au = problem.matrix.mul_vec(u);
    let diag_max = (0..u.len()).map(|i| problem.matrix.diag(i)).fold(0.0, f64::max);
    let mut r = 0.0f64;
    for i in 0..u.len() {
        if problem.zero[i] {
            continue;
        }
        // flux residuals are compared at the scale of one nodal value
        let flux = au[i] / diag_max;
        match problem.psi[i] {
            Some(p) => r = r.max((u[i] - p).min(flux).abs()),
            None => r = r.max(flux.abs()),
        }
    }
    r / scale
}

/// Primal-dual active set: each step fixes `u = psi` on the predicted contact
/// set and solves the remaining linear system exactly.
pub struct Pdas {
    pub max_iter: usize,
}

impl Named for Pdas {
    fn name(&self) -> &'static str {
        "pdas"
    }
}

impl ObstacleSolver for Pdas {
    fn solve(&self, problem: &ObstacleProblem<'_>, tol: f64) -> Result<ObstacleOutcome> {
        let n = problem.matrix.dim();
        let mut active: Vec<bool> = problem.psi.iter().map(Option::is_some).collect();
        let mut u = vec![0.0; n];
        for it in 1..=self.max_iter {
            let values: Vec<Option<f64>> = (0..n)
                .map(|i| if problem.zero[i] { Some(0.0) } else if active[i] { problem.psi[i] } else { None })
                .collect();
            let fixed: Vec<bool> = values.iter().map(Option::is_some).collect();
            let chol = EnvelopeCholesky::factor_with_fixed(problem.matrix, &fixed)?;
            u = crate::linalg::solve_dirichlet_factored(&chol, problem.matrix, &vec![0.0; n], &values);
            let lambda = problem.matrix.mul_vec(&u);
            let c = (0..n).map(|i| problem.matrix.diag(i)).fold(0.0, f64::max);
            // contact decisions below round-off are kept as they are, otherwise
            // nodes where psi is itself discrete-harmonic flip forever
            let eps = 1e-11 * c * scale_of(problem.psi);
            let mut changed = false;
            for i in 0..n {
                if let Some(p) = problem.psi[i] {
                    if problem.zero[i] {
                        continue;
                    }
                    let lam = if active[i] { lambda[i] } else { 0.0 };
                    let ind = lam + c * (p - u[i]);
                    let next = if active[i] { ind > -eps } else { ind > eps };
                    if next != active[i] {
                        active[i] = next;
                        changed = true;
                    }
                }
            }
            if !changed {
                let residual = obstacle_residual(problem, &u);
                if residual > tol.max(1e-8) {
                    return Err(Error::NoConvergence { iterations: it, residual });
                }
                return Ok(ObstacleOutcome { u, iterations: it, residual });
            }
        }
        Err(Error::NoConvergence { iterations: self.max_iter, residual: obstacle_residual(problem, &u) })
    }
}

/// Projected successive over-relaxation.
pub struct Psor {
    pub omega: f64,
    pub max_sweeps: usize,
}

impl Named for Psor {
    fn name(&self) -> &'static str {
        "psor"
    }
}

impl ObstacleSolver for Psor {
    fn solve(&self, problem: &ObstacleProblem<'_>, tol: f64) -> Result<ObstacleOutcome> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::Parameter(format!("relaxation factor {} outside (0, 2)", self.omega)));
        }
        let a = problem.matrix;
        let n = a.dim();
        let scale = scale_of(problem.psi);
        let mut u: Vec<f64> = (0..n)
            .map(|i| if problem.zero[i] { 0.0 } else { problem.psi[i].unwrap_or(0.0) })
            .collect();
        for sweep in 1..=self.max_sweeps {
            let mut delta = 0.0f64;
            for i in 0..n {
                if problem.zero[i] {
                    continue;
                }
                let mut s = 0.0;
                let mut d = 0.0;
                for (j, aij) in a.row(i) {
                    if j == i {
                        d = aij;
                    } else {
                        s += aij * u[j];
                    }
                }
                let gs = -s / d;
                let mut next = u[i] + self.omega * (gs - u[i]);
                if let Some(p) = problem.psi[i] {
                    next = next.max(p);
                }
                delta = delta.max((next - u[i]).abs());
                u[i] = next;
            }
            // the update size bounds the residual only up to the contraction
            // rate, so confirm with the true residual
            if delta < 0.1 * tol * scale && sweep % 16 == 0 {
                let residual = obstacle_residual(problem, &u);
                if residual < tol {
                    return Ok(ObstacleOutcome { u, iterations: sweep, residual });
                }
            }
        }
        Err(Error::NoConvergence { iterations: self.max_sweeps, residual: obstacle_residual(problem, &u) })
    }
}

pub fn obstacle_registry() -> &'static Registry<dyn ObstacleSolver> {
    static REG: OnceLock<Registry<dyn ObstacleSolver>> = OnceLock::new();
    REG.get_or_init(|| {
        let pdas: Arc<dyn ObstacleSolver> = Arc::new(Pdas { max_iter: 200 });
        let psor: Arc<dyn ObstacleSolver> = Arc::new(Psor { omega: 1.9, max_sweeps: 200_000 });
        Registry::new("obstacle solver").with(pdas).with(psor).with_default("pdas")
    })
}

/// Tolerance of the obstacle complementarity residual.
pub const OBSTACLE_TOL: f64 = 1e-8;

/// The capacitary potential together with the capacity it certifies.
#[derive(Debug, Clone)]
pub struct ObstacleCapacity {
    pub result: CapacityResult,
    pub potential: GridFunction,
    /// Discrete `h` on the mesh (exactly `t` for the Laplacian).
    pub h: Vec<f64>,
    /// Smallest `(Au)_i` over free nodes, relative to the largest diagonal
    /// entry; nonnegative up to round-off for a discrete supersolution.
    pub min_flux: f64,
}

/// `C_h(K) = min { L_A(u) : u >= h on K, u = 0 on the unit circle } / 2pi`.
///
/// The contact forces `lambda = Au` on `K` give the equilibrium measure
/// `gamma_i = lambda_i h_i / 2pi`, whose total equals the capacity.
pub fn obstacle_capacity(
    k: &CompactSetSpec,
    field: &dyn CoefficientField,
    mesh: &Mesh,
    solver: Option<&str>,
) -> Result<ObstacleCapacity> {
    let form = assemble(field, mesh)?;
    let zero = form.boundary_mask();
    let chol = EnvelopeCholesky::factor_with_fixed(&form.matrix, &zero)?;
    let h = discrete_h(&form, &chol);
    let n = mesh.n_nodes();
    if k.is_empty() {
        return Ok(ObstacleCapacity {
            result: CapacityResult::empty(Route::ObstacleFem),
            potential: GridFunction { mesh: mesh.clone(), values: vec![0.0; n] },
            h,
            min_flux: 0.0,
        });
    }
    if k.t_max() >= mesh.t_ceiling() {
        return Err(Error::Mesh(format!("set reaches t={} beyond the mesh ceiling {}", k.t_max(), mesh.t_ceiling())));
    }
    mesh.check_resolves(k)?;
    let contact = mesh.nodes_in(k);
    let mut psi = vec![None; n];
    for &i in &contact {
        if !zero[i] {
            psi[i] = Some(h[i]);
        }
    }
    let solver = obstacle_registry().resolve(solver)?;
    let problem = ObstacleProblem { matrix: &form.matrix, zero: &zero, psi: &psi };
    let out = solver.solve(&problem, OBSTACLE_TOL)?;
    let u = out.u;
    let au = form.matrix.mul_vec(&u);
    let energy = form.energy(&u);
    let capacity = energy / TAU;
    let diag_max = (0..n).map(|i| form.matrix.diag(i)).fold(0.0, f64::max);
    let min_flux = (0..n).filter(|&i| !zero[i]).map(|i| au[i] / diag_max).fold(f64::INFINITY, f64::min);
    let mut nodes = Vec::with_capacity(contact.len());
    let mut masses = Vec::with_capacity(contact.len());
    for &i in &contact {
        let (t, theta) = mesh.coords(i);
        nodes.push(LogPolarPoint::raw(t, theta));
        // tiny negative contact forces are round-off on released nodes
        masses.push((au[i] * h[i] / TAU).max(0.0));
    }
    let equilibrium = DiscreteMeasure::new(nodes, masses)?;
    let max_ratio = (0..n).filter(|&i| h[i] > 0.0).map(|i| u[i] / h[i]).fold(0.0, f64::max);
    let result = CapacityResult {
        capacity,
        robin: (capacity > 0.0).then(|| 1.0 / capacity),
        equilibrium,
        route: Route::ObstacleFem,
        diagnostics: Diagnostics {
            max_potential_over_h: max_ratio,
            qp_iterations: out.iterations,
            residual: out.residual,
            polar: false,
            size: n,
        },
    };
    Ok(ObstacleCapacity { result, potential: GridFunction { mesh: mesh.clone(), values: u }, h, min_flux })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;
    use crate::operator::{Identity, MeshOptions};

    #[test]
    fn circle_obstacle_matches_level() {
        let k = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        let mesh = Mesh::build(&MeshOptions::default().with_n_theta(32), &k).unwrap();
        let r = obstacle_capacity(&k, &Identity, &mesh, None).unwrap();
        assert!((r.result.capacity - 2.0).abs() < 1e-9, "{}", r.result.capacity);
        assert!((r.result.equilibrium.total - 2.0).abs() < 1e-9);
        for t in [0.5, 1.0, 3.0, 6.0] {
            let u = r.potential.eval(&LogPolarPoint::raw(t, 0.4)).unwrap();
            assert!((u - t.min(2.0)).abs() < 1e-9, "{t}: {u}");
        }
        assert!(r.min_flux > -1e-12);
    }

    #[test]
    fn solvers_agree_on_arc() {
        let k = CompactSetSpec::new("arc", vec![Primitive::arc(1.5, 0.0, 1.0)]);
        let mesh = Mesh::build(&MeshOptions::default().with_n_theta(32).with_ceiling(5.0), &k).unwrap();
        let a = obstacle_capacity(&k, &Identity, &mesh, Some("pdas")).unwrap();
        let b = obstacle_capacity(&k, &Identity, &mesh, Some("psor")).unwrap();
        let (ca, cb) = (a.result.capacity, b.result.capacity);
        assert!((ca - cb).abs() < 1e-6 * ca, "{ca} vs {cb}");
        assert!((a.result.equilibrium.total - ca).abs() < 1e-6 * ca);
        assert!(a.result.diagnostics.max_potential_over_h <= 1.0 + 1e-9);
    }

    #[test]
    fn empty_obstacle() {
        let mesh = Mesh::plain(&MeshOptions::default().with_n_theta(16).with_ceiling(4.0)).unwrap();
        let r = obstacle_capacity(&CompactSetSpec::empty("e"), &Identity, &mesh, None).unwrap();
        assert_eq!(r.result.capacity, 0.0);
        assert!(r.potential.values.iter().all(|&v| v == 0.0));
    }
}
