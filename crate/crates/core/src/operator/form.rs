use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, RwLock};

use super::field::{to_cylinder_frame, CoefficientField};
use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::geometry::LogPolarPoint;
use crate::linalg::{solve_dirichlet_factored, CsrMatrix, EnvelopeCholesky};

/// The stiffness matrix of `L_A(phi) = int a_ij phi_i phi_j dx` over all
/// mesh nodes. Row 0 (the unit circle) is where functions are held at zero.
#[derive(Debug, Clone)]
pub struct DirichletForm {
    pub mesh: Mesh,
    pub matrix: CsrMatrix,
}

impl DirichletForm {
    /// `phi^T A phi`; nodal values on the unit circle are taken as given.
    pub fn energy(&self, phi: &[f64]) -> f64 {
        self.matrix.quadratic_form(phi)
    }

    /// Mask of nodes held fixed by the zero condition on the unit circle.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.mesh.n_nodes()];
        for k in self.mesh.row_nodes(0) {
            m[k] = true;
        }
        m
    }

    /// Flux load of total `2pi` spread over the top row by angular width.
    pub fn top_flux_load(&self) -> Vec<f64> {
        let mesh = &self.mesh;
        let mut b = vec![0.0; mesh.n_nodes()];
        let top = mesh.n_rows() - 1;
        for (j, k) in mesh.row_nodes(top).enumerate() {
            b[k] = mesh.dual_width(j);
        }
        b
    }
}

/// P1 stiffness with coefficients sampled at triangle centroids and mapped to
/// the cylinder frame.
pub fn assemble(field: &dyn CoefficientField, mesh: &Mesh) -> Result<DirichletForm> {
    let rows = mesh.rows();
    let n = mesh.n_theta();
    let mut trip = Vec::with_capacity(mesh.n_nodes() * 7 + 16);
    for i in 0..mesh.n_rows() - 1 {
        let dt = rows[i + 1] - rows[i];
        for j in 0..n {
            let dth = mesh.dtheta(j);
            let t0 = rows[i];
            let th0 = mesh.thetas()[j];
            // local (t, theta) coordinates of a, b, c, d
            let pa = (t0, th0);
            let pb = (t0, th0 + dth);
            let pc = (t0 + dt, th0 + dth);
            let pd = (t0 + dt, th0);
            let [tri1, tri2] = mesh.cell_triangles(i, j);
            for (tri, pts) in [(tri1, [pa, pc, pb]), (tri2, [pa, pd, pc])] {
                let local = element_stiffness(field, &pts)?;
                for r in 0..3 {
                    for c in 0..3 {
                        trip.push((tri[r], tri[c], local[r][c]));
                    }
                }
            }
        }
    }
    Ok(DirichletForm { mesh: mesh.clone(), matrix: CsrMatrix::from_triplets(mesh.n_nodes(), trip) })
}

fn element_stiffness(field: &dyn CoefficientField, p: &[(f64, f64); 3]) -> Result<[[f64; 3]; 3]> {
    let (e1, e2) = ((p[1].0 - p[0].0, p[1].1 - p[0].1), (p[2].0 - p[0].0, p[2].1 - p[0].1));
    let det = e1.0 * e2.1 - e1.1 * e2.0;
    if !(det > 0.0) {
        return Err(Error::Mesh(format!("degenerate or inverted triangle at t={}", p[0].0)));
    }
    let area = 0.5 * det;
    // gradients of the barycentric functions
    let g1 = (e2.1 / det, -e2.0 / det);
    let g2 = (-e1.1 / det, e1.0 / det);
    let g0 = (-g1.0 - g2.0, -g1.1 - g2.1);
    let g = [g0, g1, g2];
    let centroid = LogPolarPoint::raw((p[0].0 + p[1].0 + p[2].0) / 3.0, (p[0].1 + p[1].1 + p[2].1) / 3.0);
    let a = to_cylinder_frame(&field.eval(&centroid), centroid.theta);
    let mut k = [[0.0; 3]; 3];
    for r in 0..3 {
        let ag = (a[0][0] * g[r].0 + a[0][1] * g[r].1, a[1][0] * g[r].0 + a[1][1] * g[r].1);
        for c in 0..3 {
            k[r][c] = area * (ag.0 * g[c].0 + ag.1 * g[c].1);
        }
    }
    Ok(k)
}

/// Solve `A u = b` with `u = 0` on the unit circle and natural conditions on
/// the truncation circle.
fn factor_natural(form: &DirichletForm) -> Result<EnvelopeCholesky> {
    EnvelopeCholesky::factor_with_fixed(&form.matrix, &form.boundary_mask())
}

fn boundary_values(form: &DirichletForm) -> Vec<Option<f64>> {
    form.boundary_mask().into_iter().map(|b| b.then_some(0.0)).collect()
}

/// The operator's own `h`: zero on the unit circle and carrying flux `2pi`
/// towards the singular point, so that `h = t` for the Laplacian.
pub fn discrete_h(form: &DirichletForm, chol: &EnvelopeCholesky) -> Vec<f64> {
    solve_dirichlet_factored(chol, &form.matrix, &form.top_flux_load(), &boundary_values(form))
}

/// Load `2pi` times the barycentric weights of the pole.
fn pole_load(mesh: &Mesh, pole: &LogPolarPoint) -> Result<Vec<f64>> {
    if !(pole.t > 0.0) || pole.t >= mesh.t_ceiling() {
        return Err(Error::Domain(format!(
            "pole at t={} is not strictly inside the mesh (0, {})",
            pole.t,
            mesh.t_ceiling()
        )));
    }
    let loc = mesh.locate(pole).ok_or_else(|| Error::Domain("pole outside mesh".into()))?;
    let mut b = vec![0.0; mesh.n_nodes()];
    for (k, w) in loc {
        b[k] += TAU * w;
    }
    Ok(b)
}

/// Nodal values of a finite-element function on a mesh.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub mesh: Mesh,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn eval(&self, p: &LogPolarPoint) -> Option<f64> {
        self.mesh.interpolate(&self.values, p)
    }
}

/// Finite-element Green function `G_A(., pole)` with the point load on the
/// pole's triangle.
pub fn discrete_green(field: &dyn CoefficientField, mesh: &Mesh, pole: &LogPolarPoint) -> Result<GridFunction> {
    let form = assemble(field, mesh)?;
    let chol = factor_natural(&form)?;
    let b = pole_load(mesh, pole)?;
    let values = solve_dirichlet_factored(&chol, &form.matrix, &b, &boundary_values(&form));
    Ok(GridFunction { mesh: mesh.clone(), values })
}

fn pole_key(p: &LogPolarPoint) -> (u64, u64) {
    (p.t.to_bits(), p.theta.to_bits())
}

/// A factored operator: its form, its `h`, and Green functions computed on
/// demand and memoized per pole.
pub struct DiscreteOperator {
    field: Arc<dyn CoefficientField>,
    form: DirichletForm,
    chol: EnvelopeCholesky,
    h: Vec<f64>,
    greens: RwLock<HashMap<(u64, u64), Arc<Vec<f64>>>>,
}

impl std::fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteOperator")
            .field("field", &self.field.description())
            .field("n_theta", &self.form.mesh.n_theta())
            .field("n_rows", &self.form.mesh.n_rows())
            .finish()
    }
}

impl DiscreteOperator {
    pub fn new(field: Arc<dyn CoefficientField>, mesh: &Mesh) -> Result<Self> {
        let form = assemble(field.as_ref(), mesh)?;
        let chol = factor_natural(&form)?;
        let h = discrete_h(&form, &chol);
        Ok(Self { field, form, chol, h, greens: RwLock::new(HashMap::new()) })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.form.mesh
    }

    pub fn form(&self) -> &DirichletForm {
        &self.form
    }

    pub fn field(&self) -> &Arc<dyn CoefficientField> {
        &self.field
    }

    pub fn field_description(&self) -> String {
        self.field.description()
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// The operator's `h` at `p`, extended linearly past the truncation circle.
    pub fn h_at(&self, p: &LogPolarPoint) -> f64 {
        let mesh = self.mesh();
        match mesh.interpolate(&self.h, p) {
            Some(v) => v,
            None if p.t <= 0.0 => 0.0,
            None => {
                let top = LogPolarPoint::raw(mesh.t_ceiling(), p.theta);
                mesh.interpolate(&self.h, &top).unwrap_or(p.t) + (p.t - mesh.t_ceiling())
            }
        }
    }

    fn green_table(&self, pole: &LogPolarPoint) -> Result<Arc<Vec<f64>>> {
        let key = pole_key(pole);
        if let Some(v) = self.greens.read().expect("green cache poisoned").get(&key) {
            return Ok(v.clone());
        }
        let b = pole_load(self.mesh(), pole)?;
        let v = Arc::new(solve_dirichlet_factored(&self.chol, &self.form.matrix, &b, &boundary_values(&self.form)));
        self.greens.write().expect("green cache poisoned").insert(key, v.clone());
        Ok(v)
    }

    /// `G_A(x, pole)` by interpolation of the pole's table.
    pub fn green_value(&self, x: &LogPolarPoint, pole: &LogPolarPoint) -> Result<f64> {
        let table = self.green_table(pole)?;
        let mesh = self.mesh();
        match mesh.interpolate(&table, x) {
            Some(v) => Ok(v),
            // above the mesh the Green function is flat to within the truncation error
            None if x.t > mesh.t_ceiling() => {
                Ok(mesh.interpolate(&table, &LogPolarPoint::raw(mesh.t_ceiling(), x.theta)).unwrap_or(0.0))
            }
            None => Ok(0.0),
        }
    }

    /// Solves `A u = b` with the unit-circle row held at zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        solve_dirichlet_factored(&self.chol, &self.form.matrix, b, &boundary_values(&self.form))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CompactSetSpec, Primitive};
    use crate::kernels::green_disk;
    use crate::operator::field::{Identity, RotatedDiag};
    use crate::operator::mesh::MeshOptions;

    fn strip(n_theta: usize, ceiling: f64) -> Mesh {
        Mesh::plain(&MeshOptions::default().with_n_theta(n_theta).with_ceiling(ceiling).with_focus(0.0, ceiling))
            .unwrap()
    }

    #[test]
    fn radial_test_function_energy() {
        let set = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        let mesh = Mesh::build(&MeshOptions::default().with_n_theta(32), &set).unwrap();
        let form = assemble(&Identity, &mesh).unwrap();
        let phi: Vec<f64> = (0..mesh.n_nodes()).map(|k| (mesh.coords(k).0 / 2.0).min(1.0)).collect();
        assert!((form.energy(&phi) - TAU / 2.0).abs() < 1e-10);
        assert_eq!(form.energy(&vec![0.0; mesh.n_nodes()]), 0.0);
        assert!(form.matrix.is_symmetric(1e-12));
    }

    #[test]
    fn energy_rotation_invariant_and_elliptic_band() {
        let mesh = strip(24, 3.0);
        let form = assemble(&Identity, &mesh).unwrap();
        let aniso = assemble(&RotatedDiag::new(2.0, 0.5, 0.4).unwrap(), &mesh).unwrap();
        let phi: Vec<f64> = (0..mesh.n_nodes())
            .map(|k| {
                let (t, th) = mesh.coords(k);
                t * (3.0 - t) * (1.0 + 0.3 * (2.0 * th).sin())
            })
            .collect();
        let (e, ea) = (form.energy(&phi), aniso.energy(&phi));
        assert!(ea >= e / 2.0 - 1e-9 && ea <= 2.0 * e + 1e-9, "{e} {ea}");
        // axisymmetric function: energy independent of the angular offset of the columns
        let radial: Vec<f64> = (0..mesh.n_nodes()).map(|k| mesh.coords(k).0.sin()).collect();
        let shifted = Mesh::from_grid(mesh.rows().to_vec(), mesh.thetas().iter().map(|x| x + 0.1).collect()).unwrap();
        let f2 = assemble(&Identity, &shifted).unwrap();
        assert!((form.energy(&radial) - f2.energy(&radial)).abs() < 1e-10);
    }

    #[test]
    fn h_is_t_for_laplacian() {
        let op = DiscreteOperator::new(Arc::new(Identity), &strip(32, 6.0)).unwrap();
        for k in 0..op.mesh().n_nodes() {
            assert!((op.h_values()[k] - op.mesh().coords(k).0).abs() < 1e-9);
        }
        assert!((op.h_at(&LogPolarPoint::raw(2.0, 1.0)) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn green_against_exact() {
        let mesh = Mesh::plain(&MeshOptions::default().with_n_theta(128).with_ceiling(12.0).with_focus(0.0, 6.0)).unwrap();
        let pole = LogPolarPoint::raw(5.0, 0.0);
        let g = discrete_green(&Identity, &mesh, &pole).unwrap();
        let x = LogPolarPoint::raw(1.0, 0.0);
        let exact = green_disk(&x, &pole).unwrap();
        assert!((g.eval(&x).unwrap() / exact - 1.0).abs() < 0.03);
        assert!(g.values[mesh.row_nodes(0)].iter().all(|&v| v == 0.0));
        assert!(g.values.iter().all(|&v| v > -1e-12));
        assert!(discrete_green(&Identity, &mesh, &LogPolarPoint::raw(12.0, 0.0)).is_err());
    }
}
