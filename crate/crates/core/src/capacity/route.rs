use std::sync::{Arc, OnceLock};

use super::equilibrium::{equilibrium_capacity, potential_eval, zeta_limit, CapacityResult, EquilibriumOptions};
use super::obstacle::obstacle_capacity;
use crate::error::Result;
use crate::geometry::CompactSetSpec;
use crate::kernels::KernelKind;
use crate::operator::{CoefficientField, Identity, Mesh, MeshOptions};
use crate::registry::{Named, Registry};

/// Everything a capacity route may need; each route reads its own part.
#[derive(Debug, Clone)]
pub struct RouteContext {
    pub kernel: KernelKind,
    pub field: Arc<dyn CoefficientField>,
    pub equilibrium: EquilibriumOptions,
    pub mesh: MeshOptions,
    pub obstacle_solver: Option<String>,
}

impl Default for RouteContext {
    fn default() -> Self {
        Self {
            kernel: KernelKind::LaplaceDisk,
            field: Arc::new(Identity),
            equilibrium: EquilibriumOptions::default(),
            mesh: MeshOptions::default(),
            obstacle_solver: None,
        }
    }
}

pub trait CapacityRoute: Named + Send + Sync {
    fn capacity(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<CapacityResult>;

    /// The capacity together with this route's own estimate of `R_h^K(zeta)`.
    fn capacity_and_reduction(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<(CapacityResult, f64)>;
}

/// Energy minimization over probability measures on panels of the set.
pub struct EquilibriumQpRoute;

impl Named for EquilibriumQpRoute {
    fn name(&self) -> &'static str {
        "equilibrium_qp"
    }
}

impl CapacityRoute for EquilibriumQpRoute {
    fn capacity(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<CapacityResult> {
        equilibrium_capacity(k, &ctx.kernel, &ctx.equilibrium)
    }

    /// Ring averages of the equilibrium potential far above the set.
    fn capacity_and_reduction(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<(CapacityResult, f64)> {
        let res = self.capacity(k, ctx)?;
        if k.is_empty() {
            return Ok((res, 0.0));
        }
        let (value, _) = zeta_limit(k.t_max(), |x| potential_eval(&res.equilibrium, x, &ctx.kernel))?;
        Ok((res, value))
    }
}

/// Dirichlet-energy minimization above `h` on the set, on a mesh fitted to it.
pub struct ObstacleFemRoute;

impl Named for ObstacleFemRoute {
    fn name(&self) -> &'static str {
        "obstacle_fem"
    }
}

impl CapacityRoute for ObstacleFemRoute {
    fn capacity(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<CapacityResult> {
        let mesh = Mesh::build(&ctx.mesh, k)?;
        Ok(obstacle_capacity(k, ctx.field.as_ref(), &mesh, ctx.obstacle_solver.as_deref())?.result)
    }

    /// The capacitary potential averaged over the truncation circle, where the
    /// natural condition has flattened it to its limit at the singular point.
    fn capacity_and_reduction(&self, k: &CompactSetSpec, ctx: &RouteContext) -> Result<(CapacityResult, f64)> {
        let mesh = Mesh::build(&ctx.mesh, k)?;
        let out = obstacle_capacity(k, ctx.field.as_ref(), &mesh, ctx.obstacle_solver.as_deref())?;
        let top = mesh.row_nodes(mesh.n_rows() - 1);
        let n = top.len() as f64;
        let value = top.map(|i| out.potential.values[i]).sum::<f64>() / n;
        Ok((out.result, value))
    }
}

pub fn route_registry() -> &'static Registry<dyn CapacityRoute> {
    static REG: OnceLock<Registry<dyn CapacityRoute>> = OnceLock::new();
    REG.get_or_init(|| {
        let qp: Arc<dyn CapacityRoute> = Arc::new(EquilibriumQpRoute);
        let fem: Arc<dyn CapacityRoute> = Arc::new(ObstacleFemRoute);
        Registry::new("capacity route").with(qp).with(fem).with_default("equilibrium_qp")
    })
}
