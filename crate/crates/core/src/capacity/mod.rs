//! h-capacity, equilibrium measures and reductions of compact sets.

mod equilibrium;
mod measure;
mod obstacle;
mod panels;
mod qp;
mod route;

pub use equilibrium::{
    capacity_at_zeta, default_probes, equilibrium_capacity, greenian_capacity, greenian_potential,
    greenian_reduction_at_zeta, potential_eval, ring_average, smoothed_reduction, zeta_limit, CapacityResult,
    Diagnostics, EquilibriumOptions, Route, ZetaEstimate, POLAR_ENERGY, QP_TOL,
};
pub use measure::{DiscreteMeasure, PanelShape};
pub use panels::{capacity_panels, energy_matrix, green_matrix, Normalization, Panel, PanelRule, PanelSet, MAX_TOTAL_PANELS};
pub use qp::{kkt_residual, project_simplex, qp_registry, ActiveSet, BbThenActiveSet, ProjectedBb, QpOutcome, SimplexQpSolver};
pub use obstacle::{
    obstacle_capacity, obstacle_registry, obstacle_residual, ObstacleCapacity, ObstacleOutcome, ObstacleProblem,
    ObstacleSolver, Pdas, Psor, OBSTACLE_TOL,
};
pub use route::{route_registry, CapacityRoute, EquilibriumQpRoute, ObstacleFemRoute, RouteContext};
