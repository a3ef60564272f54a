//! Points, compact sets and shell decompositions in log-polar coordinates.

mod point;
mod primitive;
mod set;

pub use point::{normalize_angle, to_logpolar, wrap_angle, LogPolarPoint, CARTESIAN_T_LIMIT};
pub use primitive::{Curve, Primitive};
pub use set::{
    discretize, shell_bounds, shell_decompose, CompactSetSpec, Discretization, GeometryFile,
    ShellDecomposition,
};
