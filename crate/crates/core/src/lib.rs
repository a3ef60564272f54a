//! Potential theory on the punctured unit disk near its centre.
//!
//! Everything is expressed in the cylinder coordinates `t = -log|x|`, `theta`,
//! in which the Laplacian Dirichlet energy is unchanged and the singular
//! point sits at `t = +inf`.

pub mod capacity;
pub mod error;
pub mod geometry;
pub mod hdp;
pub mod kernels;
pub mod linalg;
pub mod mc;
pub mod operator;
pub mod registry;
pub mod wiener;

pub use error::{Error, Result};
