//! Divergence-form operators: coefficient fields, meshes of the truncated
//! cylinder, the Dirichlet form and discrete Green functions.

mod field;
mod form;
mod mesh;

pub use field::{
    field_from_json, field_registry, sym2_eigen, to_cylinder_frame, validate_ellipticity, Checkerboard,
    CoefficientField, EllipticityReport, FieldFactory, FieldSpec, Identity, RotatedDiag, Sym2,
};
pub use form::{assemble, discrete_green, discrete_h, DirichletForm, DiscreteOperator, GridFunction};
pub use mesh::{Location, Mesh, MeshOptions, MIN_ANGLE_DEG};
