//! P1 finite elements on a structured triangulation of the unit square.

mod assembly;
mod mesh;
mod observation;
mod system;

pub use assembly::{
    assemble_advection, assemble_flux_advection, assemble_mass, assemble_region_mass, assemble_stiffness,
    flux_form_apply, flux_form_apply_transpose, flux_form_gradient, Coefficient, Rect, Region, Velocity,
};
pub use mesh::{Edge, ElementGeometry, Mesh};
pub use observation::{apply_observation, observation_matrix, sensor_grid};
pub use system::{solve_elliptic, AssembledSystem, BoundarySpec, DirichletCondition, EllipticOperator, Rhs};

/// Alias of [`Mesh::new`].
pub fn build_mesh(n: usize) -> crate::error::Result<Mesh> {
    Mesh::new(n)
}
