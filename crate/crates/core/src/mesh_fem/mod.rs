//! Two-dimensional linear elasticity on structured quadrilateral grids,
//! with adjoint-based gradients of a displacement misfit.

mod adjoint;
mod assembly;
mod band;
mod element;
pub mod io;
mod mesh;

pub use adjoint::{
    cost_misfit, log_lambda_gradient, material_gradient, misfit_and_log_gradient, solve_adjoint,
    ObservationSet,
};
pub use assembly::{
    assemble_load, assemble_stiffness, assemble_system, forward, solve_forward, LoadSpec,
    MaterialField, SolveResult,
};
pub use band::{BandCholesky, SymBandMatrix};
pub use element::{QuadGeometry, QuadPoint};
pub use mesh::{build_structured_mesh, dof, BoundarySets, Mesh, Side};
