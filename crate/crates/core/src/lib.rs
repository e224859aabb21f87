pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod reference;
pub mod solver;

pub use energy::{
    apply_linearized, energy_gradient, energy_trace, scaled_energy, weighted_energy, Discretization,
    EnergyBreakdown, EnergyTrace, Functional, QuadratureWeights,
};
pub use error::{Error, Result};
pub use grid::{ball_indices, cylinder_indices, NodeIndex, Region, RegionIndexSet, ScalarField, SpaceTimeGrid};
pub use model::{BoundaryCondition, InitialDatum, Nonlinearity, ProblemSpec};
pub use solver::{
    double_inequality_check, el_residual, minimize, minimize_from, solve_scaled, InequalityDefects, SolveReport,
    SolverConfig,
};
pub use reference::{solve_parabolic, strong_residual};
