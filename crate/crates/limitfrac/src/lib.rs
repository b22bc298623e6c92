//! Adaptive P1 finite element simulation of quasi-static brittle fracture in
//! strain-limiting elastic solids under anti-plane shear.
//!
//! The solid occupies the unit square with an edge slit; the state is a pair
//! of nodal fields: the stress potential `u` and the phase field `v` with
//! `v = 1` intact and `v ≈ 0` cracked. Each loading step alternates energy
//! minimization in `u` and `v`, while residual-type local indicators drive
//! Dörfler marking and newest-vertex bisection of the mesh. Three adaptive
//! drivers are provided: refine after full minimization (I), refine after
//! each half-solve (II), and II with a vanishing refinement tolerance (III).

pub mod adapt;
pub mod config;
pub mod estimator;
pub mod fespace;
pub mod io;
pub mod mesh;
pub mod model;
pub mod par;
pub mod sim;
pub mod solver;
pub mod sparse;

pub use adapt::{dorfler_mark, dorfler_mark_sq, AdaptConfig, Driver, StepSolution};
pub use config::Config;
pub use estimator::{assemble_indicators, IndicatorSet};
pub use fespace::{apply_constraints, lumped_integral, transfer, ConstraintSet, ScalarField};
pub use mesh::{EdgeClass, Mesh, Slit};
pub use model::{energy, EnergyBreakdown, ModelParams};
pub use sim::{run_quasi_static, LoadSpec, SimState};
pub use solver::SolverConfig;

/// Crate-wide error, wrapping the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Field(#[from] fespace::FieldError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Solver(#[from] solver::SolverError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
