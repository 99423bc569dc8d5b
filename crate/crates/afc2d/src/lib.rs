//! A 2D piecewise-linear finite element toolkit for steady
//! convection-diffusion-reaction equations
//!
//! ```text
//!   -eps * lap(u) + b . grad(u) + c u = f   in Omega,
//!                                   u = u_D on the Dirichlet boundary,
//!                        eps * du/dn = g   on the Neumann boundary,
//! ```
//!
//! discretized with algebraic flux correction (AFC) so that the computed
//! solutions satisfy the discrete maximum principle. The crate provides
//!
//! - triangulations with uniform (red) and adaptive (red-green) refinement
//!   and conforming closure ([`mesh`]),
//! - P1 Galerkin and SUPG assembly with exact Dirichlet elimination
//!   ([`assembly`], [`supg`]),
//! - the Kuzmin and BJK limiters together with the nonlinear AFC fixed-point
//!   solver ([`afc`]),
//! - residual-based a posteriori error estimators in the energy norm, both
//!   the AFC-energy and the AFC-SUPG-energy technique ([`estimators`]),
//! - a SOLVE -> ESTIMATE -> MARK -> REFINE driver with maximum marking
//!   ([`adaptivity`]) and a small configuration/run layer ([`driver`]).
//!
//! The `examples/` directory is the front door: each example is a runnable
//! study exercising one capability (uniform convergence, adaptive refinement,
//! limiter behavior, estimator breakdowns, layer-width tracking). A thin
//! `afc2d` binary exposes the same runs through `run`, `sweep`, `mesh-info`
//! and `check` subcommands.

pub mod adaptivity;
pub mod afc;
pub mod assembly;
pub mod config;
pub mod driver;
pub mod estimators;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod selfcheck;
pub mod supg;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cell {cell}: signed area {area:.3e} is not positive")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("mesh is not conforming: {0}")]
    NonConforming(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("marked cell {cell} does not exist (mesh has {n_cells} cells)")]
    InvalidMarking { cell: usize, n_cells: usize },

    #[error("nothing to refine: all error indicators are zero")]
    AllIndicatorsZero,

    #[error("matrix is singular: first zero pivot in row {row}")]
    SingularMatrix { row: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("problem has no exact solution; cannot evaluate the error norm")]
    MissingExactSolution,

    #[error("limiter weight gamma[{dof}] = {value} must be positive")]
    NonPositiveGamma { dof: usize, value: f64 },

    #[error("edge ({v0}, {v1}) has no matrix entry; degrees of freedom are disconnected")]
    DisconnectedEdge { v0: usize, v1: usize },

    #[error("solutions live on different meshes ({left} vs {right} dofs)")]
    MeshMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mesh file format error (line {line}): {message}")]
    MeshFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
