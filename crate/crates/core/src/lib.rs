//! Chains of boundary-controlled transport equations.
//!
//! The crate evaluates mild solutions of `∂_t x + c ∂_ω x = 0` on a chain of
//! subintervals coupled at control access points, decides domain-uniform
//! stabilizability from the access-point geometry, realizes the stabilizing
//! feedback laws and solves the discretized LQ optimal control problem.

pub mod error;
pub mod feedback;
pub mod grid;
pub mod io;
pub mod layout;
pub mod mild;
pub mod norms;
pub mod ocp;
pub mod stabilizability;

pub use error::{ChainError, Result};
pub use grid::{
    bump_initial, bump_value, restrict, ControlSignal, FieldSpec, SpatialGrid, StateField, TimeGrid,
    Trajectory, TrajectorySpec,
};
pub use layout::{build_chain, ChainLayout, LayoutSpec};
pub use feedback::{ClosedLoopRun, DirichletFeedback, NeumannFeedback};
pub use mild::{Coupling, OpenLoopProblem};
pub use ocp::{KktSystem, OcpConfig, OcpSolution};
pub use norms::{NormKind, WeightSpec};
pub use stabilizability::{Certificate, DecayConstants, GapReport};
