//! Parametric convexified optimal power flow: problem construction, an
//! interior-point solver that exposes duals, dual-learning models and
//! constraint screening with exact recovery.

pub mod analysis;
pub mod case;
pub mod dataset;
pub mod linalg;
pub mod moge;
pub mod nn;
pub mod problem;
pub mod screening;
pub mod solver;

pub use case::{parse_matpower, Branch, Bus, CaseError, Generator, NetworkCase, Topology};
pub use solver::{kkt_residual, solve, PrimalDualSolution, SolveOptions, SolveStatus};
pub use problem::{
    build_cdfopf, build_qcopf, ModelKind, ParamPoint, ParametricCopf, ProblemError, QuadRow,
};
