//! Q2 finite-element solvers for strongly anisotropic elliptic problems.
//!
//! The problem is `-div(A grad u) = f` on a rectangle with
//! `A = A_perp (I - b b^T) + A_par / eps b b^T`, where `eps` may be tiny or
//! zero. Four discretisations are provided: the direct singular-perturbation
//! scheme (P), the two-field micro-macro scheme (MM, also with variable eps
//! and at the limit eps = 0) and the five-field duality-based scheme (DB).

pub mod analysis;
pub mod assembly;
pub mod cases;
pub mod cli;
pub mod error;
pub mod fem;
pub mod fields;
pub mod grid;
pub mod linalg;
pub mod schemes;
pub mod sparse;

pub use assembly::{SchemeKind, SparseSystem};
pub use cases::{build_case, CaseName, CaseParams, TestCase};
pub use error::{ConfigError, Error, Result, SolverError};
pub use grid::Grid;

