//! Robust feasibility certificates for Markowitz portfolios.
//!
//! The crate turns the robust return constraint `mu^T x >= tau`, required to
//! hold for every `mu` in an affinely parameterized uncertainty set, into a
//! pair of homogenized quadratic forms `(A, B)` and decides robust
//! feasibility by searching for an S-lemma multiplier `lambda >= 0` with
//! `A - lambda B` positive semidefinite.
//!
//! Modules:
//!
//! - [`model`]: return histories, mean/covariance estimation, portfolios.
//! - [`uncertainty`]: uncertainty-set geometry and the shift convention shared
//!   by the matrix builder and the worst-case oracle.
//! - [`lmi`]: construction of the `(A, B)` feasibility systems.
//! - [`eigen`] and [`certify`]: symmetric eigenvalues and the multiplier search.
//! - [`oracle`]: closed-form and sampled worst-case returns used as ground truth.
//! - [`qp`] and [`solver`]: active-set Markowitz solver, robust variant and
//!   efficient frontiers.
//! - [`cli`]: the batch command-line front end.

pub mod certify;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod lmi;
pub mod model;
pub mod oracle;
pub mod output;
pub mod qp;
pub mod solver;
pub mod uncertainty;

pub use error::{Error, Result};
