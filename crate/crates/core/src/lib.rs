//! Correlation and communication complexity of bipartite quantum states.
//!
//! * [`linalg`]: dense complex linear algebra (SVD, Hermitian eigensolver,
//!   partial trace, fidelity).
//! * [`pure`]: Schmidt decompositions, approximate Schmidt rank and the exact
//!   approximate complexity of pure states.
//! * [`classical`]: psd-rank and nonnegative-rank bounds for classical
//!   distributions, the psd factorization solver, and purification synthesis.
//! * [`general`]: the factorization/state correspondence for mixed states.
//! * [`sim`]: dense protocol simulation and verification.
//! * [`io`] and [`cli`]: file formats and the `qcorr` command line.

pub mod classical;
pub mod cli;
pub mod error;
pub mod general;
pub mod io;
pub mod linalg;
pub mod pure;
pub mod random;
pub mod sim;

pub use error::{Error, Result};
pub use linalg::{CMatrix, DensityMatrix, SvdResult, C64};
