//! Numerical workbench for effective stability of near-integrable
//! Hamiltonian systems in action-angle variables.
//!
//! The crate is organised bottom-up:
//!
//! - [`series`]: truncated Fourier–Taylor series, Poisson brackets, file I/O.
//! - [`norms`]: Gevrey and `C^k` norms on sampling grids.
//! - [`diophantine`]: periodic vectors, simultaneous approximation,
//!   resonance modules and projections.
//! - [`morse`]: Diophantine Morse checks and the steepness escape search.
//! - [`normal_form`]: averaging along periodic frequencies and Lie transforms.
//! - [`dynamics`]: symplectic integration and drift measurements.
//! - [`restrain`]: exponents, parameter conditions and the restraint monitor.
//! - [`harness`]: experiment configuration and scaling runs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diophantine;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod morse;
pub mod normal_form;
pub mod norms;
pub mod restrain;
pub mod series;

pub use error::{Error, Result};
pub use series::{Coordinate, Domain, FourierTaylorSeries, HamiltonianSystem, MultiIndex, Regularity};
