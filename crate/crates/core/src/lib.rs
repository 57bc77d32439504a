//! Numerical laboratory for parabolic equations in non-divergence form whose
//! diffusion coefficient `a` and singular potential weight `b` vanish at an
//! interior point `x0` of `(0, 1)`:
//!
//! ```text
//! u_t - a(x) u_xx - lambda / b(x) u = h(t, x) chi_omega(x)
//! ```
//!
//! The crate computes weighted Hardy-Poincare constants, checks the
//! admissibility and coercivity conditions that make the problem well posed,
//! evolves forward and adjoint problems, evaluates Carleman weights and both
//! sides of the Carleman inequalities, estimates observability constants and
//! synthesizes HUM null controls.

pub mod carleman;
pub mod cli;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod hardy;
pub mod linalg;
pub mod observability;
pub mod report;
pub mod testfns;

pub use error::{Error, Result};
