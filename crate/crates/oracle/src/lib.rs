//! Reference solvers kept deliberately separate from `drccbo-core`.
//!
//! Nothing here depends on the core crate: the LP oracle is a plain dense
//! two-phase simplex, and the GP oracle is a from-scratch dense solve of the
//! regularized Gram system. Both are slow and simple, which is the point.

pub mod gp;
pub mod lp;

pub use gp::{dense_posterior, DensePosterior};
pub use lp::{l1_ball_min_expectation, LinearProgram, LpError, LpSolution};
