//! Consistent, partially exchangeable systems of Markov chains on `d` types.
//!
//! The crate covers
//! * exact `(b, K)`-change rates and finite generators ([`rates`]),
//! * coordination measures on stochastic matrices ([`measures`]),
//! * path simulation of the particle system ([`simulator`]),
//! * the limiting frequency process and its moment dual ([`definetti`]),
//! * multitype coalescents whose type switching is a particle system of the
//!   same kind ([`coalescent`]),
//! * config-driven scenario runs ([`cli_io`]).

pub mod cli_io;
pub mod coalescent;
pub mod combinatorics;
pub mod definetti;
pub mod error;
pub mod measures;
pub mod rates;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use combinatorics::{
    Configuration, CountVector, Permutation, TransitionCountMatrix, TypeIndex,
};
pub use error::{Error, Result};
pub use measures::{CoordinationMeasure, MeasureFamily, StochasticMatrix};
pub use rates::{DiceParams, GeneratorMatrix, RateMatrixA};

/// Tolerance used for row sums of stochastic matrices and simplex checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance for residuals of exact rate identities.
pub const RESIDUAL_TOL: f64 = 1e-9;
