//! Wars of attrition on one-dimensional diffusions.
//!
//! Markovian randomized stopping times are represented as pairs `(mu, S)` of a locally
//! finite measure and a closed stopping set. The crate simulates the underlying
//! diffusion, evaluates payoffs by Monte Carlo, computes best replies on a grid and
//! verifies Markov-perfect equilibria.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod best_reply;
pub mod diffusion;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod measures;
pub mod payoffs;
pub mod poly;
pub mod strategies;
pub mod sum;

pub use diffusion::{DiffusionModel, Interval, LocalTimeField, PathSample};
pub use error::{Error, Result};
pub use measures::{ClosedSet, ExtendedMeasure, LocallyFiniteMeasure, MeasureValue};
pub use poly::{PiecewisePolynomial, Polynomial};
pub use strategies::MarkovStrategy;
