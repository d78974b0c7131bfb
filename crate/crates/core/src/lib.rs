//! Stochastic shrinking-horizon model predictive control for scheduling
//! binary "message" interventions against a switched affine step-count model.
//!
//! The pieces, bottom-up:
//!
//! - [`model`]: the piecewise affine autoregressive model and its simulator.
//! - [`constraints`]: burden constraints (spacing, count, cost budget) and the
//!   composite per-step cost profile.
//! - [`scenario`]: Monte Carlo noise sampling and the reduction of every
//!   scenario's goal test to one linear inequality in the schedule.
//! - [`solver`]: the big-M program, an exact branch-and-bound, a fast path
//!   exploiting shared gains, and an exhaustive oracle.
//! - [`mpc`]: the shrinking-horizon loop.
//! - [`cli`]: experiment presets, configuration and artifact writers.
//!
//! Steps are indexed from 0 at the start of the intervention window; a window
//! of length `T` covers steps `0..T`.

pub mod cli;
pub mod constraints;
pub mod error;
pub mod model;
pub mod mpc;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
