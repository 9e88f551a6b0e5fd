//! The geometric-delay countdown process and the corank of random matrices
//! over finite fields.
//!
//! A finitely supported delay sequence `z` drives a deterministic path that
//! counts down from the diagonal `x = -t` to zero, spending `z_i` extra steps
//! at height `i`. With independent geometric delays `P(Z_i >= k) = x^{ik}`
//! the path is a pure-death Markov chain; at `x = 1/q` its height at time `t`
//! is distributed as the corank of a random `n x (n + t)` matrix over `F_q`.
//!
//! Modules:
//! - [`qseries`]: scalar backends, q-products, Gaussian binomials.
//! - [`countdown`]: the map from delays to paths, hitting and death times, sampling.
//! - [`distributions`]: exact product-form laws and their modes.
//! - [`tvmetrics`]: total variation distances, closed forms and bounds.
//! - [`fieldmat`]: `F_q` arithmetic, matrix rank, rank counts.
//! - [`harness`]: brute-force oracles, Monte Carlo runs, verification suites.

pub mod countdown;
pub mod distributions;
pub mod error;
pub mod fieldmat;
pub mod harness;
pub mod qseries;
pub mod tvmetrics;

pub use error::{Error, Result};
pub use qseries::{Approx, Backend, Rational, Scalar};
