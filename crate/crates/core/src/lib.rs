//! Numerical core for stochastic portfolio theory and investment-map learning.
//!
//! The crate is `no_std` (with `alloc`) so every routine here is a pure
//! function of its inputs and seeds. File formats, experiment orchestration
//! and the command line live in the `spt` companion crate.
//!
//! Module map:
//!
//! - [`market`]: log-Euler simulation of Itô-process capitalisations, market
//!   weights, diversity / non-degeneracy checks, relative covariances.
//! - [`portfolios`]: equal-weight, diversity-weighted, functionally-generated
//!   (classic and covariate-extended) and investment-map portfolios.
//! - [`master`]: pathwise decomposition of log relative wealth into the
//!   generating-function term and the drift integral.
//! - [`backtest`]: discrete wealth accounting with proportional costs,
//!   Sharpe ratio and excess return.
//! - [`inference`]: Gamma performance likelihood, grid search and random-walk
//!   Metropolis-Hastings over the diversity exponent.
//! - [`gp`]: grid Gaussian-process prior on the log investment map with a
//!   Kronecker-factored whitening and elliptical slice sampling.
#![no_std]
// Once `std` is anywhere in the build graph its inherent float methods
// shadow `math::Real`, leaving the trait imports unused.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod backtest;
pub mod error;
pub mod gp;
pub mod inference;
pub mod linalg;
pub mod market;
pub mod master;
pub mod math;
pub mod portfolios;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
