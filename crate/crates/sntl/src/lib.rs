//! Spatial prediction on the unit square with a radial-basis feed-forward
//! network, transfer learning from a large source dataset, and ordinary
//! Kriging baselines.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: deterministic RNG, dense SPD linear algebra, the modified
//!   Bessel function `K1`, and finite-difference utilities.
//! - [`basis`]: the Wendland function and the multi-resolution knot embedding
//!   that maps a location to the network's 139-dimensional input.
//! - [`gp`]: Matern covariance, Gaussian-process sampling, maximum-likelihood
//!   parameter fitting, and the ordinary Kriging predictor.
//! - [`surfaces`]: simulated stationary and non-stationary test surfaces and
//!   source/target/test dataset assembly.
//! - [`net`]: the 139 -> 100x7 -> 1 ReLU network, exact backpropagation, Adam,
//!   the training loop, and portable weight persistence.
//! - [`experiment`]: the benchmark harness comparing transfer, target-only,
//!   and Kriging across target sizes and replicates.
//! - [`cli`]: the `sntl` command-line entry point.

pub mod basis;
pub mod cli;
pub mod experiment;
pub mod gp;
pub mod net;
pub mod numerics;
pub mod surfaces;
