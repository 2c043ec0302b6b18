//! Deterministic simulator for Byzantine-robust distributed first-order
//! optimization with communication compression.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`] and [`rng`]: dense vectors, a finite-difference gradient
//!   oracle and counter-addressed random streams.
//! * [`objective`]: logistic-regression and quadratic losses, the mini-batch
//!   gradient-difference estimator and smoothness constants.
//! * [`compressors`]: RandK, TopK, natural compression and the
//!   unbiased-to-contractive adapter, all with exact bit accounting.
//! * [`aggregators`]: mean, coordinate-wise median, geometric median, Krum
//!   and bucketing, plus an empirical robustness certificate.
//! * [`attacks`]: omniscient Byzantine adversaries.
//! * [`algorithms`]: Byz-VR-MARINA, Byz-VR-MARINA 2.0, Byz-DASHA-PAGE,
//!   Byz-EF21 and Byz-EF21-BC as round-by-round state machines, and the
//!   theoretical stepsize rules.
//! * [`harness`]: LibSVM loading, partitioning, experiment runs and CSV
//!   output.

pub mod aggregators;
pub mod algorithms;
pub mod attacks;
pub mod compressors;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::Vector;
pub use rng::RngStream;
