//! Per-tone simulator and receiver for upstream G.fast transmission under
//! far-end crosstalk (FEXT).
//!
//! The receiver alternates a continuous adaptive differential-evolution (DE)
//! channel estimator with a binary DE multi-user detector, exchanging soft
//! information with a rate-1/2 turbo decoder and feeding decoded data back as
//! virtual pilots. Baselines (single-user slicing, zero-forcing, exhaustive
//! maximum likelihood, least squares) and the Cramer-Rao bound are included
//! for comparison, along with an experiment harness that writes CSV.

pub mod channel;
pub mod de;
pub mod detectors;
pub mod error;
pub mod estimation;
pub mod fec;
pub mod harness;
pub mod linalg;
pub mod modem;
pub mod rng;
pub mod turbo_engine;

pub use error::{Error, Result};
pub use num_complex::Complex64;
