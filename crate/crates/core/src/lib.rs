//! Symbol error probability of n-bit phase-quantized SIMO receivers with
//! M-PSK signalling over correlated Rayleigh fading.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! - [`linalg`]: small dense Hermitian linear algebra (Jacobi eigensolver,
//!   Cholesky, determinant, the AMRC weight matrix),
//! - [`constellation`]: the offset M-PSK point set and the phase quantizer,
//! - [`channel`]: covariance models and seeded samplers for fading, noise and
//!   symbols,
//! - [`receiver`]: MRC, AMRC and mirror detectors plus the high-SNR bound
//!   statistics,
//! - [`analytic`]: Q-function, diversity and coding gains, asymptotes,
//! - [`montecarlo`]: the chunked, reproducible SEP estimator and the
//!   statistics used to validate the analytic results.
//!
//! Parallel execution, file formats and the command-line tool live in the
//! companion `qsep` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod analytic;
pub mod channel;
pub mod constellation;
pub mod linalg;
pub mod montecarlo;
pub mod receiver;

pub use num_complex::Complex64;

pub use analytic::{AnalyticError, GainRegime, GainResult};
pub use channel::{ChannelError, ChannelModel, CorrelationSpec, RngStream};
pub use constellation::{NearestPhase, PhaseQuantizer, PskConstellation, QuantizerOutput};
pub use linalg::{CholeskyFactor, ComplexMatrix, HermitianEigen, LinalgError};
pub use montecarlo::{Detector, MonteCarloError, SimConfig, SimPoint};
pub use receiver::{BoundStatistics, ReceiverError, TrialDraw};
