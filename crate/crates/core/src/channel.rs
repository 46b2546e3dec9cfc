//! Receive covariance models and the random samplers for fading, noise and
//! transmit symbols.
//!
//! `CN(0, 1)` means independent real and imaginary parts of variance 1/2
//! each. Every sampler takes an explicit [`RngStream`]; a stream is fully
//! determined by `(seed, stream_id)` so any number of them can be consumed
//! concurrently and replayed bit for bit.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{self, CholeskyFactor, ComplexMatrix, HermitianEigen, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("covariance is {got}x{got}, expected {expected}x{expected}")]
    WrongDimension { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the receive covariance `K` is built.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", rename_all = "lowercase")
)]
pub enum CorrelationSpec {
    /// `K = I`.
    Identity,
    /// `K_ij = α^|i-j| exp(jφ(i-j))` with `0 <= α < 1`.
    Exponential { alpha: f64, phi: f64 },
    /// A user supplied Hermitian positive-definite matrix.
    Explicit { matrix: ComplexMatrix },
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            CorrelationSpec::Identity => Ok(()),
            CorrelationSpec::Exponential { alpha, phi } => {
                if !(0.0..1.0).contains(alpha) {
                    return Err(ChannelError::InvalidParameter("alpha must lie in [0, 1)"));
                }
                if !phi.is_finite() {
                    return Err(ChannelError::InvalidParameter("phi must be finite"));
                }
                Ok(())
            }
            CorrelationSpec::Explicit { matrix } => {
                linalg::cholesky(matrix)?;
                Ok(())
            }
        }
    }
}

/// Exponential correlation matrix `K_ij = α^|i-j| exp(jφ(i-j))`.
pub fn exponential_covariance(antennas: usize, alpha: f64, phi: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(antennas, antennas, |i, j| {
        if i == j {
            return Complex64::new(1.0, 0.0);
        }
        let lag = i as i32 - j as i32;
        Complex64::from_polar(alpha.powi(lag.abs()), phi * lag as f64)
    })
}

/// Covariance `K` with its cached factorizations. Immutable once built.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    covariance: ComplexMatrix,
    chol: CholeskyFactor,
    eig: HermitianEigen,
    det: f64,
}

impl ChannelModel {
    pub fn build(spec: &CorrelationSpec, antennas: usize) -> Result<Self, ChannelError> {
        if antennas == 0 {
            return Err(ChannelError::InvalidParameter(
                "antenna count must be at least 1",
            ));
        }
        spec.validate()?;
        let covariance = match spec {
            CorrelationSpec::Identity => ComplexMatrix::identity(antennas),
            CorrelationSpec::Exponential { alpha, phi } => {
                exponential_covariance(antennas, *alpha, *phi)
            }
            CorrelationSpec::Explicit { matrix } => {
                if matrix.rows() != antennas {
                    return Err(ChannelError::WrongDimension {
                        expected: antennas,
                        got: matrix.rows(),
                    });
                }
                matrix.clone()
            }
        };
        Self::from_covariance(covariance)
    }

    pub fn from_covariance(covariance: ComplexMatrix) -> Result<Self, ChannelError> {
        let chol = linalg::cholesky(&covariance)?;
        let eig = linalg::eig_hermitian(&covariance)?;
        let det = chol.determinant();
        Ok(Self {
            covariance,
            chol,
            eig,
            det,
        })
    }

    #[inline]
    pub fn antennas(&self) -> usize {
        self.covariance.rows()
    }

    pub fn covariance(&self) -> &ComplexMatrix {
        &self.covariance
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eig
    }

    /// `det(K)`.
    pub fn det(&self) -> f64 {
        self.det
    }

    /// AMRC weights `C^{1/2} K^{-1/2}` at linear SNR `rho`.
    pub fn amrc_weights(&self, rho: f64) -> Result<ComplexMatrix, LinalgError> {
        linalg::amrc_weight_matrix_from_eigen(&self.eig, rho)
    }
}

/// A seeded, replayable random stream.
///
/// Backed by ChaCha8 keyed from `seed`, with `stream_id` selecting the
/// ChaCha stream; streams with different ids never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Position in the stream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// One `CN(0, 1)` draw.
    #[inline]
    pub fn complex_normal(&mut self) -> Complex64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Mixes a sequence of words into one 64-bit stream id (SplitMix64 finalizer
/// folded over the parts).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `h = L w` with `w ~ CN(0, I)`, so `h ~ CN(0, K)`.
pub fn sample_channel(model: &ChannelModel, rng: &mut RngStream) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); model.antennas()];
    let mut scratch = out.clone();
    sample_channel_into(model, rng, &mut scratch, &mut out);
    out
}

/// Allocation-free [`sample_channel`]; `scratch` and `out` must have one slot
/// per antenna.
#[inline]
pub fn sample_channel_into(
    model: &ChannelModel,
    rng: &mut RngStream,
    scratch: &mut [Complex64],
    out: &mut [Complex64],
) {
    for w in scratch.iter_mut() {
        *w = rng.complex_normal();
    }
    model.chol.mul_vec_into(scratch, out);
}

/// `N_r` i.i.d. `CN(0, 1)` samples.
pub fn sample_noise(antennas: usize, rng: &mut RngStream) -> Vec<Complex64> {
    (0..antennas).map(|_| rng.complex_normal()).collect()
}

#[inline]
pub fn sample_noise_into(rng: &mut RngStream, out: &mut [Complex64]) {
    for n in out.iter_mut() {
        *n = rng.complex_normal();
    }
}

/// Uniform symbol index in `0..order`; `order` must be a power of two.
#[inline]
pub fn sample_symbol(order: usize, rng: &mut RngStream) -> usize {
    debug_assert!(order.is_power_of_two());
    (rng.next_u32() as usize) & (order - 1)
}
