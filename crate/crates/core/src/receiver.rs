//! The detection chain: received-signal formation, the MRC / AMRC / mirror
//! detectors, and the per-realization statistics behind the high-SNR bounds.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::analytic::qfunc;
use crate::channel::{self, ChannelModel, RngStream};
use crate::constellation::{
    self, ConstellationError, NearestPhase, PhaseQuantizer, PskConstellation,
};
use crate::linalg::{ComplexMatrix, HermitianEigen, LinalgError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReceiverError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Constellation(#[from] ConstellationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn same_len(a: usize, b: usize) -> Result<(), ReceiverError> {
    if a == b {
        Ok(())
    } else {
        Err(ReceiverError::DimensionMismatch { left: a, right: b })
    }
}

/// `Σ conj(c_i) r_i`, i.e. `c^H r`.
#[inline]
pub fn combine(c: &[Complex64], r: &[Complex64]) -> Complex64 {
    c.iter().zip(r).map(|(a, b)| a.conj() * b).sum()
}

/// `y = √ρ h s + n` and `r = Q_n(y)`.
pub fn received_signal(
    h: &[Complex64],
    s: Complex64,
    noise: &[Complex64],
    rho: f64,
    bits: u32,
) -> Result<(Vec<Complex64>, Vec<Complex64>), ReceiverError> {
    same_len(h.len(), noise.len())?;
    if !(rho > 0.0) {
        return Err(ReceiverError::InvalidParameter("rho must be positive"));
    }
    let codebook = PskConstellation::with_bits(bits)?;
    let mut y = vec![Complex64::new(0.0, 0.0); h.len()];
    let mut r = y.clone();
    received_signal_into(
        &NearestPhase,
        h,
        s,
        noise,
        rho.sqrt(),
        &codebook,
        &mut y,
        &mut r,
    );
    Ok((y, r))
}

/// Allocation-free [`received_signal`] with a pluggable front-end quantizer.
/// All slices must have the same length.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn received_signal_into<Q: PhaseQuantizer + ?Sized>(
    quantizer: &Q,
    h: &[Complex64],
    s: Complex64,
    noise: &[Complex64],
    sqrt_rho: f64,
    codebook: &PskConstellation,
    y: &mut [Complex64],
    r: &mut [Complex64],
) {
    let scaled = s * sqrt_rho;
    for i in 0..h.len() {
        y[i] = h[i] * scaled + noise[i];
        r[i] = codebook.point(quantizer.quantize_index(y[i], codebook.bits()));
    }
}

/// `Q_m(h^H r)`.
pub fn mrc_detect(
    h: &[Complex64],
    r: &[Complex64],
    modulation: &PskConstellation,
) -> Result<usize, ReceiverError> {
    same_len(h.len(), r.len())?;
    Ok(modulation.quantize(combine(h, r)).index)
}

/// `Q_m(g^H r)` with `g = W h`.
pub fn amrc_detect(
    h: &[Complex64],
    r: &[Complex64],
    weights: &ComplexMatrix,
    modulation: &PskConstellation,
) -> Result<usize, ReceiverError> {
    same_len(h.len(), r.len())?;
    let g = weights.mul_vec(h)?;
    Ok(modulation.quantize(combine(&g, r)).index)
}

/// `Q_m(s Q_n(g s)^T conj(y))`. Needs the transmitted symbol, so it is a
/// validation device only.
pub fn mirror_detect(
    s: Complex64,
    g: &[Complex64],
    y: &[Complex64],
    modulation: &PskConstellation,
    codebook: &PskConstellation,
) -> Result<usize, ReceiverError> {
    same_len(g.len(), y.len())?;
    Ok(mirror_decision(s, g, y, modulation, codebook))
}

#[inline]
pub(crate) fn mirror_decision(
    s: Complex64,
    g: &[Complex64],
    y: &[Complex64],
    modulation: &PskConstellation,
    codebook: &PskConstellation,
) -> usize {
    let acc: Complex64 = g
        .iter()
        .zip(y)
        .map(|(gi, yi)| codebook.quantize(gi * s).point * yi.conj())
        .sum();
    modulation.quantize(s * acc).index
}

/// A detector decision judged against the transmitted index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionResult {
    pub decision_index: usize,
    pub correct: bool,
}

impl DetectionResult {
    pub fn judge(decision_index: usize, s_index: usize) -> Self {
        Self {
            decision_index,
            correct: decision_index == s_index,
        }
    }
}

/// One Monte Carlo realization.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub s_index: usize,
    pub s: Complex64,
    pub h: Vec<Complex64>,
    pub noise: Vec<Complex64>,
    /// Before quantization.
    pub y: Vec<Complex64>,
    /// `Q_n(y)`.
    pub r: Vec<Complex64>,
    pub rho: f64,
}

impl TrialDraw {
    pub fn new(
        s_index: usize,
        modulation: &PskConstellation,
        h: Vec<Complex64>,
        noise: Vec<Complex64>,
        rho: f64,
        bits: u32,
    ) -> Result<Self, ReceiverError> {
        if s_index >= modulation.order() {
            return Err(ReceiverError::InvalidParameter("symbol index out of range"));
        }
        let s = modulation.point(s_index);
        let (y, r) = received_signal(&h, s, &noise, rho, bits)?;
        Ok(Self {
            s_index,
            s,
            h,
            noise,
            y,
            r,
            rho,
        })
    }

    /// Draws `s`, `h` and `n` from three separate streams.
    pub fn sample(
        model: &ChannelModel,
        modulation: &PskConstellation,
        bits: u32,
        rho: f64,
        symbols: &mut RngStream,
        fading: &mut RngStream,
        noise: &mut RngStream,
    ) -> Result<Self, ReceiverError> {
        let s_index = channel::sample_symbol(modulation.order(), symbols);
        let h = channel::sample_channel(model, fading);
        let n = channel::sample_noise(model.antennas(), noise);
        Self::new(s_index, modulation, h, n, rho, bits)
    }

    pub fn mrc(&self, modulation: &PskConstellation) -> Result<DetectionResult, ReceiverError> {
        Ok(DetectionResult::judge(
            mrc_detect(&self.h, &self.r, modulation)?,
            self.s_index,
        ))
    }

    pub fn amrc(
        &self,
        weights: &ComplexMatrix,
        modulation: &PskConstellation,
    ) -> Result<DetectionResult, ReceiverError> {
        Ok(DetectionResult::judge(
            amrc_detect(&self.h, &self.r, weights, modulation)?,
            self.s_index,
        ))
    }

    pub fn mirror(
        &self,
        weights: &ComplexMatrix,
        modulation: &PskConstellation,
        bits: u32,
    ) -> Result<DetectionResult, ReceiverError> {
        let codebook = PskConstellation::with_bits(bits)?;
        let g = weights.mul_vec(&self.h)?;
        Ok(DetectionResult::judge(
            mirror_detect(self.s, &g, &self.y, modulation, &codebook)?,
            self.s_index,
        ))
    }
}

/// Per-realization quantities behind the conditional high-SNR SEP.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStatistics {
    /// `arg(Q_n(conj h_i) h_i)`.
    pub thetas: Vec<f64>,
    /// `|h_i| sin(π/M - θ_i)`.
    pub z: Vec<f64>,
    /// `Σ Z_i`.
    pub t: f64,
    /// `(2/N_r) T²`.
    pub u: f64,
}

fn check_regime(order: usize, bits: u32) -> Result<(), ReceiverError> {
    constellation::bits_of_order(order)?;
    if order > (1usize << bits) {
        return Err(ReceiverError::InvalidParameter("M must not exceed 2^n"));
    }
    Ok(())
}

pub fn bound_statistics(
    h: &[Complex64],
    order: usize,
    bits: u32,
) -> Result<BoundStatistics, ReceiverError> {
    check_regime(order, bits)?;
    if h.is_empty() {
        return Err(ReceiverError::InvalidParameter("empty channel vector"));
    }
    let thetas = h
        .iter()
        .map(|&hi| constellation::quantization_angle(hi, bits))
        .collect::<Result<Vec<_>, _>>()?;
    let half = PI / order as f64;
    let z: Vec<f64> = h
        .iter()
        .zip(&thetas)
        .map(|(hi, t)| hi.norm() * (half - t).sin())
        .collect();
    let t: f64 = z.iter().sum();
    let u = 2.0 / h.len() as f64 * t * t;
    Ok(BoundStatistics { thetas, z, t, u })
}

/// `T = Σ Z_i` without allocating. Zero entries contribute zero.
pub fn bound_sum(h: &[Complex64], order: usize, bits: u32) -> f64 {
    let edge = Complex64::from_polar(1.0, PI / order as f64);
    h.iter()
        .map(|&hi| {
            let k = constellation::nearest_index(hi.conj(), bits);
            let p = Complex64::from_polar(1.0, constellation::point_angle(k, bits));
            (edge * (p * hi).conj()).im
        })
        .sum()
}

/// [`bound_sum`] with a prebuilt `2^n` codebook and `edge = e^{jπ/M}`.
///
/// Uses `Z_i = Im(e^{jπ/M} conj(Q_n(conj h_i) h_i))`, which needs no
/// trigonometry per entry.
#[inline]
pub fn bound_sum_with(h: &[Complex64], edge: Complex64, codebook: &PskConstellation) -> f64 {
    h.iter()
        .map(|&hi| (edge * (codebook.quantize(hi.conj()).point * hi).conj()).im)
        .sum()
}

/// `Q(√(ρU))` for one channel realization.
#[inline]
pub fn q_of_sqrt_rho_u(h: &[Complex64], order: usize, bits: u32, rho: f64) -> f64 {
    let t = bound_sum(h, order, bits);
    qfunc((2.0 * rho / h.len() as f64).sqrt() * t)
}

/// Equivalent single-antenna gain `η = Re(h̃) - |Im(h̃)| cot(π/M)` with
/// `h̃ = Σ e^{-jπ/4} Q_n(g_i e^{jπ/4}) conj(h_i)`.
pub fn eta_statistic(
    h: &[Complex64],
    g: &[Complex64],
    order: usize,
    bits: u32,
) -> Result<f64, ReceiverError> {
    same_len(h.len(), g.len())?;
    check_regime(order, bits)?;
    let rot = Complex64::from_polar(1.0, FRAC_PI_4);
    let codebook = PskConstellation::with_bits(bits)?;
    let equiv: Complex64 = h
        .iter()
        .zip(g)
        .map(|(hi, gi)| rot.conj() * codebook.quantize(gi * rot).point * hi.conj())
        .sum();
    let cot = 1.0 / (PI / order as f64).tan();
    Ok(equiv.re - equiv.im.abs() * cot)
}

/// `(Q(x), 2Q(x))` with `x = √(2ρ/N_r) η sin(π/M)`: the single-antenna
/// M-PSK bracket on the conditional SEP of the mirror statistic.
pub fn eta_bounds(eta: f64, rho: f64, antennas: usize, order: usize) -> (f64, f64) {
    let x = (2.0 * rho / antennas as f64).sqrt() * eta * (PI / order as f64).sin();
    let q = qfunc(x);
    (q, 2.0 * q)
}

/// `‖g/√ρ - h - K^{-1}h/(2ρ)‖₂`, the remainder of the first-order high-SNR
/// expansion of the AMRC combiner.
///
/// Evaluated in the eigenbasis of `K`, where each eigen-direction carries
/// `√(1+x) - 1 - x/2 = -x² / (2(√(1+x) + 1)²)` with `x = 1/(ρλ)`; the
/// right-hand form avoids cancellation at large `ρ`.
pub fn amrc_expansion_residual(
    h: &[Complex64],
    eig: &HermitianEigen,
    rho: f64,
) -> Result<f64, ReceiverError> {
    same_len(h.len(), eig.dim())?;
    if !(rho > 0.0) {
        return Err(ReceiverError::InvalidParameter("rho must be positive"));
    }
    if !(eig.min_eigenvalue() > 0.0) {
        return Err(LinalgError::NotPositiveDefinite {
            pivot: 0,
            value: eig.min_eigenvalue(),
        }
        .into());
    }
    let v = &eig.eigenvectors;
    let n = eig.dim();
    let mut norm_sqr = 0.0;
    for k in 0..n {
        let x = 1.0 / (rho * eig.eigenvalues[k]);
        let root = (1.0 + x).sqrt() + 1.0;
        let coef = -x * x / (2.0 * root * root);
        // Component along eigenvector k: v_k^H h.
        let proj: Complex64 = (0..n).map(|i| v[(i, k)].conj() * h[i]).sum();
        norm_sqr += (coef * proj.norm()).powi(2);
    }
    Ok(norm_sqr.sqrt())
}
