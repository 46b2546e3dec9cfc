//! Offset M-PSK constellations and the memoryless n-bit phase quantizer.
//!
//! Point `i` of an order-`L` constellation sits at angle `π/4 + 2πi/L`. The
//! same point set is used for transmit symbols (`L = M`), for the per-antenna
//! quantizer codebook (`L = 2^n`) and for the final decision device.
//!
//! Quantization is done by angle binning rather than an explicit argmin over
//! the codebook. On an exact bin boundary (and for `x = 0`) the smaller
//! constellation index wins.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

/// Largest supported number of quantizer bits.
pub const MAX_BITS: u32 = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstellationError {
    #[error("constellation order {0} must be a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("bit count {0} must be between 1 and {MAX_BITS}")]
    BadBits(u32),
    #[error("the argument of zero is undefined")]
    ZeroInput,
}

/// `log2(order)` if `order` is a power of two `>= 2`.
pub fn bits_of_order(order: usize) -> Result<u32, ConstellationError> {
    if order >= 2 && order.is_power_of_two() && order.trailing_zeros() <= MAX_BITS {
        Ok(order.trailing_zeros())
    } else {
        Err(ConstellationError::NotPowerOfTwo(order))
    }
}

fn check_bits(bits: u32) -> Result<(), ConstellationError> {
    if (1..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(ConstellationError::BadBits(bits))
    }
}

/// Angle of point `index` in an order-`2^bits` constellation.
#[inline]
pub fn point_angle(index: usize, bits: u32) -> f64 {
    FRAC_PI_4 + TAU * index as f64 / (1u64 << bits) as f64
}

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_angle(mut a: f64) -> f64 {
    while a > PI {
        a -= TAU;
    }
    while a <= -PI {
        a += TAU;
    }
    a
}

/// The offset PSK point set `{exp(j(π/4 + 2πi/L)) : i = 0..L-1}`.
#[derive(Debug, Clone)]
pub struct PskConstellation {
    bits: u32,
    points: Vec<Complex64>,
}

impl PskConstellation {
    /// Constellation of the given order (a power of two `>= 2`).
    pub fn new(order: usize) -> Result<Self, ConstellationError> {
        Ok(Self::from_bits_unchecked(bits_of_order(order)?))
    }

    /// Constellation with `2^bits` points.
    pub fn with_bits(bits: u32) -> Result<Self, ConstellationError> {
        check_bits(bits)?;
        Ok(Self::from_bits_unchecked(bits))
    }

    fn from_bits_unchecked(bits: u32) -> Self {
        let order = 1usize << bits;
        let points = (0..order)
            .map(|i| Complex64::from_polar(1.0, point_angle(i, bits)))
            .collect();
        Self { bits, points }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    #[inline]
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn angle(&self, index: usize) -> f64 {
        point_angle(index, self.bits)
    }

    /// Nearest constellation point to `x`.
    #[inline]
    pub fn quantize(&self, x: Complex64) -> QuantizerOutput {
        let index = nearest_index(x, self.bits);
        QuantizerOutput {
            index,
            point: self.points[index],
        }
    }
}

/// Result of quantizing one complex sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerOutput {
    pub index: usize,
    pub point: Complex64,
}

/// Index of the `2^bits`-PSK point nearest to `x` (smallest index on ties).
///
/// The angle comes from a polynomial approximation accurate to well below
/// [`ANGLE_GUARD`]; inputs within the guard of a bin boundary are redone with
/// the exact `atan2`, so the result always equals the exact-angle decision.
#[inline]
pub fn nearest_index(x: Complex64, bits: u32) -> usize {
    if x.re == 0.0 && x.im == 0.0 {
        return 0;
    }
    let order = 1u64 << bits;
    let bins_per_radian = order as f64 / TAU;
    let u = (approx_atan2(x.im, x.re) - FRAC_PI_4) * bins_per_radian + order as f64;
    let frac = u - (u as u64) as f64;
    if (frac - 0.5).abs() > ANGLE_GUARD * bins_per_radian {
        index_from_coordinate(u, order)
    } else {
        index_of_angle(x.im.atan2(x.re), bits)
    }
}

/// Index of the `2^bits`-PSK point nearest to angle `a ∈ [-π, π]`.
#[inline]
pub(crate) fn index_of_angle(a: f64, bits: u32) -> usize {
    let order = 1u64 << bits;
    index_from_coordinate(bin_coordinate(a, TAU / order as f64, order), order)
}

/// Angle in units of the bin width, shifted so it is positive; point `k`
/// sits at integer `k (mod order)`. Division by the exact bin width keeps
/// boundary angles exactly on half-integers.
#[inline]
fn bin_coordinate(a: f64, width: f64, order: u64) -> f64 {
    (a - FRAC_PI_4) / width + order as f64
}

#[inline]
fn index_from_coordinate(u: f64, order: u64) -> usize {
    let lower = u as u64;
    let frac = u - lower as f64;
    let mask = order - 1;
    let k = if frac < 0.5 {
        lower & mask
    } else if frac > 0.5 {
        (lower + 1) & mask
    } else {
        (lower & mask).min((lower + 1) & mask)
    };
    k as usize
}

/// Half-width, in radians, of the band around bin boundaries where the
/// approximate angle is not trusted.
pub const ANGLE_GUARD: f64 = 1e-9;

const TAN_PI_8: f64 = 0.414_213_562_373_095_05;

/// `atan2(y, x)` with absolute error below `1e-11` (not both zero).
///
/// Written with arithmetic selects so random inputs cost no mispredictions.
#[inline]
pub(crate) fn approx_atan2(y: f64, x: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    let t = ax.min(ay) / ax.max(ay);
    let reduce = (t > TAN_PI_8) as u8 as f64;
    let t = t + reduce * ((t - 1.0) / (t + 1.0) - t);
    // Odd Taylor series of atan on |t| <= tan(π/8), through t^25.
    let t2 = t * t;
    let t4 = t2 * t2;
    let even = 1.0
        + t4 * (1.0 / 5.0
            + t4 * (1.0 / 9.0
                + t4 * (1.0 / 13.0 + t4 * (1.0 / 17.0 + t4 * (1.0 / 21.0 + t4 / 25.0)))));
    let odd = 1.0 / 3.0
        + t4 * (1.0 / 7.0 + t4 * (1.0 / 11.0 + t4 * (1.0 / 15.0 + t4 * (1.0 / 19.0 + t4 / 23.0))));
    let r = t * (even - t2 * odd) + reduce * FRAC_PI_4;
    let swap = (ay > ax) as u8 as f64;
    let r = r + swap * (FRAC_PI_2 - 2.0 * r);
    let left = (x < 0.0) as u8 as f64;
    let r = r + left * (PI - 2.0 * r);
    r.copysign(y)
}

/// `Q_n(x)`: nearest point of the `2^n`-PSK codebook.
pub fn quantize(x: Complex64, bits: u32) -> Result<QuantizerOutput, ConstellationError> {
    check_bits(bits)?;
    let index = nearest_index(x, bits);
    Ok(QuantizerOutput {
        index,
        point: Complex64::from_polar(1.0, point_angle(index, bits)),
    })
}

/// Element-wise `Q_n`.
pub fn quantize_vector(
    y: &[Complex64],
    bits: u32,
) -> Result<Vec<QuantizerOutput>, ConstellationError> {
    check_bits(bits)?;
    y.iter().map(|&x| quantize(x, bits)).collect()
}

/// `arg(Q_n(conj(h)) h)`, which lies in `(-π/2^n, π/2^n]`.
pub fn quantization_angle(h: Complex64, bits: u32) -> Result<f64, ConstellationError> {
    check_bits(bits)?;
    if h.re == 0.0 && h.im == 0.0 {
        return Err(ConstellationError::ZeroInput);
    }
    Ok(quantization_angle_unchecked(h, bits))
}

#[inline]
pub(crate) fn quantization_angle_unchecked(h: Complex64, bits: u32) -> f64 {
    let k = nearest_index(h.conj(), bits);
    wrap_angle(h.im.atan2(h.re) + point_angle(k, bits))
}

/// A per-antenna phase quantizer. [`NearestPhase`] is the real one; the
/// trait exists so validation code can run the receiver chain against a
/// deliberately broken front end.
pub trait PhaseQuantizer: Sync {
    fn quantize_index(&self, x: Complex64, bits: u32) -> usize;
}

/// The nearest-point quantizer `Q_n`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestPhase;

impl PhaseQuantizer for NearestPhase {
    #[inline]
    fn quantize_index(&self, x: Complex64, bits: u32) -> usize {
        nearest_index(x, bits)
    }
}
