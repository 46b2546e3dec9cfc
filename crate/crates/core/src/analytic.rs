//! Closed-form high-SNR results.
//!
//! For `M < 2^n` the SEP decays as `(G_c ρ)^{-G_d}` with full diversity
//! `G_d = N_r` and a coding gain that depends on the correlation only through
//! `det(K)`. For `M = 2^n` the diversity halves to `N_r / 2`; the coding gain
//! in that regime is a heuristic, not a bound. Both coding gains carry the
//! free scaling factor `k ∈ [1, 2]`.

use alloc::vec::Vec;
use core::f64::consts::PI;

// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::constellation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// `Q(x) = P[N(0,1) > x]`, through `erfc`.
///
/// Underflows to zero (or a subnormal) beyond `x ≈ 37.5`.
#[inline]
pub fn qfunc(x: f64) -> f64 {
    0.5 * libm::erfc(x * core::f64::consts::FRAC_1_SQRT_2)
}

/// `Γ(twice_z / 2)` by the exact product formulas for integer and
/// half-integer arguments.
pub fn gamma_half_integer(twice_z: u32) -> Result<f64, AnalyticError> {
    if twice_z == 0 {
        return Err(AnalyticError::InvalidParameter(
            "gamma argument must be positive",
        ));
    }
    Ok(ln_gamma_half_integer(twice_z).exp())
}

/// `ln Γ(twice_z / 2)`; products are summed in the log domain so large
/// arguments cannot overflow.
fn ln_gamma_half_integer(twice_z: u32) -> f64 {
    if twice_z % 2 == 0 {
        // Γ(m) = (m - 1)!
        let m = twice_z / 2;
        (1..m).map(|i| (i as f64).ln()).sum()
    } else {
        // Γ(m + 1/2) = √π ∏_{i=1}^{m} (i - 1/2)
        let m = (twice_z - 1) / 2;
        0.5 * PI.ln() + (1..=m).map(|i| (i as f64 - 0.5).ln()).sum::<f64>()
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Which closed form produced a gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum GainRegime {
    /// `M < 2^n`: diversity and coding gain (up to `k`) are exact.
    #[cfg_attr(feature = "serde", serde(rename = "strict_M_lt_2n"))]
    StrictMLt2n,
    /// `M = 2^n`: exact diversity, heuristic coding gain.
    #[cfg_attr(feature = "serde", serde(rename = "heuristic_M_eq_2n"))]
    HeuristicMEq2n,
}

impl GainRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            GainRegime::StrictMLt2n => "strict_M_lt_2n",
            GainRegime::HeuristicMEq2n => "heuristic_M_eq_2n",
        }
    }

    pub fn classify(order: usize, bits: u32) -> Result<Self, AnalyticError> {
        check_orders(order, bits)?;
        let codebook = 1usize << bits;
        Ok(if order < codebook {
            GainRegime::StrictMLt2n
        } else {
            GainRegime::HeuristicMEq2n
        })
    }
}

fn check_orders(order: usize, bits: u32) -> Result<(), AnalyticError> {
    if constellation::bits_of_order(order).is_err() {
        return Err(AnalyticError::InvalidParameter(
            "M must be a power of two >= 2",
        ));
    }
    if !(1..=constellation::MAX_BITS).contains(&bits) {
        return Err(AnalyticError::InvalidParameter("n out of range"));
    }
    if order > (1usize << bits) {
        return Err(AnalyticError::InvalidParameter("M > 2^n is not covered"));
    }
    Ok(())
}

fn check_common(antennas: usize, det_k: f64, k: f64) -> Result<(), AnalyticError> {
    if antennas == 0 {
        return Err(AnalyticError::InvalidParameter("N_r must be at least 1"));
    }
    if !(det_k > 0.0 && det_k.is_finite()) {
        return Err(AnalyticError::InvalidParameter("det(K) must be positive"));
    }
    if !(1.0..=2.0).contains(&k) {
        return Err(AnalyticError::InvalidParameter("k must lie in [1, 2]"));
    }
    Ok(())
}

/// `N_r` for `M < 2^n`, `N_r / 2` for `M = 2^n`.
pub fn diversity_gain(order: usize, bits: u32, antennas: usize) -> Result<f64, AnalyticError> {
    if antennas == 0 {
        return Err(AnalyticError::InvalidParameter("N_r must be at least 1"));
    }
    Ok(match GainRegime::classify(order, bits)? {
        GainRegime::StrictMLt2n => antennas as f64,
        GainRegime::HeuristicMEq2n => antennas as f64 / 2.0,
    })
}

/// `cot(π/M - π/2^n) - cot(π/M + π/2^n)`, written as
/// `sin(2π/2^n) / (sin(π/M - π/2^n) sin(π/M + π/2^n))`.
pub fn cot_difference(order: usize, bits: u32) -> Result<f64, AnalyticError> {
    if GainRegime::classify(order, bits)? != GainRegime::StrictMLt2n {
        return Err(AnalyticError::InvalidParameter("requires M < 2^n"));
    }
    let a = PI / order as f64;
    let d = PI / (1u64 << bits) as f64;
    Ok((2.0 * d).sin() / ((a - d).sin() * (a + d).sin()))
}

/// Coding gain for `M < 2^n`:
///
/// `G_c = ( 2^{nN-1} k N^N Γ(N + 1/2) Δ^N / (π^{N+1/2} (2N)! det K) )^{-1/N}`
///
/// where `Δ` is [`cot_difference`] and `N = N_r`.
pub fn coding_gain_strict(
    order: usize,
    bits: u32,
    antennas: usize,
    det_k: f64,
    k: f64,
) -> Result<f64, AnalyticError> {
    check_common(antennas, det_k, k)?;
    let delta = cot_difference(order, bits)?;
    let n = antennas as f64;
    let ln_inner = (bits as f64 * n - 1.0) * 2f64.ln() + k.ln() + n * n.ln()
        - (n + 0.5) * PI.ln()
        - ln_factorial(2 * antennas as u32)
        - det_k.ln()
        + n * delta.ln()
        + ln_gamma_half_integer(2 * antennas as u32 + 1);
    Ok((-ln_inner / n).exp())
}

/// Heuristic coding gain for `M = 2^n`:
///
/// `Ĝ_c = ( k N^{N/2} 2^{-N-1} π^{-(N+1)/2} M^N Γ((N+1)/2) / (N! √det K) )^{-2/N}`
///
/// Not a bound; only an approximation of where the asymptote sits.
pub fn coding_gain_heuristic(
    order: usize,
    antennas: usize,
    det_k: f64,
    k: f64,
) -> Result<f64, AnalyticError> {
    check_common(antennas, det_k, k)?;
    if constellation::bits_of_order(order).is_err() {
        return Err(AnalyticError::InvalidParameter(
            "M must be a power of two >= 2",
        ));
    }
    let n = antennas as f64;
    let ln_inner = k.ln() + 0.5 * n * n.ln() - ln_factorial(antennas as u32) - 0.5 * det_k.ln()
        + (-n - 1.0) * 2f64.ln()
        - 0.5 * (n + 1.0) * PI.ln()
        + n * (order as f64).ln()
        + ln_gamma_half_integer(antennas as u32 + 1);
    Ok((-2.0 * ln_inner / n).exp())
}

/// Leading coefficient `b` of the MGF of `T = Σ Z_i`, `E[e^{-sT}] ~ b s^{-2N_r}`:
///
/// `b = 2^{nN_r} Δ^{N_r} / (π^{N_r} det K)`.
pub fn mgf_coefficient_b(
    order: usize,
    bits: u32,
    antennas: usize,
    det_k: f64,
) -> Result<f64, AnalyticError> {
    check_common(antennas, det_k, 1.0)?;
    let delta = cot_difference(order, bits)?;
    let n = antennas as f64;
    Ok((n * (bits as f64 * 2f64.ln() + delta.ln() - PI.ln()) - det_k.ln()).exp())
}

/// A `(G_d, G_c)` pair and what produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GainResult {
    pub diversity: f64,
    pub coding: f64,
    pub k_used: f64,
    pub regime: GainRegime,
    pub antennas: usize,
    pub order: usize,
    pub bits: u32,
    pub det_k: f64,
}

impl GainResult {
    pub fn compute(
        order: usize,
        bits: u32,
        antennas: usize,
        det_k: f64,
        k: f64,
    ) -> Result<Self, AnalyticError> {
        let regime = GainRegime::classify(order, bits)?;
        let diversity = diversity_gain(order, bits, antennas)?;
        let coding = match regime {
            GainRegime::StrictMLt2n => coding_gain_strict(order, bits, antennas, det_k, k)?,
            GainRegime::HeuristicMEq2n => coding_gain_heuristic(order, antennas, det_k, k)?,
        };
        Ok(Self {
            diversity,
            coding,
            k_used: k,
            regime,
            antennas,
            order,
            bits,
            det_k,
        })
    }

    /// `(G_c ρ)^{-G_d}`, unclamped.
    #[inline]
    pub fn sep_at(&self, rho: f64) -> f64 {
        (self.coding * rho).powf(-self.diversity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptotePoint {
    pub rho: f64,
    /// `(G_c ρ)^{-G_d}`, may exceed one at low SNR.
    pub sep: f64,
}

impl AsymptotePoint {
    /// The value to report: at most one.
    pub fn reported_sep(&self) -> f64 {
        self.sep.min(1.0)
    }

    /// True when the raw asymptote is above one and has been clamped.
    pub fn out_of_regime(&self) -> bool {
        self.sep > 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoteCurve {
    pub gain: GainResult,
    pub samples: Vec<AsymptotePoint>,
}

pub fn asymptote_curve(
    gain: &GainResult,
    rho_grid: &[f64],
) -> Result<AsymptoteCurve, AnalyticError> {
    if rho_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(AnalyticError::InvalidParameter("rho must be positive"));
    }
    Ok(AsymptoteCurve {
        gain: *gain,
        samples: rho_grid
            .iter()
            .map(|&rho| AsymptotePoint {
                rho,
                sep: gain.sep_at(rho),
            })
            .collect(),
    })
}
