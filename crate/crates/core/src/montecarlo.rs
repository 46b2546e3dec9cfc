//! Chunked, reproducible Monte Carlo SEP estimation and the statistics used
//! to check the analytic results against it.
//!
//! A point is simulated as a sequence of chunks of `chunk_size` trials. Chunk
//! `c` of grid point `i` draws from streams keyed by `(seed, i, c, purpose)`,
//! so each chunk is a pure function of the configuration. The stopping rule
//! is evaluated on the chunks in index order: the point stops after the first
//! chunk at which every enabled detector has `target_errors` errors, or when
//! `max_trials` is exhausted. Chunks may be *computed* in any order or in
//! parallel (see [`ChunkExecutor`]); the result is the same.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;
// Supplies float math when nothing in the build links `std`.
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::analytic::qfunc;
use crate::channel::{self, ChannelError, ChannelModel, CorrelationSpec, RngStream};
use crate::constellation::{self, NearestPhase, PhaseQuantizer, PskConstellation};
use crate::linalg::{ComplexMatrix, LinalgError};
use crate::receiver::{self, combine, ReceiverError};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

pub const DEFAULT_TARGET_ERRORS: u64 = 200;
pub const DEFAULT_MAX_TRIALS: u64 = 100_000_000;
pub const DEFAULT_CHUNK_SIZE: u64 = 10_000;
/// Points used by a slope fit need at least this many errors.
pub const SLOPE_MIN_ERRORS: u64 = 50;
/// Width of the default slope window, measured down from the top of the grid.
pub const DEFAULT_SLOPE_WINDOW_DB: f64 = 10.0;
pub const EQUIVALENCE_MIN_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonteCarloError {
    #[error("invalid configuration field `{field}`: {message}")]
    InvalidConfig {
        field: &'static str,
        message: &'static str,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn config_error(field: &'static str, message: &'static str) -> MonteCarloError {
    MonteCarloError::InvalidConfig { field, message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Detector {
    Mrc,
    Amrc,
    Mirror,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::Mrc, Detector::Amrc, Detector::Mirror];

    #[inline]
    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Detector::Mrc => "mrc",
            Detector::Amrc => "amrc",
            Detector::Mirror => "mirror",
        }
    }
}

/// Everything that determines a sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SimConfig {
    #[cfg_attr(feature = "serde", serde(rename = "N_r"))]
    pub antennas: usize,
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub order: usize,
    #[cfg_attr(feature = "serde", serde(rename = "n"))]
    pub bits: u32,
    pub rho_grid_db: Vec<f64>,
    pub correlation: CorrelationSpec,
    pub seed: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_max_trials"))]
    pub max_trials: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_target_errors"))]
    pub target_errors: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_chunk_size"))]
    pub chunk_size: u64,
    #[cfg_attr(feature = "serde", serde(default = "default_detectors"))]
    pub detectors: Vec<Detector>,
}

#[cfg(feature = "serde")]
fn default_max_trials() -> u64 {
    DEFAULT_MAX_TRIALS
}
#[cfg(feature = "serde")]
fn default_target_errors() -> u64 {
    DEFAULT_TARGET_ERRORS
}
#[cfg(feature = "serde")]
fn default_chunk_size() -> u64 {
    DEFAULT_CHUNK_SIZE
}
#[cfg(feature = "serde")]
fn default_detectors() -> Vec<Detector> {
    Detector::ALL.to_vec()
}

impl SimConfig {
    /// A configuration with the default budget and all three detectors.
    pub fn new(
        antennas: usize,
        order: usize,
        bits: u32,
        rho_grid_db: Vec<f64>,
        correlation: CorrelationSpec,
        seed: u64,
    ) -> Self {
        Self {
            antennas,
            order,
            bits,
            rho_grid_db,
            correlation,
            seed,
            max_trials: DEFAULT_MAX_TRIALS,
            target_errors: DEFAULT_TARGET_ERRORS,
            chunk_size: DEFAULT_CHUNK_SIZE,
            detectors: Detector::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), MonteCarloError> {
        if self.antennas == 0 {
            return Err(config_error("N_r", "must be at least 1"));
        }
        if constellation::bits_of_order(self.order).is_err() {
            return Err(config_error("M", "M must be a power of two"));
        }
        if !(1..=constellation::MAX_BITS).contains(&self.bits) {
            return Err(config_error("n", "must be between 1 and 24"));
        }
        if self.order > (1usize << self.bits) {
            return Err(config_error("M", "M must not exceed 2^n"));
        }
        if self.rho_grid_db.is_empty() {
            return Err(config_error("rho_grid_db", "must not be empty"));
        }
        if self.rho_grid_db.iter().any(|x| !x.is_finite()) {
            return Err(config_error("rho_grid_db", "values must be finite"));
        }
        if self.chunk_size == 0 {
            return Err(config_error("chunk_size", "must be at least 1"));
        }
        if self.max_trials < self.chunk_size {
            return Err(config_error("max_trials", "must be at least chunk_size"));
        }
        if self.target_errors == 0 {
            return Err(config_error("target_errors", "must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(config_error(
                "detectors",
                "at least one detector is required",
            ));
        }
        let mut seen = [false; 3];
        for d in &self.detectors {
            if core::mem::replace(&mut seen[d.slot()], true) {
                return Err(config_error("detectors", "duplicate detector"));
            }
        }
        self.correlation.validate()?;
        Ok(())
    }

    /// Linear SNRs, `10^{dB/10}`.
    pub fn rho_grid(&self) -> Vec<f64> {
        self.rho_grid_db
            .iter()
            .map(|&db| db_to_linear(db))
            .collect()
    }

    pub fn max_chunks(&self) -> u64 {
        self.max_trials / self.chunk_size
    }

    fn enabled(&self) -> [bool; 3] {
        let mut e = [false; 3];
        for d in &self.detectors {
            e[d.slot()] = true;
        }
        e
    }
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Stream purposes inside one chunk.
const PURPOSE_SYMBOL: u64 = 0;
const PURPOSE_FADING: u64 = 1;
const PURPOSE_NOISE: u64 = 2;

/// Disjoint stream families for the different kinds of runs.
pub mod family {
    pub const SWEEP: u64 = 0;
    pub const EQUIVALENCE_LHS: u64 = 1;
    pub const EQUIVALENCE_RHS: u64 = 2;
    pub const ETA_BRACKET: u64 = 3;
}

/// Integer and floating counters from one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChunkTally {
    pub trials: u64,
    pub errors: [u64; 3],
    /// Trials where the AMRC and MRC decisions differ (both must be enabled).
    pub amrc_mrc_mismatches: u64,
    pub qbound_sum: f64,
    pub qbound_sq_sum: f64,
}

impl ChunkTally {
    pub fn merge(&mut self, other: &ChunkTally) {
        self.trials += other.trials;
        for (a, b) in self.errors.iter_mut().zip(other.errors) {
            *a += b;
        }
        self.amrc_mrc_mismatches += other.amrc_mrc_mismatches;
        self.qbound_sum += other.qbound_sum;
        self.qbound_sq_sum += other.qbound_sq_sum;
    }
}

/// Everything needed to simulate chunks of one grid point. Immutable and
/// `Sync`, so chunks may run on any thread.
///
/// `Q` is the front-end quantizer producing `r`. The mirror detector and the
/// bound statistic always use the nearest-point quantizer: they are analytic
/// representations, not part of the receiver chain.
#[derive(Debug, Clone)]
pub struct PointPlan<Q: PhaseQuantizer = NearestPhase> {
    seed: u64,
    family: u64,
    rho_index: u64,
    rho_db: f64,
    rho: f64,
    chunk_size: u64,
    enabled: [bool; 3],
    order: usize,
    model: ChannelModel,
    weights: ComplexMatrix,
    modulation: PskConstellation,
    codebook: PskConstellation,
    quantizer: Q,
    fixed_symbol: Option<usize>,
}

impl PointPlan<NearestPhase> {
    pub fn new(
        config: &SimConfig,
        model: &ChannelModel,
        rho_index: usize,
    ) -> Result<Self, MonteCarloError> {
        Self::with_quantizer(config, model, rho_index, family::SWEEP, NearestPhase)
    }
}

impl<Q: PhaseQuantizer> PointPlan<Q> {
    pub fn with_quantizer(
        config: &SimConfig,
        model: &ChannelModel,
        rho_index: usize,
        family: u64,
        quantizer: Q,
    ) -> Result<Self, MonteCarloError> {
        config.validate()?;
        if model.antennas() != config.antennas {
            return Err(config_error("N_r", "does not match the channel model"));
        }
        let rho_db = *config
            .rho_grid_db
            .get(rho_index)
            .ok_or(config_error("rho_grid_db", "index out of range"))?;
        let rho = db_to_linear(rho_db);
        Ok(Self {
            seed: config.seed,
            family,
            rho_index: rho_index as u64,
            rho_db,
            rho,
            chunk_size: config.chunk_size,
            enabled: config.enabled(),
            order: config.order,
            weights: model.amrc_weights(rho)?,
            model: model.clone(),
            modulation: PskConstellation::new(config.order).map_err(ReceiverError::from)?,
            codebook: PskConstellation::with_bits(config.bits).map_err(ReceiverError::from)?,
            quantizer,
            fixed_symbol: None,
        })
    }

    /// Transmits constellation index `index` on every trial instead of a
    /// uniform draw. The symbol stream is still consumed, so fading and noise
    /// are unchanged.
    pub fn with_fixed_symbol(self, index: usize) -> Result<Self, MonteCarloError> {
        if index >= self.order {
            return Err(config_error("symbol", "index out of range"));
        }
        Ok(Self {
            fixed_symbol: Some(index),
            ..self
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn rho_db(&self) -> f64 {
        self.rho_db
    }

    pub fn chunk_size(&self) -> u64 {
        self.chunk_size
    }

    pub fn enabled(&self, d: Detector) -> bool {
        self.enabled[d.slot()]
    }

    /// The three streams of chunk `chunk`.
    pub fn streams(&self, chunk: u64) -> [RngStream; 3] {
        let id = |purpose| channel::stream_id(&[self.family, self.rho_index, chunk, purpose]);
        [
            RngStream::new(self.seed, id(PURPOSE_SYMBOL)),
            RngStream::new(self.seed, id(PURPOSE_FADING)),
            RngStream::new(self.seed, id(PURPOSE_NOISE)),
        ]
    }

    /// Simulates chunk `chunk`; a pure function of the plan and the index.
    pub fn run_chunk(&self, chunk: u64) -> ChunkTally {
        let n = self.model.antennas();
        let [mut sym_rng, mut fade_rng, mut noise_rng] = self.streams(chunk);
        let zero = Complex64::new(0.0, 0.0);
        let mut scratch = vec![zero; n];
        let mut h = vec![zero; n];
        let mut noise = vec![zero; n];
        let mut y = vec![zero; n];
        let mut r = vec![zero; n];
        let mut g = vec![zero; n];
        let sqrt_rho = self.rho.sqrt();
        let bound_scale = (2.0 * self.rho / n as f64).sqrt();
        let edge = Complex64::from_polar(1.0, PI / self.order as f64);
        let need_g = self.enabled[Detector::Amrc.slot()] || self.enabled[Detector::Mirror.slot()];

        let mut tally = ChunkTally {
            trials: self.chunk_size,
            ..ChunkTally::default()
        };
        for _ in 0..self.chunk_size {
            let drawn = channel::sample_symbol(self.order, &mut sym_rng);
            let s_index = self.fixed_symbol.unwrap_or(drawn);
            let s = self.modulation.point(s_index);
            channel::sample_channel_into(&self.model, &mut fade_rng, &mut scratch, &mut h);
            channel::sample_noise_into(&mut noise_rng, &mut noise);
            receiver::received_signal_into(
                &self.quantizer,
                &h,
                s,
                &noise,
                sqrt_rho,
                &self.codebook,
                &mut y,
                &mut r,
            );
            if need_g {
                // Shapes are fixed by construction.
                let _ = self.weights.mul_vec_into(&h, &mut g);
            }

            let mut mrc = usize::MAX;
            let mut amrc = usize::MAX;
            if self.enabled[Detector::Mrc.slot()] {
                mrc = self.modulation.quantize(combine(&h, &r)).index;
                tally.errors[Detector::Mrc.slot()] += (mrc != s_index) as u64;
            }
            if self.enabled[Detector::Amrc.slot()] {
                amrc = self.modulation.quantize(combine(&g, &r)).index;
                tally.errors[Detector::Amrc.slot()] += (amrc != s_index) as u64;
            }
            if self.enabled[Detector::Mirror.slot()] {
                let d = receiver::mirror_decision(s, &g, &y, &self.modulation, &self.codebook);
                tally.errors[Detector::Mirror.slot()] += (d != s_index) as u64;
            }
            tally.amrc_mrc_mismatches += (mrc != amrc) as u64;

            let q = qfunc(bound_scale * receiver::bound_sum_with(&h, edge, &self.codebook));
            tally.qbound_sum += q;
            tally.qbound_sq_sum += q * q;
        }
        if !(self.enabled[Detector::Mrc.slot()] && self.enabled[Detector::Amrc.slot()]) {
            tally.amrc_mrc_mismatches = 0;
        }
        tally
    }
}

/// Serial stopping rule over chunk tallies fed in index order.
#[derive(Debug, Clone)]
pub struct PointAccumulator {
    total: ChunkTally,
    chunks: u64,
    max_chunks: u64,
    target_errors: u64,
    enabled: [bool; 3],
}

impl PointAccumulator {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            total: ChunkTally::default(),
            chunks: 0,
            max_chunks: config.max_chunks(),
            target_errors: config.target_errors,
            enabled: config.enabled(),
        }
    }

    pub fn target_reached(&self) -> bool {
        (0..3).all(|i| !self.enabled[i] || self.total.errors[i] >= self.target_errors)
    }

    pub fn finished(&self) -> bool {
        self.target_reached() || self.chunks >= self.max_chunks
    }

    /// Index of the next chunk the rule wants.
    pub fn next_chunk(&self) -> u64 {
        self.chunks
    }

    /// Absorbs the next chunk. Returns `true` once the point is finished;
    /// further tallies are ignored.
    pub fn push(&mut self, tally: &ChunkTally) -> bool {
        if self.finished() {
            return true;
        }
        self.total.merge(tally);
        self.chunks += 1;
        self.finished()
    }

    pub fn total(&self) -> &ChunkTally {
        &self.total
    }

    pub fn chunks(&self) -> u64 {
        self.chunks
    }
}

/// Strategy for computing a batch of chunks. Implementations may evaluate
/// chunks concurrently but must return tallies in index order.
pub trait ChunkExecutor {
    /// How many chunks to request at once.
    fn batch_len(&self) -> u64;

    fn run_batch<Q: PhaseQuantizer>(
        &self,
        plan: &PointPlan<Q>,
        chunks: Range<u64>,
    ) -> Vec<ChunkTally>;
}

/// One chunk at a time on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl ChunkExecutor for SerialExecutor {
    fn batch_len(&self) -> u64 {
        1
    }

    fn run_batch<Q: PhaseQuantizer>(
        &self,
        plan: &PointPlan<Q>,
        chunks: Range<u64>,
    ) -> Vec<ChunkTally> {
        chunks.map(|c| plan.run_chunk(c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectorStats {
    pub detector: Detector,
    pub errors: u64,
    pub trials: u64,
    pub sep: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DetectorStats {
    pub fn new(detector: Detector, errors: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson(errors, trials);
        Self {
            detector,
            errors,
            trials,
            sep: errors as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }
}

/// Result for one SNR value.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimPoint {
    pub rho_db: f64,
    pub trials: u64,
    pub chunks: u64,
    /// In the order the configuration lists detectors.
    pub detectors: Vec<DetectorStats>,
    /// Monte Carlo mean of `Q(√(ρU))` over the channel draws.
    pub mean_qbound: f64,
    /// Standard error of `mean_qbound`.
    pub qbound_std_err: f64,
    /// Trials where AMRC and MRC disagreed; `None` unless both ran.
    pub amrc_mrc_mismatches: Option<u64>,
    pub target_reached: bool,
}

impl SimPoint {
    fn from_accumulator(config: &SimConfig, rho_db: f64, acc: &PointAccumulator) -> Self {
        let total = acc.total();
        let trials = total.trials;
        let detectors = config
            .detectors
            .iter()
            .map(|&d| DetectorStats::new(d, total.errors[d.slot()], trials))
            .collect();
        let n = trials as f64;
        let mean = total.qbound_sum / n;
        let var = if trials > 1 {
            ((total.qbound_sq_sum - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let enabled = config.enabled();
        Self {
            rho_db,
            trials,
            chunks: acc.chunks(),
            detectors,
            mean_qbound: mean,
            qbound_std_err: (var / n).sqrt(),
            amrc_mrc_mismatches: (enabled[Detector::Mrc.slot()] && enabled[Detector::Amrc.slot()])
                .then_some(total.amrc_mrc_mismatches),
            target_reached: acc.target_reached(),
        }
    }

    pub fn rho(&self) -> f64 {
        db_to_linear(self.rho_db)
    }

    pub fn stats(&self, d: Detector) -> Option<&DetectorStats> {
        self.detectors.iter().find(|s| s.detector == d)
    }
}

/// Drives a plan to completion through an executor.
pub fn run_plan<Q: PhaseQuantizer, E: ChunkExecutor>(
    config: &SimConfig,
    plan: &PointPlan<Q>,
    executor: &E,
) -> SimPoint {
    let mut acc = PointAccumulator::new(config);
    let max_chunks = config.max_chunks();
    while !acc.finished() {
        let start = acc.next_chunk();
        let end = (start + executor.batch_len().max(1)).min(max_chunks);
        for tally in executor.run_batch(plan, start..end) {
            if acc.push(&tally) {
                break;
            }
        }
    }
    SimPoint::from_accumulator(config, plan.rho_db(), &acc)
}

/// Simulates grid point `rho_index`.
pub fn run_point_at<E: ChunkExecutor>(
    config: &SimConfig,
    model: &ChannelModel,
    rho_index: usize,
    executor: &E,
) -> Result<SimPoint, MonteCarloError> {
    let plan = PointPlan::new(config, model, rho_index)?;
    Ok(run_plan(config, &plan, executor))
}

/// Simulates the grid point whose dB value equals `rho_db`, serially.
pub fn run_point(config: &SimConfig, rho_db: f64) -> Result<SimPoint, MonteCarloError> {
    let index = config
        .rho_grid_db
        .iter()
        .position(|&x| x == rho_db)
        .ok_or(config_error("rho_grid_db", "SNR value is not on the grid"))?;
    let model = ChannelModel::build(&config.correlation, config.antennas)?;
    run_point_at(config, &model, index, &SerialExecutor)
}

/// One point per grid value, in grid order.
pub fn run_sweep_with<E: ChunkExecutor>(
    config: &SimConfig,
    executor: &E,
) -> Result<Vec<SimPoint>, MonteCarloError> {
    config.validate()?;
    let model = ChannelModel::build(&config.correlation, config.antennas)?;
    (0..config.rho_grid_db.len())
        .map(|i| run_point_at(config, &model, i, executor))
        .collect()
}

/// [`run_sweep_with`] with a substitute front-end quantizer.
pub fn run_sweep_using<Q: PhaseQuantizer + Clone, E: ChunkExecutor>(
    config: &SimConfig,
    quantizer: Q,
    executor: &E,
) -> Result<Vec<SimPoint>, MonteCarloError> {
    config.validate()?;
    let model = ChannelModel::build(&config.correlation, config.antennas)?;
    (0..config.rho_grid_db.len())
        .map(|i| {
            let plan =
                PointPlan::with_quantizer(config, &model, i, family::SWEEP, quantizer.clone())?;
            Ok(run_plan(config, &plan, executor))
        })
        .collect()
}

pub fn run_sweep(config: &SimConfig) -> Result<Vec<SimPoint>, MonteCarloError> {
    run_sweep_with(config, &SerialExecutor)
}

/// 95% Wilson score interval for `errors` successes in `trials`.
pub fn wilson(errors: u64, trials: u64) -> (f64, f64) {
    wilson_z(errors, trials, Z_95)
}

pub fn wilson_z(errors: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if errors == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if errors == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (low, high)
}

/// Pooled two-proportion z statistic `(p1 - p2) / se`.
pub fn two_proportion_z(e1: u64, n1: u64, e2: u64, n2: u64) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let p1 = e1 as f64 / a;
    let p2 = e2 as f64 / b;
    let p = (e1 + e2) as f64 / (a + b);
    let se = (p * (1.0 - p) * (1.0 / a + 1.0 / b)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p1 - p2) / se
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SlopeEstimate {
    /// `-d log10(sep) / d log10(ρ)`, the diversity estimate.
    pub slope: f64,
    pub intercept: f64,
    pub rho_window_db: (f64, f64),
    pub points_used: usize,
}

/// Least squares of `log10 sep` on `log10 ρ` for `(rho_db, sep)` pairs.
pub fn fit_slope(samples: &[(f64, f64)]) -> Result<SlopeEstimate, MonteCarloError> {
    if samples.len() < 3 {
        return Err(MonteCarloError::InsufficientData(
            "a slope fit needs at least 3 points",
        ));
    }
    if samples.iter().any(|&(_, p)| !(p > 0.0)) {
        return Err(MonteCarloError::InsufficientData(
            "a slope fit needs positive SEP values",
        ));
    }
    let n = samples.len() as f64;
    let xs = samples.iter().map(|&(db, _)| db / 10.0);
    let ys = samples.iter().map(|&(_, p)| p.log10());
    let mx = xs.clone().sum::<f64>() / n;
    let my = ys.clone().sum::<f64>() / n;
    let (sxy, sxx) = xs.zip(ys).fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        (sxy + (x - mx) * (y - my), sxx + (x - mx) * (x - mx))
    });
    if sxx == 0.0 {
        return Err(MonteCarloError::InsufficientData(
            "a slope fit needs distinct SNR values",
        ));
    }
    let beta = sxy / sxx;
    let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let hi = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SlopeEstimate {
        slope: -beta,
        intercept: my - beta * mx,
        rho_window_db: (lo, hi),
        points_used: samples.len(),
    })
}

/// Diversity estimate from simulated points of one detector. Points outside
/// `window_db` or with fewer than [`SLOPE_MIN_ERRORS`] errors are skipped;
/// the default window is the top [`DEFAULT_SLOPE_WINDOW_DB`] of the grid.
pub fn estimate_slope(
    points: &[SimPoint],
    detector: Detector,
    window_db: Option<(f64, f64)>,
) -> Result<SlopeEstimate, MonteCarloError> {
    let top = points
        .iter()
        .map(|p| p.rho_db)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window_db.unwrap_or((top - DEFAULT_SLOPE_WINDOW_DB, top));
    let samples: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.rho_db >= lo && p.rho_db <= hi)
        .filter_map(|p| p.stats(detector).map(|s| (p.rho_db, s)))
        .filter(|(_, s)| s.errors >= SLOPE_MIN_ERRORS)
        .map(|(db, s)| (db, s.sep))
        .collect();
    fit_slope(&samples)
}

/// How the right-hand side of the equivalence test forms its decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MirrorVariant {
    #[default]
    Faithful,
    /// Uses `y` where `conj(y)` belongs; exists to demonstrate test power.
    ConjugateDropped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquivalenceResult {
    pub z: f64,
    pub lhs: DetectorStats,
    pub rhs: DetectorStats,
}

/// Two-proportion test between AMRC (left) and the mirror detector (right)
/// on independent trial sets at `rho_db`. AMRC draws symbols uniformly; the
/// mirror side always sends index 0, so the test also exercises the
/// rotational symmetry of the SEP.
pub fn equivalence_test(
    config: &SimConfig,
    rho_db: f64,
    trials: u64,
) -> Result<EquivalenceResult, MonteCarloError> {
    equivalence_test_with(
        config,
        rho_db,
        trials,
        NearestPhase,
        MirrorVariant::Faithful,
    )
}

/// [`equivalence_test`] with a pluggable front-end quantizer and mirror.
pub fn equivalence_test_with<Q: PhaseQuantizer + Clone>(
    config: &SimConfig,
    rho_db: f64,
    trials: u64,
    quantizer: Q,
    variant: MirrorVariant,
) -> Result<EquivalenceResult, MonteCarloError> {
    if trials < EQUIVALENCE_MIN_TRIALS {
        return Err(MonteCarloError::InsufficientData(
            "the equivalence test needs at least 1e5 trials",
        ));
    }
    let mut cfg = config.clone();
    cfg.rho_grid_db = vec![rho_db];
    cfg.chunk_size = cfg.chunk_size.min(trials);
    cfg.max_trials = trials;
    cfg.target_errors = u64::MAX;
    cfg.validate()?;
    let model = ChannelModel::build(&cfg.correlation, cfg.antennas)?;

    let mut lhs_cfg = cfg.clone();
    lhs_cfg.detectors = vec![Detector::Amrc];
    let lhs_plan =
        PointPlan::with_quantizer(&lhs_cfg, &model, 0, family::EQUIVALENCE_LHS, quantizer)?;
    let lhs = run_plan(&lhs_cfg, &lhs_plan, &SerialExecutor);
    let lhs = *lhs.stats(Detector::Amrc).expect("enabled");

    let rhs = match variant {
        MirrorVariant::Faithful => {
            let mut rhs_cfg = cfg.clone();
            rhs_cfg.detectors = vec![Detector::Mirror];
            let plan = PointPlan::new(&rhs_cfg, &model, 0)?;
            let plan = PointPlan {
                family: family::EQUIVALENCE_RHS,
                ..plan
            }
            .with_fixed_symbol(0)?;
            *run_plan(&rhs_cfg, &plan, &SerialExecutor)
                .stats(Detector::Mirror)
                .expect("enabled")
        }
        MirrorVariant::ConjugateDropped => conjugate_dropped_mirror(&cfg, &model)?,
    };
    Ok(EquivalenceResult {
        z: two_proportion_z(lhs.errors, lhs.trials, rhs.errors, rhs.trials),
        lhs,
        rhs,
    })
}

fn conjugate_dropped_mirror(
    cfg: &SimConfig,
    model: &ChannelModel,
) -> Result<DetectorStats, MonteCarloError> {
    let plan = PointPlan::with_quantizer(cfg, model, 0, family::EQUIVALENCE_RHS, NearestPhase)?;
    let n = model.antennas();
    let zero = Complex64::new(0.0, 0.0);
    let (mut scratch, mut h, mut noise, mut g) =
        (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let sqrt_rho = plan.rho.sqrt();
    let mut errors = 0u64;
    for c in 0..cfg.max_chunks() {
        let [mut sym, mut fade, mut nrng] = plan.streams(c);
        for _ in 0..cfg.chunk_size {
            let s_index = channel::sample_symbol(cfg.order, &mut sym);
            let s = plan.modulation.point(s_index);
            channel::sample_channel_into(model, &mut fade, &mut scratch, &mut h);
            channel::sample_noise_into(&mut nrng, &mut noise);
            plan.weights.mul_vec_into(&h, &mut g)?;
            let acc: Complex64 = (0..n)
                .map(|i| plan.codebook.quantize(g[i] * s).point * (h[i] * s * sqrt_rho + noise[i]))
                .sum();
            errors += (plan.modulation.quantize(s * acc).index != s_index) as u64;
        }
    }
    Ok(DetectorStats::new(
        Detector::Mirror,
        errors,
        cfg.max_chunks() * cfg.chunk_size,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SandwichEntry {
    pub rho_db: f64,
    pub sep: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_qbound: f64,
    /// `sep / mean_qbound`.
    pub k_ratio: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SandwichReport {
    pub window_db: (f64, f64),
    pub entries: Vec<SandwichEntry>,
    pub pass: bool,
}

/// CI-adjusted membership of the AMRC SEP in `[E Q(√(ρU)), 2 E Q(√(ρU))]`
/// for every point inside `window_db`. Both the SEP interval and the 95%
/// interval of the bound average are used as slack.
pub fn sandwich_check(points: &[SimPoint], window_db: (f64, f64)) -> SandwichReport {
    let entries: Vec<SandwichEntry> = points
        .iter()
        .filter(|p| p.rho_db >= window_db.0 && p.rho_db <= window_db.1)
        .filter_map(|p| p.stats(Detector::Amrc).map(|s| (p, s)))
        .map(|(p, s)| {
            let q_lo = p.mean_qbound - Z_95 * p.qbound_std_err;
            let q_hi = p.mean_qbound + Z_95 * p.qbound_std_err;
            SandwichEntry {
                rho_db: p.rho_db,
                sep: s.sep,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                mean_qbound: p.mean_qbound,
                k_ratio: s.sep / p.mean_qbound,
                lower_ok: s.ci_high >= q_lo,
                upper_ok: s.ci_low <= 2.0 * q_hi,
            }
        })
        .collect();
    let pass = !entries.is_empty() && entries.iter().all(|e| e.lower_ok && e.upper_ok);
    SandwichReport {
        window_db,
        entries,
        pass,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EtaBracketEntry {
    pub eta: f64,
    pub lower: f64,
    pub upper: f64,
    pub errors: u64,
    pub trials: u64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ok: bool,
}

/// Conditional check of the mirror detector against its single-antenna
/// bracket `[Q(x), 2Q(x)]`, `x = √(2ρ/N_r) η sin(π/M)`, for `channels`
/// fixed fading draws.
///
/// Each draw is rescaled so that `x = target_x`; positive scaling of `h`
/// leaves the quantized combiner unchanged and scales `η` linearly. Draws
/// with `η ≤ 0` are replaced. The transmitted symbol is always index 0.
pub fn eta_bracket_check(
    config: &SimConfig,
    rho_db: f64,
    channels: usize,
    trials_per_channel: u64,
    target_x: f64,
) -> Result<Vec<EtaBracketEntry>, MonteCarloError> {
    config.validate()?;
    if !(target_x > 0.0) {
        return Err(config_error("target_x", "must be positive"));
    }
    let model = ChannelModel::build(&config.correlation, config.antennas)?;
    let rho = db_to_linear(rho_db);
    let weights = model.amrc_weights(rho)?;
    let modulation = PskConstellation::new(config.order).map_err(ReceiverError::from)?;
    let codebook = PskConstellation::with_bits(config.bits).map_err(ReceiverError::from)?;
    let n = config.antennas;
    let x_per_eta = (2.0 * rho / n as f64).sqrt() * (PI / config.order as f64).sin();

    let mut fade = RngStream::new(config.seed, channel::stream_id(&[family::ETA_BRACKET, 0]));
    let mut out = Vec::with_capacity(channels);
    let mut attempts = 0usize;
    while out.len() < channels {
        attempts += 1;
        if attempts > 1000 * channels.max(1) {
            return Err(MonteCarloError::InsufficientData(
                "no channel draw with a positive margin",
            ));
        }
        let h0 = channel::sample_channel(&model, &mut fade);
        let g = weights.mul_vec(&h0)?;
        let eta0 = receiver::eta_statistic(&h0, &g, config.order, config.bits)?;
        if !(eta0 > 0.0) {
            continue;
        }
        let scale = target_x / (x_per_eta * eta0);
        let h: Vec<Complex64> = h0.iter().map(|v| v * scale).collect();
        let eta = eta0 * scale;
        let (lower, upper) = receiver::eta_bounds(eta, rho, n, config.order);

        let index = out.len() as u64;
        let mut sym = RngStream::new(
            config.seed,
            channel::stream_id(&[family::ETA_BRACKET, 1, index]),
        );
        let mut nrng = RngStream::new(
            config.seed,
            channel::stream_id(&[family::ETA_BRACKET, 2, index]),
        );
        let zero = Complex64::new(0.0, 0.0);
        let (mut noise, mut y) = (vec![zero; n], vec![zero; n]);
        let sqrt_rho = rho.sqrt();
        let mut errors = 0u64;
        for _ in 0..trials_per_channel {
            channel::sample_symbol(config.order, &mut sym);
            let s_index = 0;
            let s = modulation.point(s_index);
            channel::sample_noise_into(&mut nrng, &mut noise);
            for i in 0..n {
                y[i] = h[i] * s * sqrt_rho + noise[i];
            }
            errors +=
                (receiver::mirror_decision(s, &g, &y, &modulation, &codebook) != s_index) as u64;
        }
        let (ci_low, ci_high) = wilson(errors, trials_per_channel);
        out.push(EtaBracketEntry {
            eta,
            lower,
            upper,
            errors,
            trials: trials_per_channel,
            ci_low,
            ci_high,
            ok: ci_high >= lower && ci_low <= upper,
        });
    }
    Ok(out)
}

/// A random Hermitian positive-definite covariance with unit mean diagonal:
/// `B B^H + εI`, rescaled, with `B` an i.i.d. `CN(0, 1)` square matrix.
pub fn random_covariance(antennas: usize, rng: &mut RngStream) -> ComplexMatrix {
    let b = ComplexMatrix::from_fn(antennas, antennas, |_, _| rng.complex_normal());
    let mut k = b.matmul(&b.adjoint()).expect("square");
    let n = antennas as f64;
    let trace: f64 = (0..antennas).map(|i| k[(i, i)].re).sum();
    let ridge = 0.05 * trace / n;
    for i in 0..antennas {
        k[(i, i)] += ridge;
    }
    // Exact Hermitian symmetry despite rounding in the product.
    let k = ComplexMatrix::from_fn(antennas, antennas, |i, j| {
        if i == j {
            Complex64::new(k[(i, i)].re, 0.0)
        } else if i < j {
            k[(i, j)]
        } else {
            k[(j, i)].conj()
        }
    });
    k.scale(n / (trace + n * ridge))
}

/// Log-log slope of the AMRC expansion residual against `ρ` over
/// `points` log-spaced values in `[rho_low, rho_high]`.
pub fn residual_slope(
    h: &[Complex64],
    model: &ChannelModel,
    rho_low: f64,
    rho_high: f64,
    points: usize,
) -> Result<f64, MonteCarloError> {
    if points < 3 || !(rho_low > 0.0 && rho_high > rho_low) {
        return Err(MonteCarloError::InsufficientData(
            "residual slope needs 3 points on a valid range",
        ));
    }
    let (a, b) = (rho_low.log10(), rho_high.log10());
    let mut samples = Vec::with_capacity(points);
    for i in 0..points {
        let rho = 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64);
        let res = receiver::amrc_expansion_residual(h, model.eigen(), rho)?;
        samples.push((10.0 * rho.log10(), res));
    }
    // fit_slope reports the negated slope.
    Ok(-fit_slope(&samples)?.slope)
}
