//! The statistical validation battery behind `qsep validate`.
//!
//! Every check reports a statistic, the threshold it is held to and a
//! verdict. Thresholds are sized so a correct implementation fails a check
//! rarely: `|z| < 4` for two-sample comparisons (false alarm about 6e-5),
//! 95% Wilson intervals for the bound sandwich as in the acceptance
//! criteria, and `z = 4` Wilson intervals for the per-channel bracket.

use num_complex::Complex64;
use qsep_core::channel::{self, RngStream};
use qsep_core::constellation::{nearest_index, NearestPhase};
use qsep_core::montecarlo::{
    self, family, wilson_z, ChunkExecutor, Detector, MirrorVariant, SerialExecutor,
    DEFAULT_SLOPE_WINDOW_DB,
};
use qsep_core::{ChannelModel, CorrelationSpec, MonteCarloError, PhaseQuantizer, SimConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::runner::{ParallelExecutor, RunError};

/// Front-end quantizer that reports the bin `shift` places after the nearest
/// one. Only used to demonstrate that the battery detects a broken receiver.
#[derive(Debug, Clone, Copy)]
pub struct ShiftedBin(pub usize);

impl PhaseQuantizer for ShiftedBin {
    fn quantize_index(&self, x: Complex64, bits: u32) -> usize {
        (nearest_index(x, bits) + self.0) & ((1usize << bits) - 1)
    }
}

/// Deliberate faults for exercising the battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// Front-end quantizer off by one bin.
    OffByOneQuantizer,
    /// Mirror detector without the conjugate on `y`.
    ConjugateDroppedMirror,
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub workers: usize,
    pub equivalence_rho_db: f64,
    pub equivalence_trials: u64,
    pub identity_trials: u64,
    pub residual_draws: usize,
    pub eta_channels: usize,
    pub eta_trials: u64,
    /// Runs the configured sweep for the bound sandwich; the expensive part.
    pub sandwich: bool,
    pub mutation: Option<Mutation>,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            equivalence_rho_db: 10.0,
            equivalence_trials: 1_000_000,
            identity_trials: 1_000_000,
            residual_draws: 8,
            eta_channels: 8,
            eta_trials: 20_000,
            sandwich: true,
            mutation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: SimConfig,
    pub tool_version: String,
    pub mutation: Option<Mutation>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const RESIDUAL_SLOPE: f64 = -2.0;
pub const RESIDUAL_TOLERANCE: f64 = 0.1;
pub const Z_THRESHOLD: f64 = 4.0;
pub const ETA_INTERVAL_Z: f64 = 4.0;
/// Target `√(2ρ/N_r) η sin(π/M)` for the bracket check: `Q(2) ≈ 0.023`.
pub const ETA_TARGET_X: f64 = 2.0;

pub fn run(config: &SimConfig, options: &ValidateOptions) -> Result<ValidationReport, RunError> {
    config.validate()?;
    let mut checks = vec![
        equivalence(config, options)?,
        identity_equality(config, options)?,
        residual_slope(config, options)?,
        eta_bracket(config, options)?,
    ];
    if options.sandwich {
        checks.push(sandwich(config, options)?);
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport {
        config: config.clone(),
        tool_version: crate::TOOL_VERSION.to_string(),
        mutation: options.mutation,
        checks,
        pass,
    })
}

fn equivalence(config: &SimConfig, options: &ValidateOptions) -> Result<Check, MonteCarloError> {
    let (rho, trials) = (options.equivalence_rho_db, options.equivalence_trials);
    let result = match options.mutation {
        Some(Mutation::OffByOneQuantizer) => montecarlo::equivalence_test_with(
            config,
            rho,
            trials,
            ShiftedBin(1),
            MirrorVariant::Faithful,
        )?,
        Some(Mutation::ConjugateDroppedMirror) => montecarlo::equivalence_test_with(
            config,
            rho,
            trials,
            NearestPhase,
            MirrorVariant::ConjugateDropped,
        )?,
        None => montecarlo::equivalence_test(config, rho, trials)?,
    };
    Ok(Check {
        name: "equivalence".into(),
        statistic: result.z.abs(),
        threshold: format!("|z| < {Z_THRESHOLD}"),
        pass: result.z.abs() < Z_THRESHOLD,
        details: json!({
            "rho_db": rho,
            "amrc": result.lhs,
            "mirror": result.rhs,
        }),
    })
}

fn identity_equality(
    config: &SimConfig,
    options: &ValidateOptions,
) -> Result<Check, MonteCarloError> {
    let top = config
        .rho_grid_db
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut cfg = config.clone();
    cfg.correlation = CorrelationSpec::Identity;
    cfg.detectors = vec![Detector::Mrc, Detector::Amrc];
    cfg.rho_grid_db = vec![top];
    cfg.chunk_size = cfg.chunk_size.min(options.identity_trials.max(1));
    cfg.max_trials = options.identity_trials.max(cfg.chunk_size);
    cfg.target_errors = u64::MAX;
    let points = match options.mutation {
        Some(Mutation::OffByOneQuantizer) => {
            montecarlo::run_sweep_using(&cfg, ShiftedBin(1), &SerialExecutor)?
        }
        _ => montecarlo::run_sweep(&cfg)?,
    };
    let p = &points[0];
    let mismatches = p.amrc_mrc_mismatches.unwrap_or(u64::MAX);
    Ok(Check {
        name: "identity_decision_equality".into(),
        statistic: mismatches as f64,
        threshold: "0 mismatches".into(),
        pass: mismatches == 0,
        details: json!({ "rho_db": top, "trials": p.trials }),
    })
}

fn residual_slope(config: &SimConfig, options: &ValidateOptions) -> Result<Check, MonteCarloError> {
    let mut rng = RngStream::new(config.seed, channel::stream_id(&[family::ETA_BRACKET, 99]));
    let mut slopes = Vec::with_capacity(options.residual_draws);
    for _ in 0..options.residual_draws {
        let k = montecarlo::random_covariance(config.antennas, &mut rng);
        let model = ChannelModel::from_covariance(k)?;
        let h = channel::sample_channel(&model, &mut rng);
        slopes.push(montecarlo::residual_slope(&h, &model, 1e2, 1e6, 9)?);
    }
    let worst = slopes
        .iter()
        .map(|s| (s - RESIDUAL_SLOPE).abs())
        .fold(0.0, f64::max);
    Ok(Check {
        name: "expansion_residual_slope".into(),
        statistic: worst,
        threshold: format!("max |slope - ({RESIDUAL_SLOPE})| <= {RESIDUAL_TOLERANCE}"),
        pass: worst <= RESIDUAL_TOLERANCE,
        details: json!({ "slopes": slopes, "rho_range": [1e2, 1e6] }),
    })
}

fn eta_bracket(config: &SimConfig, options: &ValidateOptions) -> Result<Check, MonteCarloError> {
    let entries = montecarlo::eta_bracket_check(
        config,
        options.equivalence_rho_db,
        options.eta_channels,
        options.eta_trials,
        ETA_TARGET_X,
    )?;
    let outside = entries
        .iter()
        .filter(|e| {
            let (lo, hi) = wilson_z(e.errors, e.trials, ETA_INTERVAL_Z);
            hi < e.lower || lo > e.upper
        })
        .count();
    Ok(Check {
        name: "conditional_bracket".into(),
        statistic: outside as f64,
        threshold: format!("every channel inside [Q(x), 2Q(x)] at z = {ETA_INTERVAL_Z}"),
        pass: outside == 0,
        details: json!({ "entries": entries }),
    })
}

fn sandwich(config: &SimConfig, options: &ValidateOptions) -> Result<Check, RunError> {
    let mut cfg = config.clone();
    if !cfg.detectors.contains(&Detector::Amrc) {
        cfg.detectors.push(Detector::Amrc);
    }
    let executor = ParallelExecutor::new(options.workers)?;
    let points = sweep(&cfg, options, &executor)?;
    let top = cfg
        .rho_grid_db
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let window = (top - DEFAULT_SLOPE_WINDOW_DB, top);
    let eligible: Vec<_> = points
        .iter()
        .filter(|p| {
            p.stats(Detector::Amrc)
                .is_some_and(|s| s.errors >= cfg.target_errors)
        })
        .cloned()
        .collect();
    let report = montecarlo::sandwich_check(&eligible, window);
    let failing = report
        .entries
        .iter()
        .filter(|e| !(e.lower_ok && e.upper_ok))
        .count();
    Ok(Check {
        name: "bound_sandwich".into(),
        statistic: failing as f64,
        threshold:
            "every point of the top decade with target_errors errors inside [E Q, 2 E Q] (95% CI)"
                .into(),
        pass: report.pass,
        details: json!({ "window_db": window, "entries": report.entries }),
    })
}

fn sweep<E: ChunkExecutor>(
    cfg: &SimConfig,
    options: &ValidateOptions,
    executor: &E,
) -> Result<Vec<qsep_core::SimPoint>, MonteCarloError> {
    match options.mutation {
        Some(Mutation::OffByOneQuantizer) => {
            montecarlo::run_sweep_using(cfg, ShiftedBin(1), executor)
        }
        _ => montecarlo::run_sweep_with(cfg, executor),
    }
}
