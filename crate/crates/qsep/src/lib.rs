//! Host-side driver for `qsep-core`: configuration files, multi-threaded
//! sweeps, CSV/JSON artifacts and the `simulate`, `asymptote` and `validate`
//! commands.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use qsep_core::analytic::{self, AnalyticError};
use qsep_core::montecarlo::{self, Detector, MonteCarloError};
use qsep_core::{ChannelModel, GainResult, SimConfig, SimPoint};
use thiserror::Error;

pub mod config;
pub mod covariance_file;
pub mod output;
pub mod runner;
pub mod validate;

pub use config::ConfigError;
pub use output::{RunManifest, SlopeRecord};
pub use runner::RunError;
pub use validate::{ValidateOptions, ValidationReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default `k` for reported asymptotes.
pub const DEFAULT_K: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("cannot write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<MonteCarloError> for CliError {
    fn from(e: MonteCarloError) -> Self {
        CliError::Run(RunError::MonteCarlo(e))
    }
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub k: f64,
    pub seed: Option<u64>,
}

impl CommonArgs {
    pub fn new(config: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: config.into(),
            out_dir: out_dir.into(),
            workers: 1,
            k: DEFAULT_K,
            seed: None,
        }
    }

    fn load(&self) -> Result<SimConfig, CliError> {
        if !(1.0..=2.0).contains(&self.k) {
            return Err(ConfigError::Invalid {
                location: config::Location {
                    path: PathBuf::from("--k"),
                    line: None,
                    column: None,
                },
                field: "k".into(),
                message: format!("{} is outside [1, 2]", self.k),
            }
            .into());
        }
        let mut config = config::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }

    fn gain(&self, config: &SimConfig) -> Result<GainResult, CliError> {
        let model = ChannelModel::build(&config.correlation, config.antennas)
            .map_err(MonteCarloError::from)?;
        Ok(GainResult::compute(
            config.order,
            config.bits,
            config.antennas,
            model.det(),
            self.k,
        )?)
    }

    fn create_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir).map_err(|source| CliError::Io {
            path: self.out_dir.clone(),
            source,
        })
    }
}

/// Result of `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub points: Vec<SimPoint>,
    pub manifest: RunManifest,
}

/// Runs the configured sweep and writes `points.csv` and `manifest.json`.
pub fn cmd_simulate(args: &CommonArgs) -> Result<SimulateOutcome, CliError> {
    let config = args.load()?;
    let gain = args.gain(&config)?;
    let mut manifest = RunManifest::new(
        config.clone(),
        gain,
        vec![output::POINTS_FILE.into(), output::MANIFEST_FILE.into()],
    );
    let points = runner::run_sweep(&config, args.workers)?;
    manifest.slopes = config
        .detectors
        .iter()
        .map(|&d| slope_record(&points, d))
        .collect();

    args.create_out_dir()?;
    let csv = args.out_dir.join(output::POINTS_FILE);
    write_with(&csv, |w| output::write_points_csv(w, &points))?;
    write_text(
        &args.out_dir.join(output::MANIFEST_FILE),
        &manifest.to_json(),
    )?;
    Ok(SimulateOutcome { points, manifest })
}

fn slope_record(points: &[SimPoint], detector: Detector) -> SlopeRecord {
    match montecarlo::estimate_slope(points, detector, None) {
        Ok(estimate) => SlopeRecord {
            detector,
            estimate: Some(estimate),
            note: None,
        },
        Err(e) => SlopeRecord {
            detector,
            estimate: None,
            note: Some(e.to_string()),
        },
    }
}

/// Evaluates the high-SNR asymptote on the configured grid and writes
/// `asymptote.csv` and `asymptote_manifest.json`.
pub fn cmd_asymptote(args: &CommonArgs) -> Result<RunManifest, CliError> {
    let config = args.load()?;
    let gain = args.gain(&config)?;
    let curve = analytic::asymptote_curve(&gain, &config.rho_grid())?;
    let manifest = RunManifest::new(
        config.clone(),
        gain,
        vec![
            output::ASYMPTOTE_FILE.into(),
            output::ASYMPTOTE_MANIFEST_FILE.into(),
        ],
    );
    args.create_out_dir()?;
    write_with(&args.out_dir.join(output::ASYMPTOTE_FILE), |w| {
        output::write_asymptote_csv(w, &config.rho_grid_db, &curve)
    })?;
    write_text(
        &args.out_dir.join(output::ASYMPTOTE_MANIFEST_FILE),
        &manifest.to_json(),
    )?;
    Ok(manifest)
}

/// Runs the validation battery and writes `validation.json`.
pub fn cmd_validate(
    args: &CommonArgs,
    options: &ValidateOptions,
) -> Result<ValidationReport, CliError> {
    let config = args.load()?;
    let options = ValidateOptions {
        workers: args.workers,
        ..options.clone()
    };
    let report = validate::run(&config, &options)?;
    args.create_out_dir()?;
    write_text(
        &args.out_dir.join(output::VALIDATION_FILE),
        &report.to_json(),
    )?;
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_with(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    body(&mut w).map_err(io)?;
    std::io::Write::flush(&mut w).map_err(io)
}
