//! TOML experiment configuration.
//!
//! Keys match the [`SimConfig`] field names (`N_r`, `M`, `n`, `rho_grid_db`,
//! `seed`, `max_trials`, `target_errors`, `chunk_size`, `detectors`) plus a
//! `[correlation]` table:
//!
//! ```toml
//! N_r = 4
//! M = 8
//! n = 4
//! rho_grid_db = [0, 5, 10, 15, 20]
//! seed = 1
//!
//! [correlation]
//! kind = "exponential"   # or "identity", or "explicit" with matrix_file
//! alpha = 0.7
//! phi = 0.7853981633974483
//! ```
//!
//! An explicit covariance is read from `matrix_file`, resolved relative to the
//! configuration file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use qsep_core::montecarlo::{
    Detector, MonteCarloError, DEFAULT_CHUNK_SIZE, DEFAULT_MAX_TRIALS, DEFAULT_TARGET_ERRORS,
};
use qsep_core::{ChannelError, CorrelationSpec, SimConfig};
use serde::Deserialize;
use thiserror::Error;

use crate::covariance_file::{self, CovarianceFileError};

/// Where in the configuration a problem was found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {message}")]
    Syntax { location: Location, message: String },
    #[error("{location}: field `{field}`: {message}")]
    Invalid {
        location: Location,
        field: String,
        message: String,
    },
    #[error("{location}: invalid covariance file")]
    Covariance {
        location: Location,
        #[source]
        source: CovarianceFileError,
    },
}

impl ConfigError {
    /// The offending field, for validation failures.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { location, .. }
            | ConfigError::Invalid { location, .. }
            | ConfigError::Covariance { location, .. } => location.line,
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "N_r")]
    antennas: usize,
    #[serde(rename = "M")]
    order: usize,
    #[serde(rename = "n")]
    bits: u32,
    rho_grid_db: Vec<f64>,
    seed: u64,
    #[serde(default = "default_max_trials")]
    max_trials: u64,
    #[serde(default = "default_target_errors")]
    target_errors: u64,
    #[serde(default = "default_chunk_size")]
    chunk_size: u64,
    #[serde(default = "default_detectors")]
    detectors: Vec<Detector>,
    #[serde(default)]
    correlation: RawCorrelation,
}

fn default_max_trials() -> u64 {
    DEFAULT_MAX_TRIALS
}

fn default_target_errors() -> u64 {
    DEFAULT_TARGET_ERRORS
}

fn default_chunk_size() -> u64 {
    DEFAULT_CHUNK_SIZE
}

fn default_detectors() -> Vec<Detector> {
    Detector::ALL.to_vec()
}

#[derive(Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawCorrelation {
    #[default]
    Identity,
    Exponential {
        alpha: f64,
        phi: f64,
    },
    Explicit {
        matrix_file: PathBuf,
    },
}

/// Reads, parses and validates a configuration file.
pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse(&text, path, base)
}

/// Parses configuration `text`. `origin` is used in diagnostics and `base`
/// resolves a relative `matrix_file`.
pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<SimConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError::Syntax {
            location: Location {
                path: origin.to_path_buf(),
                line,
                column,
            },
            message: e.message().trim().to_string(),
        }
    })?;

    let correlation = match raw.correlation {
        RawCorrelation::Identity => CorrelationSpec::Identity,
        RawCorrelation::Exponential { alpha, phi } => CorrelationSpec::Exponential { alpha, phi },
        RawCorrelation::Explicit { matrix_file } => {
            let file = base.join(&matrix_file);
            let matrix =
                covariance_file::read(&file).map_err(|source| ConfigError::Covariance {
                    location: locate(text, origin, "matrix_file"),
                    source,
                })?;
            if matrix.rows() != raw.antennas {
                return Err(invalid(
                    text,
                    origin,
                    "matrix_file",
                    format!(
                        "covariance is {}x{} but N_r = {}",
                        matrix.rows(),
                        matrix.cols(),
                        raw.antennas
                    ),
                ));
            }
            CorrelationSpec::Explicit { matrix }
        }
    };

    let config = SimConfig {
        antennas: raw.antennas,
        order: raw.order,
        bits: raw.bits,
        rho_grid_db: raw.rho_grid_db,
        correlation,
        seed: raw.seed,
        max_trials: raw.max_trials,
        target_errors: raw.target_errors,
        chunk_size: raw.chunk_size,
        detectors: raw.detectors,
    };
    validate(&config, text, origin)?;
    Ok(config)
}

fn validate(config: &SimConfig, text: &str, origin: &Path) -> Result<(), ConfigError> {
    match config.validate() {
        Ok(()) => Ok(()),
        Err(MonteCarloError::InvalidConfig { field, message }) => {
            Err(invalid(text, origin, field, message.to_string()))
        }
        Err(MonteCarloError::Channel(e)) => {
            let field = match e {
                ChannelError::InvalidParameter(m) if m.contains("alpha") => "alpha",
                ChannelError::InvalidParameter(m) if m.contains("phi") => "phi",
                _ => "correlation",
            };
            Err(invalid(text, origin, field, e.to_string()))
        }
        Err(e) => Err(invalid(text, origin, "correlation", e.to_string())),
    }
}

fn invalid(text: &str, origin: &Path, field: &str, message: String) -> ConfigError {
    ConfigError::Invalid {
        location: locate(text, origin, field),
        field: field.to_string(),
        message,
    }
}

/// Location of the line assigning `field`, if present.
fn locate(text: &str, origin: &Path, field: &str) -> Location {
    let line = text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(field)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    });
    Location {
        path: origin.to_path_buf(),
        line: line.map(|i| i + 1),
        column: None,
    }
}

/// 1-based line and column of byte `offset`.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = r#"
N_r = 4
M = 8
n = 4
rho_grid_db = [0, 5, 10]
seed = 11
chunk_size = 1000
max_trials = 100000
detectors = ["mrc", "amrc"]

[correlation]
kind = "exponential"
alpha = 0.7
phi = 0.7853981633974483
"#;

    fn parse_str(text: &str) -> Result<SimConfig, ConfigError> {
        parse(text, Path::new("test.toml"), Path::new("."))
    }

    #[test]
    fn parses_full_config() {
        let c = parse_str(FIG1).unwrap();
        assert_eq!((c.antennas, c.order, c.bits), (4, 8, 4));
        assert_eq!(c.rho_grid_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(c.detectors, vec![Detector::Mrc, Detector::Amrc]);
        assert_eq!(c.target_errors, DEFAULT_TARGET_ERRORS);
        assert!(
            matches!(c.correlation, CorrelationSpec::Exponential { alpha, .. } if alpha == 0.7)
        );
    }

    #[test]
    fn defaults_apply() {
        let c = parse_str("N_r = 2\nM = 4\nn = 3\nrho_grid_db = [1.5]\nseed = 3\n").unwrap();
        assert_eq!(c.correlation, CorrelationSpec::Identity);
        assert_eq!(c.detectors, Detector::ALL.to_vec());
        assert_eq!(c.max_trials, DEFAULT_MAX_TRIALS);
    }

    #[test]
    fn order_must_be_power_of_two() {
        let text = FIG1.replace("M = 8", "M = 6");
        let e = parse_str(&text).unwrap_err();
        assert_eq!(e.field(), Some("M"));
        assert_eq!(e.line(), Some(3));
        assert!(e.to_string().contains("M must be a power of two"), "{e}");
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let text = FIG1.replace("seed = 11", "seed = \"eleven\"");
        let e = parse_str(&text).unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { .. }));
        assert_eq!(e.line(), Some(6));
        let e = parse_str(&FIG1.replace("seed = 11", "seed = 11\ncolour = 1")).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
    }

    #[test]
    fn bad_alpha_is_reported() {
        let e = parse_str(&FIG1.replace("alpha = 0.7", "alpha = 1.0")).unwrap_err();
        assert_eq!(e.field(), Some("alpha"));
        assert_eq!(e.line(), Some(13));
    }
}
