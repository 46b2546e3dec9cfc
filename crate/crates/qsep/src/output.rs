//! CSV and JSON artifacts.
//!
//! Numbers are written with 17 significant digits in `{:.16e}` form, which
//! round-trips every `f64`. Lines end in `\n` and the decimal separator is
//! always `.`, independent of locale.

use std::io::{self, Write};

use qsep_core::analytic::AsymptoteCurve;
use qsep_core::montecarlo::{Detector, SlopeEstimate};
use qsep_core::{GainResult, SimConfig, SimPoint};
use serde::{Deserialize, Serialize};

pub const POINTS_HEADER: &str = "rho_db,detector,errors,trials,sep,ci_low,ci_high,mean_qbound";
pub const ASYMPTOTE_HEADER: &str = "rho_db,sep_asymptote,regime,k,G_d,G_c,out_of_regime";

pub const POINTS_FILE: &str = "points.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ASYMPTOTE_FILE: &str = "asymptote.csv";
pub const ASYMPTOTE_MANIFEST_FILE: &str = "asymptote_manifest.json";
pub const VALIDATION_FILE: &str = "validation.json";

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per (grid point, detector), detectors in configuration order.
pub fn write_points_csv<W: Write>(mut w: W, points: &[SimPoint]) -> io::Result<()> {
    writeln!(w, "{POINTS_HEADER}")?;
    for p in points {
        for s in &p.detectors {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                num(p.rho_db),
                s.detector.name(),
                s.errors,
                s.trials,
                num(s.sep),
                num(s.ci_low),
                num(s.ci_high),
                num(p.mean_qbound),
            )?;
        }
    }
    Ok(())
}

/// Asymptote rows over the grid. The raw value is reported clamped to one;
/// `out_of_regime` marks the rows where clamping happened.
pub fn write_asymptote_csv<W: Write>(
    mut w: W,
    rho_grid_db: &[f64],
    curve: &AsymptoteCurve,
) -> io::Result<()> {
    writeln!(w, "{ASYMPTOTE_HEADER}")?;
    let g = &curve.gain;
    for (db, sample) in rho_grid_db.iter().zip(&curve.samples) {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            num(*db),
            num(sample.reported_sep()),
            g.regime.as_str(),
            num(g.k_used),
            num(g.diversity),
            num(g.coding),
            sample.out_of_regime(),
        )?;
    }
    Ok(())
}

/// Regression of one detector's SEP against SNR, as recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRecord {
    pub detector: Detector,
    pub estimate: Option<SlopeEstimate>,
    /// Why no estimate could be made.
    pub note: Option<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimConfig,
    pub tool_version: String,
    /// RFC 3339 timestamp.
    pub started_at: String,
    pub analytic: GainResult,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slopes: Vec<SlopeRecord>,
}

impl RunManifest {
    pub fn new(config: SimConfig, analytic: GainResult, outputs: Vec<String>) -> Self {
        Self {
            config,
            tool_version: crate::TOOL_VERSION.to_string(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            analytic,
            outputs,
            slopes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qsep_core::montecarlo::DetectorStats;
    use qsep_core::CorrelationSpec;

    fn point() -> SimPoint {
        SimPoint {
            rho_db: 10.0,
            trials: 1000,
            chunks: 1,
            detectors: vec![
                DetectorStats::new(Detector::Mrc, 12, 1000),
                DetectorStats::new(Detector::Amrc, 13, 1000),
            ],
            mean_qbound: 0.1 + 0.2,
            qbound_std_err: 0.0,
            amrc_mrc_mismatches: Some(1),
            target_reached: false,
        }
    }

    #[test]
    fn points_csv_layout() {
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &[point()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], POINTS_HEADER);
        assert_eq!(
            lines[1],
            "1.0000000000000000e1,mrc,12,1000,1.2000000000000000e-2,\
             6.8776478064035218e-3,2.0857268475498281e-2,3.0000000000000004e-1"
        );
        assert!(lines[2].starts_with("1.0000000000000000e1,amrc,13,1000,"));
        assert_eq!(lines[3], "");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 7e-9, 123456.789, f64::MIN_POSITIVE] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let config = SimConfig::new(
            4,
            8,
            4,
            vec![0.0, 2.5, 1.0 / 3.0],
            CorrelationSpec::Exponential {
                alpha: 0.7,
                phi: std::f64::consts::FRAC_PI_4,
            },
            99,
        );
        let gain = GainResult::compute(8, 4, 4, 0.2601, 2.0).unwrap();
        let mut m = RunManifest::new(config, gain, vec!["points.csv".into()]);
        m.slopes.push(SlopeRecord {
            detector: Detector::Amrc,
            estimate: None,
            note: Some("insufficient data".into()),
        });
        let back = RunManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
