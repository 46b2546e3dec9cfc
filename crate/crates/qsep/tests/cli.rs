//! End-to-end behaviour of the commands and the `qsep` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qsep::validate::Mutation;
use qsep::{
    cmd_asymptote, cmd_simulate, cmd_validate, CliError, CommonArgs, RunManifest, ValidateOptions,
};
use qsep_core::analytic::GainRegime;
use tempfile::TempDir;

const SMALL: &str = r#"
N_r = 3
M = 8
n = 4
rho_grid_db = [0, 5, 10]
seed = 77
max_trials = 60000
target_errors = 200
chunk_size = 1000
detectors = ["mrc", "amrc", "mirror"]

[correlation]
kind = "exponential"
alpha = 0.7
phi = 0.7853981633974483
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulate_csv(config: &Path, out: &Path, workers: usize) -> String {
    let args = CommonArgs {
        workers,
        ..CommonArgs::new(config, out)
    };
    cmd_simulate(&args).unwrap();
    fs::read_to_string(out.join("points.csv")).unwrap()
}

#[test]
fn simulate_is_identical_for_any_worker_count() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL);
    let csv: Vec<String> = [1, 4, 16]
        .iter()
        .map(|&w| simulate_csv(&config, &dir.path().join(format!("w{w}")), w))
        .collect();
    assert_eq!(csv[0], csv[1]);
    assert_eq!(csv[0], csv[2]);

    let lines: Vec<&str> = csv[0].lines().collect();
    assert_eq!(
        lines[0],
        "rho_db,detector,errors,trials,sep,ci_low,ci_high,mean_qbound"
    );
    assert_eq!(lines.len(), 1 + 3 * 3);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "{line}");
        let errors: u64 = fields[2].parse().unwrap();
        let trials: u64 = fields[3].parse().unwrap();
        let sep: f64 = fields[4].parse().unwrap();
        assert_eq!(sep, errors as f64 / trials as f64);
        assert!(["mrc", "amrc", "mirror"].contains(&fields[1]));
    }
}

#[test]
fn manifest_round_trips() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL);
    let args = CommonArgs {
        seed: Some(u64::MAX - 3),
        ..CommonArgs::new(&config, dir.path())
    };
    let outcome = cmd_simulate(&args).unwrap();
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    let parsed = RunManifest::from_json(&text).unwrap();
    assert_eq!(parsed, outcome.manifest);
    assert_eq!(parsed.config.seed, u64::MAX - 3);
    assert_eq!(parsed.to_json(), text);
    assert_eq!(parsed.outputs, ["points.csv", "manifest.json"]);
    assert_eq!(parsed.slopes.len(), 3);
}

#[test]
fn seed_changes_the_draws() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL);
    let a = simulate_csv(&config, &dir.path().join("a"), 1);
    cmd_simulate(&CommonArgs {
        seed: Some(78),
        ..CommonArgs::new(&config, dir.path().join("b"))
    })
    .unwrap();
    let b = fs::read_to_string(dir.path().join("b/points.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn asymptote_reports_regime_and_gains() {
    let dir = TempDir::new().unwrap();
    let strict = write_config(
        dir.path(),
        "strict.toml",
        &SMALL
            .replace("N_r = 3", "N_r = 4")
            .replace("[0, 5, 10]", "[10, 20, 30]"),
    );
    let manifest = cmd_asymptote(&CommonArgs::new(&strict, dir.path().join("s"))).unwrap();
    assert_eq!(manifest.analytic.regime, GainRegime::StrictMLt2n);
    assert_eq!(manifest.analytic.diversity, 4.0);
    assert!((manifest.analytic.coding - 0.074_284_014_498_948_235).abs() < 1e-14);
    let csv = fs::read_to_string(dir.path().join("s/asymptote.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "rho_db,sep_asymptote,regime,k,G_d,G_c,out_of_regime"
    );
    assert_eq!(lines.len(), 4);
    let rows: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    let value = |row: usize, col: usize| rows[row][col].parse::<f64>().unwrap();
    assert_eq!(value(0, 0), 10.0);
    assert_eq!(
        &rows[1][2..],
        [
            "strict_M_lt_2n",
            "2.0000000000000000e0",
            "4.0000000000000000e0",
            "7.4284014498948239e-2",
            "false"
        ]
    );
    // At 10 dB the line sits above 1: reported clamped and flagged.
    assert_eq!((value(0, 1), rows[0][6]), (1.0, "true"));
    assert!((value(1, 1) / value(2, 1) - 1e4).abs() < 1e-8);

    let heuristic = write_config(
        dir.path(),
        "heuristic.toml",
        &SMALL
            .replace("N_r = 3", "N_r = 4")
            .replace("n = 4", "n = 3")
            .replace("alpha = 0.7", "alpha = 0.8"),
    );
    let args = CommonArgs {
        k: 1.0,
        ..CommonArgs::new(&heuristic, dir.path().join("h"))
    };
    let manifest = cmd_asymptote(&args).unwrap();
    assert_eq!(manifest.analytic.regime, GainRegime::HeuristicMEq2n);
    assert_eq!(manifest.analytic.diversity, 2.0);
    assert!(fs::read_to_string(dir.path().join("h/asymptote.csv"))
        .unwrap()
        .contains("heuristic_M_eq_2n"));
    assert!(dir.path().join("h/asymptote_manifest.json").exists());
}

#[test]
fn out_of_range_k_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL);
    for k in [0.5, 2.5] {
        let err = cmd_asymptote(&CommonArgs {
            k,
            ..CommonArgs::new(&config, dir.path())
        })
        .unwrap_err();
        match err {
            CliError::Config(e) => assert_eq!(e.field(), Some("k")),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn bad_order_is_reported_with_location() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "bad.toml", &SMALL.replace("M = 8", "M = 6"));
    let err = cmd_simulate(&CommonArgs::new(&config, dir.path())).unwrap_err();
    let CliError::Config(e) = err else {
        panic!("{err:?}")
    };
    assert_eq!(e.field(), Some("M"));
    assert_eq!(e.line(), Some(3));
    assert!(e.to_string().contains("M must be a power of two"), "{e}");
    assert!(!dir.path().join("points.csv").exists());
}

#[test]
fn validation_battery_passes_and_mutants_fail() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "small.toml", SMALL);
    let options = ValidateOptions {
        equivalence_trials: 200_000,
        identity_trials: 100_000,
        eta_channels: 4,
        sandwich: false,
        ..ValidateOptions::default()
    };
    let report = cmd_validate(&CommonArgs::new(&config, dir.path()), &options).unwrap();
    assert!(report.pass, "{}", report.to_json());
    for name in [
        "equivalence",
        "identity_decision_equality",
        "expansion_residual_slope",
        "conditional_bracket",
    ] {
        assert!(report.check(name).is_some_and(|c| c.pass), "{name}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("validation.json")).unwrap())
            .unwrap();
    assert_eq!(json["pass"], true);

    for mutation in [
        Mutation::OffByOneQuantizer,
        Mutation::ConjugateDroppedMirror,
    ] {
        let options = ValidateOptions {
            mutation: Some(mutation),
            ..options.clone()
        };
        let report = cmd_validate(&CommonArgs::new(&config, dir.path()), &options).unwrap();
        assert!(!report.pass);
        assert!(!report.check("equivalence").unwrap().pass, "{mutation:?}");
    }
}

fn qsep() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qsep"))
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "small.toml",
        &SMALL.replace("max_trials = 60000", "max_trials = 10000"),
    );
    let out = dir.path().join("out");

    let status = qsep()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out)
        .env("QSEP_WORKERS", "2")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("points.csv").exists());

    let status = qsep()
        .args(["asymptote", "--k", "3", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("--k"));

    let failing = qsep()
        .args([
            "validate",
            "--skip-sandwich",
            "--mutate",
            "off-by-one-quantizer",
            "--config",
        ])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(failing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&failing.stderr).contains("FAIL equivalence"));

    let missing = qsep()
        .args(["simulate", "--config", "/nonexistent/x.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
