//! Estimator-level behaviour: stopping rule, replay across executors,
//! interval coverage and the small-margin tail of the bound statistic.

use std::f64::consts::FRAC_PI_4;
use std::ops::Range;

use qsep_core::channel::{sample_channel, stream_id, ChannelModel, CorrelationSpec, RngStream};
use qsep_core::constellation::PhaseQuantizer;
use qsep_core::montecarlo::{
    equivalence_test, equivalence_test_with, estimate_slope, eta_bracket_check, run_plan,
    run_sweep, run_sweep_with, wilson, ChunkExecutor, ChunkTally, Detector, DetectorStats,
    MirrorVariant, PointPlan, SerialExecutor, SimConfig, SimPoint,
};
use qsep_core::receiver::bound_statistics;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

fn exponential(alpha: f64) -> CorrelationSpec {
    CorrelationSpec::Exponential {
        alpha,
        phi: FRAC_PI_4,
    }
}

fn fixed_budget(mut c: SimConfig, chunk: u64, trials: u64) -> SimConfig {
    c.chunk_size = chunk;
    c.max_trials = trials;
    c.target_errors = u64::MAX;
    c
}

/// Evaluates batches of seven chunks back to front, then restores order.
struct Shuffled;

impl ChunkExecutor for Shuffled {
    fn batch_len(&self) -> u64 {
        7
    }

    fn run_batch<Q: PhaseQuantizer>(
        &self,
        plan: &PointPlan<Q>,
        chunks: Range<u64>,
    ) -> Vec<ChunkTally> {
        let mut out: Vec<(u64, ChunkTally)> =
            chunks.rev().map(|c| (c, plan.run_chunk(c))).collect();
        out.sort_by_key(|(c, _)| *c);
        out.into_iter().map(|(_, t)| t).collect()
    }
}

#[test]
fn pure_noise_errs_like_a_guess() {
    let config = fixed_budget(
        SimConfig::new(2, 8, 4, vec![-60.0], exponential(0.5), 3),
        1_000,
        40_000,
    );
    let point = &run_sweep(&config).unwrap()[0];
    let sd = (7.0f64 / 64.0 / 40_000.0).sqrt();
    for s in &point.detectors {
        assert!((s.sep - 7.0 / 8.0).abs() < 4.0 * sd, "{:?}", s);
    }
}

#[test]
fn identity_covariance_gives_equal_counts_per_chunk() {
    let config = fixed_budget(
        SimConfig::new(4, 8, 4, vec![6.0], CorrelationSpec::Identity, 5),
        2_000,
        20_000,
    );
    let model = ChannelModel::build(&config.correlation, 4).unwrap();
    let plan = PointPlan::new(&config, &model, 0).unwrap();
    for c in 0..10 {
        let t = plan.run_chunk(c);
        assert_eq!(
            t.errors[Detector::Mrc.slot()],
            t.errors[Detector::Amrc.slot()]
        );
        assert_eq!(t.amrc_mrc_mismatches, 0);
        assert!(t.errors[Detector::Amrc.slot()] > 0);
    }
}

#[test]
fn executor_batching_does_not_change_results() {
    let mut config = SimConfig::new(3, 8, 4, vec![0.0, 6.0, 12.0], exponential(0.7), 11);
    config.chunk_size = 300;
    config.max_trials = 60_000;
    config.target_errors = 150;
    let serial = run_sweep_with(&config, &SerialExecutor).unwrap();
    let batched = run_sweep_with(&config, &Shuffled).unwrap();
    assert_eq!(serial, batched);
}

#[test]
fn stopping_rule_accounting() {
    let mut config = SimConfig::new(2, 4, 3, vec![0.0, 8.0, 30.0], exponential(0.3), 13);
    config.chunk_size = 250;
    config.max_trials = 20_000;
    config.target_errors = 100;
    let model = ChannelModel::build(&config.correlation, 2).unwrap();
    for (i, point) in run_sweep(&config).unwrap().iter().enumerate() {
        assert_eq!(point.trials % config.chunk_size, 0);
        assert_eq!(point.trials, point.chunks * config.chunk_size);
        assert!(point.trials <= config.max_trials);
        let min_errors = point.detectors.iter().map(|s| s.errors).min().unwrap();
        if point.target_reached {
            assert!(min_errors >= config.target_errors);
            // The chunk before the last one had not yet reached the target.
            let plan = PointPlan::new(&config, &model, i).unwrap();
            let mut prior = ChunkTally::default();
            for c in 0..point.chunks - 1 {
                prior.merge(&plan.run_chunk(c));
            }
            assert!(config
                .detectors
                .iter()
                .any(|d| prior.errors[d.slot()] < config.target_errors));
        } else {
            assert_eq!(point.trials, config.max_trials);
        }
        for s in &point.detectors {
            assert_eq!(s.trials, point.trials);
            assert!(s.ci_low <= s.sep && s.sep <= s.ci_high);
        }
    }
}

#[test]
fn fixed_budget_reproduces_plan_totals() {
    let config = fixed_budget(
        SimConfig::new(2, 8, 3, vec![10.0], exponential(0.8), 17),
        500,
        5_000,
    );
    let model = ChannelModel::build(&config.correlation, 2).unwrap();
    let plan = PointPlan::new(&config, &model, 0).unwrap();
    let mut manual = ChunkTally::default();
    for c in 0..10 {
        manual.merge(&plan.run_chunk(c));
    }
    let point = run_plan(&config, &plan, &SerialExecutor);
    assert_eq!(point.trials, manual.trials);
    for d in Detector::ALL {
        assert_eq!(point.stats(d).unwrap().errors, manual.errors[d.slot()]);
    }
    let mean = manual.qbound_sum / manual.trials as f64;
    assert!((point.mean_qbound - mean).abs() <= 1e-15 * mean.max(1e-300));
}

#[test]
fn wilson_interval_covers() {
    let mut rng = RngStream::new(19, stream_id(&[8]));
    for (n, p) in [(200u64, 0.02), (1_000, 0.2), (5_000, 0.001)] {
        let dist = Binomial::new(n, p).unwrap();
        let covered = (0..1_000)
            .filter(|_| {
                let (lo, hi) = wilson(dist.sample(&mut rng), n);
                lo <= p && p <= hi
            })
            .count();
        assert!(covered >= 930, "n={n} p={p}: {covered}/1000");
    }
}

#[test]
fn slope_fit_uses_window_and_error_floor() {
    let point = |rho_db: f64, errors: u64| {
        let sep = 0.3 * 10f64.powf(-3.0 * rho_db / 10.0);
        SimPoint {
            rho_db,
            trials: 1_000_000,
            chunks: 100,
            detectors: vec![DetectorStats {
                sep,
                ..DetectorStats::new(Detector::Amrc, errors, 1_000_000)
            }],
            mean_qbound: sep / 1.5,
            qbound_std_err: 0.0,
            amrc_mrc_mismatches: None,
            target_reached: true,
        }
    };
    let mut points: Vec<SimPoint> = (0..=10).map(|i| point(2.0 * i as f64, 500)).collect();
    // Below the error floor: ignored even though its SEP is off the line.
    points.push(SimPoint {
        detectors: vec![DetectorStats::new(Detector::Amrc, 3, 1_000_000)],
        ..point(24.0, 3)
    });
    let fit = estimate_slope(&points, Detector::Amrc, None).unwrap();
    assert!((fit.slope - 3.0).abs() < 1e-12, "{fit:?}");
    assert_eq!(fit.rho_window_db, (14.0, 20.0));
    assert_eq!(fit.points_used, 4);
    let all = estimate_slope(&points, Detector::Amrc, Some((0.0, 30.0))).unwrap();
    assert_eq!(all.points_used, 11);
    assert!(estimate_slope(&points, Detector::Mrc, None).is_err());
}

#[test]
fn sep_decreases_with_snr() {
    let config = fixed_budget(
        SimConfig::new(2, 4, 3, vec![0.0, 5.0, 10.0, 15.0], exponential(0.5), 23),
        5_000,
        100_000,
    );
    let points = run_sweep(&config).unwrap();
    for d in Detector::ALL {
        for w in points.windows(2) {
            let (a, b) = (w[0].stats(d).unwrap(), w[1].stats(d).unwrap());
            assert!(b.ci_high < a.ci_low, "{d:?} at {} dB", w[1].rho_db);
        }
    }
}

/// Empirical `d log P(T ≤ t) / d log t` between the 0.1% and 1% quantiles.
fn tail_exponent(antennas: usize, order: usize, bits: u32, seed: u64) -> f64 {
    let model = ChannelModel::build(&CorrelationSpec::Identity, antennas).unwrap();
    let mut rng = RngStream::new(seed, stream_id(&[4]));
    let draws = 1_000_000;
    let mut t: Vec<f64> = (0..draws)
        .map(|_| {
            bound_statistics(&sample_channel(&model, &mut rng), order, bits)
                .unwrap()
                .t
        })
        .collect();
    t.sort_by(f64::total_cmp);
    let (t1, t2) = (t[draws / 1000], t[draws / 100]);
    1.0 / (t2 / t1).log10()
}

#[test]
fn bound_statistic_tail_matches_diversity() {
    // P(T ≤ t) ~ t^{2N} when M < 2^n and t^N when M = 2^n.
    for (antennas, order, bits, expected) in [
        (1usize, 4usize, 3u32, 2.0),
        (2, 8, 4, 4.0),
        (2, 8, 3, 2.0),
        (3, 4, 2, 3.0),
    ] {
        let e = tail_exponent(antennas, order, bits, 29 + antennas as u64);
        assert!(
            (e - expected).abs() < 0.7,
            "N={antennas} M={order} n={bits}: {e}"
        );
    }
}

#[test]
fn mirror_matches_amrc_and_mutant_is_caught() {
    let config = SimConfig::new(3, 8, 4, vec![8.0], exponential(0.7), 31);
    let faithful = equivalence_test(&config, 8.0, 200_000).unwrap();
    assert!(faithful.z.abs() < 4.0, "{faithful:?}");
    assert!(faithful.lhs.errors > 1_000);
    let mutant = equivalence_test_with(
        &config,
        8.0,
        200_000,
        qsep_core::constellation::NearestPhase,
        MirrorVariant::ConjugateDropped,
    )
    .unwrap();
    assert!(mutant.z.abs() > 4.0, "{mutant:?}");
    assert!(equivalence_test(&config, 8.0, 1_000).is_err());
}

#[test]
fn conditional_sep_within_single_antenna_bracket() {
    let config = SimConfig::new(3, 8, 4, vec![10.0], exponential(0.7), 37);
    let entries = eta_bracket_check(&config, 10.0, 4, 20_000, 2.0).unwrap();
    assert_eq!(entries.len(), 4);
    for e in &entries {
        assert!(e.eta > 0.0 && e.upper > e.lower);
        assert!(e.ok, "{e:?}");
    }
    // Replays exactly.
    assert_eq!(
        entries,
        eta_bracket_check(&config, 10.0, 4, 20_000, 2.0).unwrap()
    );
}

#[test]
fn random_streams_are_reproducible_per_seed() {
    let mut a = RngStream::new(41, stream_id(&[1]));
    let mut b = RngStream::new(41, stream_id(&[1]));
    let xs: Vec<f64> = (0..10).map(|_| a.random()).collect();
    let ys: Vec<f64> = (0..10).map(|_| b.random()).collect();
    assert_eq!(xs, ys);
}
