//! Moment and replay checks on the random streams and the channel sampler.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use qsep_core::channel::{
    sample_channel, sample_noise, sample_symbol, stream_id, ChannelModel, CorrelationSpec,
    RngStream,
};
use qsep_core::linalg::ComplexMatrix;
use qsep_core::montecarlo::random_covariance;

const DRAWS: usize = 1_000_000;

fn exponential(alpha: f64, phi: f64) -> CorrelationSpec {
    CorrelationSpec::Exponential { alpha, phi }
}

/// Sample covariance and the standard error of each entry.
fn sample_covariance(model: &ChannelModel, seed: u64, draws: usize) -> (ComplexMatrix, Vec<f64>) {
    let n = model.antennas();
    let mut rng = RngStream::new(seed, stream_id(&[1, 2, 3]));
    let mut sum = vec![Complex64::new(0.0, 0.0); n * n];
    let mut sq = vec![0.0; n * n];
    for _ in 0..draws {
        let h = sample_channel(model, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let v = h[i] * h[j].conj();
                sum[i * n + j] += v;
                sq[i * n + j] += v.norm_sqr();
            }
        }
    }
    let d = draws as f64;
    let mean = ComplexMatrix::from_fn(n, n, |i, j| sum[i * n + j] / d);
    let se = (0..n * n)
        .map(|k| ((sq[k] / d - (sum[k] / d).norm_sqr()) / d).sqrt())
        .collect();
    (mean, se)
}

#[test]
fn identity_power_is_unit() {
    let model = ChannelModel::build(&CorrelationSpec::Identity, 4).unwrap();
    let (k, _) = sample_covariance(&model, 11, DRAWS);
    for i in 0..4 {
        assert!((k[(i, i)].re - 1.0).abs() < 0.005, "{}", k[(i, i)]);
    }
}

#[test]
fn exponential_cross_correlation() {
    let model = ChannelModel::build(&exponential(0.7, FRAC_PI_4), 2).unwrap();
    let (k, _) = sample_covariance(&model, 12, DRAWS);
    // E[h_1 conj(h_2)] = K_12 = α e^{-jφ}.
    let expected = Complex64::from_polar(0.7, -FRAC_PI_4);
    assert!((k[(0, 1)] - expected).norm() <= 0.02 * 0.7, "{}", k[(0, 1)]);
}

#[test]
fn sample_covariance_converges_for_random_k() {
    let mut rng = RngStream::new(13, stream_id(&[99]));
    for _ in 0..3 {
        let target = random_covariance(3, &mut rng);
        let model = ChannelModel::from_covariance(target.clone()).unwrap();
        let (k, se) = sample_covariance(&model, 14, DRAWS);
        for i in 0..3 {
            for j in 0..3 {
                let err = (k[(i, j)] - target[(i, j)]).norm();
                assert!(
                    err <= 3.0 * se[i * 3 + j],
                    "({i},{j}) {err} vs {}",
                    se[i * 3 + j]
                );
            }
        }
    }
}

#[test]
fn exponential_model_shape() {
    let m = ChannelModel::build(&exponential(0.0, 1.3), 5).unwrap();
    assert_eq!(m.covariance(), &ComplexMatrix::identity(5));
    let m = ChannelModel::build(&exponential(0.7, FRAC_PI_4), 2).unwrap();
    let k = m.covariance();
    assert!((k[(0, 1)] - Complex64::from_polar(0.7, -FRAC_PI_4)).norm() < 1e-15);
    assert!((k[(1, 0)] - Complex64::from_polar(0.7, FRAC_PI_4)).norm() < 1e-15);
    let m = ChannelModel::build(&exponential(0.9, FRAC_PI_4), 4).unwrap();
    for i in 0..4 {
        assert_eq!(m.covariance()[(i, i)], Complex64::new(1.0, 0.0));
    }
    assert!((m.det() - 0.006859).abs() < 1e-12);
    assert_eq!(
        ChannelModel::build(&CorrelationSpec::Identity, 4)
            .unwrap()
            .det(),
        1.0
    );
}

#[test]
fn noise_is_circular_unit_variance() {
    let mut rng = RngStream::new(21, stream_id(&[5]));
    let (mut power, mut pseudo, mut cross) = (0.0, Complex64::new(0.0, 0.0), 0.0);
    for _ in 0..DRAWS {
        let n = sample_noise(1, &mut rng)[0];
        power += n.norm_sqr();
        pseudo += n * n;
        cross += n.re * n.im;
    }
    let d = DRAWS as f64;
    assert!((power / d - 1.0).abs() < 0.005);
    assert!((pseudo / d).norm() < 0.005);
    // Correlation of real and imaginary parts; each has variance 1/2.
    assert!((cross / d / 0.5).abs() < 0.005);
}

#[test]
fn symbols_are_uniform() {
    let mut rng = RngStream::new(22, stream_id(&[6]));
    let mut counts = [0u64; 4];
    for _ in 0..DRAWS {
        counts[sample_symbol(4, &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / DRAWS as f64 - 0.25).abs() < 0.002, "{counts:?}");
    }
    let mut rng = RngStream::new(22, stream_id(&[7]));
    assert!((0..1000).all(|_| sample_symbol(2, &mut rng) < 2));
}

#[test]
fn streams_replay_and_separate() {
    let model = ChannelModel::build(&exponential(0.5, 0.3), 3).unwrap();
    let draw = |seed, id| {
        let mut rng = RngStream::new(seed, id);
        (0..50)
            .map(|_| sample_channel(&model, &mut rng))
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(1, 10), draw(1, 10));
    assert_ne!(draw(1, 10), draw(1, 11));
    assert_ne!(draw(1, 10), draw(2, 10));

    // Interleaving draws from other streams leaves a stream untouched.
    let mut a = RngStream::new(3, stream_id(&[0, 1]));
    let mut b = RngStream::new(3, stream_id(&[0, 2]));
    let mut solo = RngStream::new(3, stream_id(&[0, 1]));
    for _ in 0..100 {
        let _ = b.complex_normal();
        assert_eq!(a.complex_normal(), solo.complex_normal());
    }
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let mut a = RngStream::new(4, stream_id(&[0, 0, 0, 1]));
    let mut b = RngStream::new(4, stream_id(&[0, 0, 0, 2]));
    let mut acc = Complex64::new(0.0, 0.0);
    for _ in 0..DRAWS {
        acc += a.complex_normal() * b.complex_normal().conj();
    }
    // Standard error of the mean product is 1/sqrt(draws).
    assert!((acc / DRAWS as f64).norm() < 4.0 / (DRAWS as f64).sqrt());
}
