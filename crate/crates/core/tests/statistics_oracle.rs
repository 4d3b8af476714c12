mod common;

use groupcf_core::metrics::{gap_score, paired_t_test, student_t_two_tailed};
use groupcf_core::Error;
use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StudentT};

/// Two-tailed p by Simpson integration of the t density over [0, |t|].
fn integrated_p(t: f64, df: f64) -> f64 {
    let log_c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |x: f64| (log_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut sum = density(0.0) + density(t.abs());
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * density(i as f64 * h);
    }
    1.0 - 2.0 * sum * h / 3.0
}

#[test]
fn hand_computed_statistic() {
    let r = paired_t_test(&[2.0, 3.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((r.t - 4.0).abs() < 1e-12);
    assert_eq!(r.df, 2);
    assert!((r.p_two_tailed - integrated_p(4.0, 2.0)).abs() < 1e-3);
    assert!((r.p_two_tailed - 0.0572).abs() < 1e-3);
    assert_eq!(paired_t_test(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::ZeroVariance));
    assert!(matches!(paired_t_test(&[1.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
}

#[test]
fn p_matches_numerical_integration() {
    for df in [2.0, 10.0, 39.0] {
        for t in [0.1, 0.5, 1.0, 1.3, 2.0, 3.0, 5.0] {
            let p = student_t_two_tailed(t, df);
            let q = integrated_p(t, df);
            assert!((p - q).abs() < 1e-6, "df {df}, t {t}: {p} vs {q}");
        }
    }
}

#[test]
fn p_matches_monte_carlo_tails() {
    let mut r = common::rng(77);
    for df in [2.0, 10.0, 39.0] {
        let dist = StudentT::<f64>::new(df).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut r).abs()).collect();
        for t in [0.5, 1.0, 1.3, 2.0, 3.0] {
            let tail = draws.iter().filter(|&&d| d > t).count() as f64 / draws.len() as f64;
            let p = student_t_two_tailed(t, df);
            assert!((p - tail).abs() < 0.01, "df {df}, t {t}: {p} vs {tail}");
        }
    }
}

proptest! {
    #[test]
    fn swapping_samples_negates_t(seed in any::<u64>(), n in 2usize..50) {
        let mut r = common::rng(seed);
        let xs: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let a = paired_t_test(&xs, &ys).unwrap();
        let b = paired_t_test(&ys, &xs).unwrap();
        prop_assert!((a.t + b.t).abs() <= 1e-9 * a.t.abs().max(1.0));
        prop_assert!((a.p_two_tailed - b.p_two_tailed).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.p_two_tailed));
        prop_assert_eq!(a.df, n - 1);
    }
}

proptest! {
    #[test]
    fn gap_score_counts_interlopers(seed in any::<u64>(), n in 1usize..40, k in 1usize..10) {
        let mut r = common::rng(seed);
        let mut ordering: Vec<usize> = (0..n.max(k)).collect();
        ordering.shuffle(&mut r);
        let set: Vec<usize> = ordering.choose_multiple(&mut r, k).copied().collect();
        let inside: Vec<usize> = ordering.iter().enumerate().filter(|(_, o)| set.contains(o)).map(|(i, _)| i).collect();
        let (lo, hi) = (inside[0], *inside.last().unwrap());
        let interlopers = ordering[lo..=hi].iter().filter(|o| !set.contains(o)).count();
        prop_assert_eq!(gap_score(&ordering, &set).unwrap(), interlopers);
        let window = &ordering[lo..lo + k.min(ordering.len() - lo)];
        prop_assert_eq!(gap_score(&ordering, window).unwrap(), 0);
    }
}
