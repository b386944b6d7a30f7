//! Closed-form cosinor fits against a brute-force least-squares search and
//! the F distribution from an independent statistics library.

mod common;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use circaphase::{fit_cosinor, seed};

use common::{circ_diff, grid_oracle, sse};

#[test]
fn closed_form_matches_grid_search() {
    let m = 16;
    let mut rng = seed::rng(seed::derive(5, "cosinor-oracle"));
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut worst = [0.0f64; 4];
    for protein in 0..100 {
        let phases: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
        let (l, a, psi) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..2.0),
            rng.random_range(0.0..TAU),
        );
        let x: Vec<f64> = phases
            .iter()
            .map(|p| l + a * (p + psi).cos() + noise.sample(&mut rng))
            .collect();
        let fit = fit_cosinor(&x, &phases, 1.0).unwrap();
        let (gl, ga, gp) = grid_oracle(&x, &phases);

        let mean = x.iter().sum::<f64>() / m as f64;
        let sst: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let r2 = 1.0 - sse(&x, &phases, gl, ga, gp) / sst;

        let d = [
            (fit.params.mesor - gl).abs(),
            (fit.params.amplitude - ga).abs(),
            circ_diff(fit.params.acrophase, gp),
            (fit.r_squared - r2).abs(),
        ];
        for (w, v) in worst.iter_mut().zip(d) {
            *w = w.max(v);
        }
        assert!(
            d[0] <= 2e-3 && d[1] <= 2e-3 && d[2] <= 2e-3,
            "protein {protein}: {d:?}"
        );
        assert!(d[3] <= 1e-6, "protein {protein}: R² off by {}", d[3]);
    }
    eprintln!("worst |ΔL|, |ΔA|, |Δφ|, |ΔR²| = {worst:?}");
}

#[test]
fn p_value_matches_f_distribution() {
    let mut rng = seed::rng(9);
    let noise = Normal::new(0.0, 1.0).unwrap();
    for m in [6usize, 10, 16, 24] {
        let phases: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
        let x: Vec<f64> = phases
            .iter()
            .map(|p| 0.4 * (p + 1.0).cos() + noise.sample(&mut rng))
            .collect();
        let fit = fit_cosinor(&x, &phases, 1.0).unwrap();
        let df2 = (m - 3) as f64;
        let f = (fit.r_squared / 2.0) / ((1.0 - fit.r_squared) / df2);
        let want = 1.0 - FisherSnedecor::new(2.0, df2).unwrap().cdf(f);
        assert!(
            (fit.p_value - want).abs() <= 1e-9 * want.max(1e-3),
            "m={m}: {} vs {want}",
            fit.p_value
        );
    }
}

#[test]
fn exact_model_on_even_grid() {
    let phases: Vec<f64> = (0..12).map(|k| TAU * k as f64 / 12.0).collect();
    let x: Vec<f64> = phases
        .iter()
        .map(|p| 2.0 + 1.5 * (p + PI / 3.0).cos())
        .collect();
    let fit = fit_cosinor(&x, &phases, 1.0).unwrap();
    assert!((fit.params.mesor - 2.0).abs() < 1e-9);
    assert!((fit.params.amplitude - 1.5).abs() < 1e-9);
    assert!((fit.params.acrophase - PI / 3.0).abs() < 1e-9);
    assert!((fit.r_squared - 1.0).abs() < 1e-9);
    assert!(fit.p_value < 1e-9);
}

#[test]
fn ultradian_fit_at_period_twelve() {
    // With ω = 2 the model repeats twice per day.
    let phases: Vec<f64> = (0..24).map(|k| TAU * k as f64 / 24.0).collect();
    let x: Vec<f64> = phases
        .iter()
        .map(|p| 1.0 + 0.8 * (2.0 * p + 0.5).cos())
        .collect();
    let fit = fit_cosinor(&x, &phases, 2.0).unwrap();
    assert!((fit.params.amplitude - 0.8).abs() < 1e-9);
    assert!((fit.params.acrophase - 0.5).abs() < 1e-9);
    assert!((fit.params.period_hours() - 12.0).abs() < 1e-12);
}
