//! Property suites for the identifiability and monotonicity invariants.

use std::f64::consts::TAU;

use proptest::prelude::*;

use circaphase::evalharness::DEFAULT_GRID_STEP;
use circaphase::finetune::tv_regularizer;
use circaphase::phase::{code_angle, wrap_angle, wrap_hours};
use circaphase::{align, benjamini_hochberg, fit_cosinor, roc, PhaseVector};

fn circ(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

fn hours_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..24.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn atan2_scale_invariance(s in -5.0..5.0f64, c in -5.0..5.0f64, k in 1e-3..1e3f64) {
        prop_assume!(s.hypot(c) > 1e-6);
        prop_assert!(circ(code_angle(k * s, k * c), code_angle(s, c)) < 1e-12);
    }

    #[test]
    fn phases_lie_in_range(s in -5.0..5.0f64, c in -5.0..5.0f64) {
        let p = code_angle(s, c);
        prop_assert!((0.0..TAU).contains(&p));
    }

    #[test]
    fn acrophase_shift_equivariance(
        phases in prop::collection::vec(0.0..TAU, 8..24),
        amp in 0.3..2.0f64,
        psi in 0.0..TAU,
        delta in 0.0..TAU,
        noise in prop::collection::vec(-0.2..0.2f64, 24),
    ) {
        let x: Vec<f64> = phases
            .iter()
            .zip(&noise)
            .map(|(p, e)| 1.0 + amp * (p + psi).cos() + e)
            .collect();
        let shifted: Vec<f64> = phases.iter().map(|p| wrap_angle(p + delta)).collect();
        let a = fit_cosinor(&x, &phases, 1.0).unwrap();
        let b = fit_cosinor(&x, &shifted, 1.0).unwrap();
        prop_assume!(!a.degenerate && a.params.amplitude > 1e-3);
        prop_assert!((a.params.mesor - b.params.mesor).abs() < 1e-8);
        prop_assert!((a.params.amplitude - b.params.amplitude).abs() < 1e-8);
        prop_assert!((a.r_squared - b.r_squared).abs() < 1e-8);
        prop_assert!(circ(b.params.acrophase, a.params.acrophase - delta) < 1e-7);
    }

    #[test]
    fn align_is_rotation_invariant(
        truth in hours_vec(3..30),
        noise in prop::collection::vec(-3.0..3.0f64, 30),
        delta in 0.0..24.0f64,
    ) {
        let pred: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| wrap_hours(t + e)).collect();
        let rotated: Vec<f64> = pred.iter().map(|p| wrap_hours(p + delta)).collect();
        let a = align(&PhaseVector::from_hours(pred), &truth).unwrap();
        let b = align(&PhaseVector::from_hours(rotated), &truth).unwrap();
        prop_assert!((a.mean_error() - b.mean_error()).abs() < 1e-9);
        for (x, y) in a.per_sample_error_hours.iter().zip(&b.per_sample_error_hours) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn align_never_worse_than_identity(truth in hours_vec(3..30), pred in hours_vec(30..31)) {
        let pred = &pred[..truth.len()];
        let baseline = pred
            .iter()
            .zip(&truth)
            .map(|(p, t)| { let d = (p - t).abs() % 24.0; d.min(24.0 - d) })
            .sum::<f64>() / truth.len() as f64;
        let a = align(&PhaseVector::from_hours(pred.iter().copied()), &truth).unwrap();
        prop_assert!(a.mean_error() <= baseline + 1e-9);
    }

    #[test]
    fn reflection_and_rotation_score_perfectly(truth in hours_vec(3..30), delta in 0.0..24.0f64) {
        for sign in [1.0, -1.0] {
            let pred = truth.iter().map(|t| wrap_hours(sign * t + delta));
            let a = align(&PhaseVector::from_hours(pred), &truth).unwrap();
            let r = roc(&a, DEFAULT_GRID_STEP).unwrap();
            prop_assert!(a.mean_error() < 1e-9);
            prop_assert!(r.nauc > 1.0 - 1e-9);
        }
    }

    #[test]
    fn roc_is_monotone_and_bounded(truth in hours_vec(3..30), pred in hours_vec(30..31)) {
        let pred = &pred[..truth.len()];
        let a = align(&PhaseVector::from_hours(pred.iter().copied()), &truth).unwrap();
        let r = roc(&a, DEFAULT_GRID_STEP).unwrap();
        prop_assert!(r.fraction_correct.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*r.fraction_correct.last().unwrap(), 1.0);
        prop_assert_eq!(*r.error_grid_hours.last().unwrap(), 12.0);
        prop_assert!((0.0..=1.0).contains(&r.nauc));
        prop_assert!((r.nauc - (1.0 - a.mean_error() / 12.0)).abs() < 1e-9);
    }

    #[test]
    fn bh_q_values_dominate_and_preserve_order(p in prop::collection::vec(0.0..=1.0f64, 1..60)) {
        let q = benjamini_hochberg(&p).unwrap();
        for i in 0..p.len() {
            prop_assert!(q[i] >= p[i] && q[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(q[i] <= q[j]);
                }
            }
        }
    }

    #[test]
    fn tv_is_permutation_invariant(
        phases in prop::collection::vec(0.0..TAU, 2..40),
        seed in any::<u64>(),
    ) {
        let mut shuffled = phases.clone();
        let mut rng = circaphase::seed::rng(seed);
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(tv_regularizer(&phases), tv_regularizer(&shuffled));
    }
}
