//! Training-progress and determinism checks on synthetic data with planted
//! rhythms.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::Rng;

use circaphase::evalharness::DEFAULT_GRID_STEP;
use circaphase::finetune::{loss, predict_phases};
use circaphase::pretrain::{initial_cosinor, train_shallow_ae};
use circaphase::tensornet::Activation;
use circaphase::{
    align, finetune, generate, pretrain_stack, roc, run_pipeline, seed, zscore, FineTuneModel,
    NormalizedMatrix, OptimizerConfig, PhaseVector, PipelineConfig, PretrainConfig, Regularizer,
    SynthSpec,
};

fn synthetic(
    m: usize,
    n: usize,
    amplitude: f64,
    noise_sd: f64,
    seed: u64,
) -> (NormalizedMatrix, Vec<f64>) {
    let spec = SynthSpec {
        m,
        n,
        amplitude_range: (amplitude, amplitude),
        noise_sd,
        seed,
        ..Default::default()
    };
    let (matrix, truth) = generate(&spec).unwrap();
    (zscore(&matrix).unwrap().0, truth.sample_hours)
}

fn pretrained_model(data: &NormalizedMatrix, seed: u64) -> FineTuneModel {
    let pre = pretrain_stack(data, &PretrainConfig::default(), seed).unwrap();
    let fits = initial_cosinor(data, &pre.initial.phi0).unwrap();
    FineTuneModel::new(pre.stack, fits.iter().map(|f| f.params).collect())
}

#[test]
fn shallow_autoencoder_reduces_reconstruction_error() {
    // Rank-4 input, 16 × 32.
    let mut rng = seed::rng(21);
    let a = Array2::from_shape_simple_fn((16, 4), || rng.random_range(-1.0..1.0));
    let b = Array2::from_shape_simple_fn((4, 32), || rng.random_range(-1.0..1.0));
    let x = a.dot(&b);
    let ae = train_shallow_ae(
        &x,
        8,
        Activation::Tanh,
        7,
        &OptimizerConfig::dadapt(),
        None,
        3,
    )
    .unwrap();
    assert_eq!(ae.loss_history.len(), 7);
    assert!(
        ae.loss_history[6] < ae.loss_history[0],
        "{:?}",
        ae.loss_history
    );
    assert_eq!(ae.hidden.dim(), (16, 8));
}

#[test]
fn pretraining_shapes_and_determinism() {
    let (data, _) = synthetic(12, 500, 1.0, 0.4, 2);
    let a = pretrain_stack(&data, &PretrainConfig::default(), 5).unwrap();
    assert_eq!(a.stack.layer_sizes(), vec![256, 64, 16, 8, 4, 2]);
    assert_eq!(a.initial.phi0.len(), 12);
    let lens: Vec<usize> = a.loss_histories.iter().map(Vec::len).collect();
    assert_eq!(lens, vec![7, 7, 7, 7, 7, 20]);
    let b = pretrain_stack(&data, &PretrainConfig::default(), 5).unwrap();
    assert_eq!(a.initial.phi0, b.initial.phi0);
}

#[test]
fn noise_proteins_fit_small_amplitudes() {
    // Phases drawn independently of the noise, as for a protein that plays
    // no part in shaping the code.
    let spec = SynthSpec {
        m: 16,
        n: 100,
        rhythmic_fraction: 0.0,
        seed: 13,
        ..Default::default()
    };
    let (matrix, _) = generate(&spec).unwrap();
    let (data, _) = zscore(&matrix).unwrap();
    let mut rng = seed::rng(14);
    let phi0 = PhaseVector::from_radians((0..16).map(|_| rng.random_range(0.0..TAU)));
    let fits = initial_cosinor(&data, &phi0).unwrap();
    let mean_a = fits.iter().map(|f| f.params.amplitude).sum::<f64>() / fits.len() as f64;
    let mean_r2 = fits.iter().map(|f| f.r_squared).sum::<f64>() / fits.len() as f64;
    eprintln!("mean amplitude {mean_a:.4}, mean R² {mean_r2:.4}");
    assert!(mean_a < 0.5, "mean amplitude {mean_a}");
    assert!(mean_r2 < 0.3, "mean R² {mean_r2}");
}

#[test]
fn finetuning_lowers_the_loss() {
    // SNR 3: amplitude 1.2 over noise sd 0.4.
    let (data, _) = synthetic(16, 200, 1.2, 0.4, 6);
    let mut model = pretrained_model(&data, 7);
    let before = loss(&model, &data).unwrap().total;
    let out = finetune(
        &mut model,
        &data,
        20,
        &OptimizerConfig::dadapt(),
        Some(1),
        8,
    )
    .unwrap();
    assert_eq!(out.loss_history.len(), 20);
    assert_eq!(out.loss_history[0], before);
    assert!(out.final_loss < before, "{before} -> {}", out.final_loss);
    assert_eq!(predict_phases(&model, &data).unwrap(), out.phases);
}

fn nauc_after_finetune(lambda: f64, seed: u64) -> f64 {
    let (data, hours) = synthetic(24, 200, 1.2, 0.4, seed);
    let mut model = pretrained_model(&data, seed::derive(seed, "pretrain"));
    model.regularizer = Regularizer::Tv;
    model.lambda = lambda;
    // Minibatches of 6 keep the phase-gap penalty active.
    let out = finetune(
        &mut model,
        &data,
        60,
        &OptimizerConfig::dadapt(),
        Some(6),
        seed::derive(seed, "finetune"),
    )
    .unwrap();
    let aligned = align(&out.phases, &hours).unwrap();
    roc(&aligned, DEFAULT_GRID_STEP).unwrap().nauc
}

#[test]
fn small_tv_penalty_changes_accuracy_little() {
    let seeds = 0..5u64;
    let diff: f64 = seeds
        .map(|s| nauc_after_finetune(1e-3, s) - nauc_after_finetune(0.0, s))
        .sum::<f64>()
        / 5.0;
    eprintln!("mean nAUC difference (TV 1e-3 minus none): {diff:+.4}");
    assert!(diff.abs() <= 0.05, "mean nAUC difference {diff}");
}

#[test]
fn pipeline_is_deterministic() {
    let (data, _) = synthetic(12, 40, 1.2, 0.4, 3);
    let cfg = PipelineConfig {
        restarts: 2,
        retrain_epochs: 10,
        ..Default::default()
    };
    let a = run_pipeline(&data, &cfg, 99).unwrap();
    let b = run_pipeline(&data, &cfg, 99).unwrap();
    assert_eq!(a.phases, b.phases);
    assert_eq!(a.sample_outlier, b.sample_outlier);
    assert_eq!(a.protein_outliers, b.protein_outliers);
    assert_eq!(a.calls, b.calls);
}
