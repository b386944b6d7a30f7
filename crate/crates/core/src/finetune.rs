//! Joint fine-tuning of the phase encoder and per-protein cosine models,
//! outlier screening, and the end-to-end prediction pipeline.
//!
//! The objective is
//!
//! ```text
//! loss = 1/(m·n) Σ_i Σ_p |x_ip − x̂_ip|^q + λ·R(Θ)
//! x̂_ip = L_p + A_p·cos(ω_p·φ_i + ψ_p)
//! φ_i  = atan2(s_i, c_i) mod 2π,  (s_i, c_i) = encoder(x_i)
//! ```
//!
//! Gradients reach the encoder through the angle of its 2-unit output.

use std::fmt;
use std::str::FromStr;

use log::{debug, info, warn};
use ndarray::{Array2, Axis};

use crate::cosinor::{call_rhythms, AmplitudeScale, CosinorParams, RhythmCall, RhythmThresholds};
use crate::dataio::NormalizedMatrix;
use crate::error::{Error, Result};
use crate::phase::PhaseVector;
use crate::pretrain::{
    initial_cosinor, phases_from_code, pretrain_stack, EncoderStack, PretrainConfig,
};
use crate::seed;
use crate::tensornet::{
    backward, epoch_batches, flatten_params, forward, unflatten_params, OptimizerConfig,
    OptimizerState,
};

/// Code vectors with squared norm below this contribute no phase gradient.
pub const ORIGIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    #[default]
    None,
    /// Absolute values of encoder weights, mesors and amplitudes.
    L1,
    /// Squares of encoder weights, mesors and amplitudes.
    L2,
    /// Total variation of the sorted sample phases.
    Tv,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::None => "none",
            Regularizer::L1 => "l1",
            Regularizer::L2 => "l2",
            Regularizer::Tv => "tv",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Regularizer::None),
            "l1" => Ok(Regularizer::L1),
            "l2" => Ok(Regularizer::L2),
            "tv" => Ok(Regularizer::Tv),
            _ => Err(Error::InvalidArgument(format!("unknown regularizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMode {
    /// Every protein keeps ω = 1 (24 h).
    Fixed,
    /// ω is learned and projected back into `[lo, hi]` after each step.
    Learnable { lo: f64, hi: f64 },
}

impl OmegaMode {
    pub fn learnable() -> Self {
        OmegaMode::Learnable { lo: 0.5, hi: 3.0 }
    }

    pub fn is_learnable(&self) -> bool {
        matches!(self, OmegaMode::Learnable { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneModel {
    pub encoder: EncoderStack,
    pub cosinor: Vec<CosinorParams>,
    pub q_norm: f64,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub omega_mode: OmegaMode,
}

/// Sum of consecutive gaps of the sorted phases.
pub fn tv_regularizer(phases: &[f64]) -> f64 {
    let mut sorted = phases.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Debug, Clone)]
pub struct LossEval {
    pub total: f64,
    /// Data term without the penalty.
    pub fit: f64,
    pub penalty: f64,
    /// Signed residuals `x − x̂`, `m × n`.
    pub residuals: Array2<f64>,
    pub phases: PhaseVector,
    /// Samples whose code sits at the origin.
    pub degenerate: usize,
}

/// Gradient of the fine-tuning loss, mirroring [`FineTuneModel`].
#[derive(Debug, Clone)]
pub struct ModelGradient {
    pub encoder: crate::tensornet::Gradients,
    pub mesor: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub acrophase: Vec<f64>,
    pub omega: Vec<f64>,
}

impl ModelGradient {
    /// Same layout as [`FineTuneModel::flatten`].
    pub fn flatten(&self, learn_omega: bool) -> Vec<f64> {
        let mut out = Vec::new();
        self.encoder.flatten_into(&mut out);
        out.extend(&self.mesor);
        out.extend(&self.amplitude);
        out.extend(&self.acrophase);
        if learn_omega {
            out.extend(&self.omega);
        }
        out
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl FineTuneModel {
    pub fn new(encoder: EncoderStack, cosinor: Vec<CosinorParams>) -> Self {
        FineTuneModel {
            encoder,
            cosinor,
            q_norm: 1.0,
            lambda: 0.0,
            regularizer: Regularizer::None,
            omega_mode: OmegaMode::Fixed,
        }
    }

    pub fn validate(&self, data: &NormalizedMatrix) -> Result<()> {
        if !(self.q_norm > 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "q_norm must be positive and lambda non-negative (q={}, lambda={})",
                self.q_norm, self.lambda
            )));
        }
        if self.encoder.in_dim() != data.n_proteins() || self.cosinor.len() != data.n_proteins() {
            return Err(Error::Shape(format!(
                "model expects {} inputs and {} proteins, data has {}",
                self.encoder.in_dim(),
                self.cosinor.len(),
                data.n_proteins()
            )));
        }
        if self.encoder.layer_sizes().last() != Some(&2) {
            return Err(Error::Shape("encoder must end in a 2-unit code".into()));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        flatten_params(&self.encoder.layers, &mut out);
        out.extend(self.cosinor.iter().map(|c| c.mesor));
        out.extend(self.cosinor.iter().map(|c| c.amplitude));
        out.extend(self.cosinor.iter().map(|c| c.acrophase));
        if self.omega_mode.is_learnable() {
            out.extend(self.cosinor.iter().map(|c| c.omega));
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut at = unflatten_params(&mut self.encoder.layers, flat);
        let n = self.cosinor.len();
        for (p, c) in self.cosinor.iter_mut().enumerate() {
            c.mesor = flat[at + p];
            c.amplitude = flat[at + n + p];
            c.acrophase = flat[at + 2 * n + p];
        }
        at += 3 * n;
        if self.omega_mode.is_learnable() {
            for (p, c) in self.cosinor.iter_mut().enumerate() {
                c.omega = flat[at + p];
            }
        }
    }

    /// Canonical form after an optimizer step: `A ≥ 0`, acrophase wrapped,
    /// ω projected into its allowed range.
    pub fn reparameterize(&mut self) {
        for c in &mut self.cosinor {
            c.canonicalize();
            match self.omega_mode {
                OmegaMode::Fixed => {}
                OmegaMode::Learnable { lo, hi } => c.omega = c.omega.clamp(lo, hi),
            }
        }
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.cosinor.iter().map(|c| c.amplitude).collect()
    }

    fn penalty(&self, phases: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        let cos = self.cosinor.iter();
        let weights = self.encoder.layers.iter().flat_map(|l| l.weights.iter());
        let r = match self.regularizer {
            Regularizer::None => 0.0,
            Regularizer::L1 => {
                weights.map(|w| w.abs()).sum::<f64>()
                    + cos.map(|c| c.mesor.abs() + c.amplitude.abs()).sum::<f64>()
            }
            Regularizer::L2 => {
                weights.map(|w| w * w).sum::<f64>()
                    + cos
                        .map(|c| c.mesor * c.mesor + c.amplitude * c.amplitude)
                        .sum::<f64>()
            }
            Regularizer::Tv => tv_regularizer(phases),
        };
        self.lambda * r
    }
}

/// Sample phases from the encoder's 2-unit output.
pub fn predict_phases(model: &FineTuneModel, data: &NormalizedMatrix) -> Result<PhaseVector> {
    model.validate(data)?;
    Ok(model.encoder.phases(data.values())?.0)
}

fn residual_matrix(model: &FineTuneModel, x: &Array2<f64>, phases: &[f64]) -> Array2<f64> {
    let mut r = Array2::zeros(x.dim());
    for (p, c) in model.cosinor.iter().enumerate() {
        for (i, &phi) in phases.iter().enumerate() {
            r[[i, p]] = x[[i, p]] - c.evaluate(phi);
        }
    }
    r
}

fn fit_term(residuals: &Array2<f64>, q: f64) -> f64 {
    let n = residuals.len() as f64;
    let s: f64 = if q == 1.0 {
        residuals.iter().map(|r| r.abs()).sum()
    } else {
        residuals.iter().map(|r| r.abs().powf(q)).sum()
    };
    s / n
}

/// Evaluates the loss and returns the signed residuals.
pub fn loss(model: &FineTuneModel, data: &NormalizedMatrix) -> Result<LossEval> {
    model.validate(data)?;
    let (phases, degenerate) = model.encoder.phases(data.values())?;
    let residuals = residual_matrix(model, data.values(), &phases);
    let fit = fit_term(&residuals, model.q_norm);
    let penalty = model.penalty(&phases);
    let total = fit + penalty;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            stage: "loss",
            epoch: 0,
        });
    }
    Ok(LossEval {
        total,
        fit,
        penalty,
        residuals,
        phases,
        degenerate,
    })
}

/// Loss together with its gradient with respect to every parameter group.
pub fn loss_and_gradient(
    model: &FineTuneModel,
    data: &NormalizedMatrix,
) -> Result<(LossEval, ModelGradient)> {
    model.validate(data)?;
    gradient_on(model, data.values())
}

// Loss and gradient on the rows of `x`, which must match the model width.
fn gradient_on(model: &FineTuneModel, x: &Array2<f64>) -> Result<(LossEval, ModelGradient)> {
    let (m, n) = x.dim();
    let acts = forward(&model.encoder.layers, x)?;
    let code = acts.last().expect("validated non-empty encoder");
    let (phases, degenerate) = phases_from_code(code);
    let residuals = residual_matrix(model, x, &phases);
    let fit = fit_term(&residuals, model.q_norm);
    let penalty = model.penalty(&phases);
    let total = fit + penalty;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            stage: "loss",
            epoch: 0,
        });
    }

    let q = model.q_norm;
    let scale = 1.0 / (m * n) as f64;
    let mut g_mesor = vec![0.0; n];
    let mut g_amp = vec![0.0; n];
    let mut g_acro = vec![0.0; n];
    let mut g_omega = vec![0.0; n];
    let mut g_phase = vec![0.0; m];
    for (p, c) in model.cosinor.iter().enumerate() {
        for i in 0..m {
            let r = residuals[[i, p]];
            // ∂loss/∂r
            let g = if q == 1.0 {
                sign(r)
            } else {
                q * r.abs().powf(q - 1.0) * sign(r)
            } * scale;
            if g == 0.0 {
                continue;
            }
            let arg = c.omega * phases[i] + c.acrophase;
            let (s, cs) = arg.sin_cos();
            // x̂ enters the loss with a minus sign
            g_mesor[p] -= g;
            g_amp[p] -= g * cs;
            let ga_sin = g * c.amplitude * s;
            g_acro[p] += ga_sin;
            g_omega[p] += ga_sin * phases[i];
            g_phase[i] += ga_sin * c.omega;
        }
    }

    let lambda = model.lambda;
    if lambda > 0.0 {
        match model.regularizer {
            Regularizer::Tv if m >= 2 => {
                let (imin, imax) = argmin_argmax(&phases);
                g_phase[imax] += lambda;
                g_phase[imin] -= lambda;
            }
            Regularizer::L1 => {
                for (p, c) in model.cosinor.iter().enumerate() {
                    g_mesor[p] += lambda * sign(c.mesor);
                    g_amp[p] += lambda * sign(c.amplitude);
                }
            }
            Regularizer::L2 => {
                for (p, c) in model.cosinor.iter().enumerate() {
                    g_mesor[p] += 2.0 * lambda * c.mesor;
                    g_amp[p] += 2.0 * lambda * c.amplitude;
                }
            }
            _ => {}
        }
    }

    // φ = atan2(s, c): ∂φ/∂s = c/(s²+c²), ∂φ/∂c = −s/(s²+c²)
    let mut code_grad = Array2::zeros((m, 2));
    for i in 0..m {
        let (s, c) = (code[[i, 0]], code[[i, 1]]);
        let r2 = s * s + c * c;
        if r2 < ORIGIN_EPS {
            continue;
        }
        code_grad[[i, 0]] = g_phase[i] * c / r2;
        code_grad[[i, 1]] = -g_phase[i] * s / r2;
    }
    let mut enc = backward(&model.encoder.layers, x, &acts, &code_grad)?;
    if lambda > 0.0 {
        for (lg, layer) in enc.layers.iter_mut().zip(&model.encoder.layers) {
            match model.regularizer {
                Regularizer::L1 => lg
                    .weights
                    .zip_mut_with(&layer.weights, |g, &w| *g += lambda * sign(w)),
                Regularizer::L2 => lg
                    .weights
                    .zip_mut_with(&layer.weights, |g, &w| *g += 2.0 * lambda * w),
                _ => {}
            }
        }
    }

    Ok((
        LossEval {
            total,
            fit,
            penalty,
            residuals,
            phases,
            degenerate,
        },
        ModelGradient {
            encoder: enc,
            mesor: g_mesor,
            amplitude: g_amp,
            acrophase: g_acro,
            omega: g_omega,
        },
    ))
}

fn argmin_argmax(v: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[imin] {
            imin = i;
        }
        if x > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    /// Loss at the start of each epoch.
    pub loss_history: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
    pub phases: PhaseVector,
    /// Total count of (sample, epoch) pairs whose code sat at the origin.
    pub degenerate_cells: usize,
}

/// Joint gradient descent over `epochs` passes through the samples.
///
/// `batch_size = None` takes one full-batch step per epoch; otherwise each
/// epoch shuffles the samples (seeded by `seed`) and steps once per
/// minibatch. The recorded loss is the full-data loss at the start of each
/// epoch. On a non-finite loss or gradient the model is restored to the
/// last finite parameters and an error is returned.
pub fn finetune(
    model: &mut FineTuneModel,
    data: &NormalizedMatrix,
    epochs: usize,
    optimizer: &OptimizerConfig,
    batch_size: Option<usize>,
    seed: u64,
) -> Result<FineTuneOutcome> {
    optimizer.validate()?;
    model.validate(data)?;
    model.reparameterize();
    let learn_omega = model.omega_mode.is_learnable();
    let x = data.values();
    let mut rng = seed::rng(seed);
    let mut params = model.flatten();
    let mut opt = OptimizerState::new(*optimizer, params.len());
    let mut loss_history = Vec::with_capacity(epochs);
    let mut degenerate_cells = 0;
    let mut last_good = params.clone();
    let non_finite = |model: &mut FineTuneModel, last_good: &[f64], epoch| {
        model.unflatten(last_good);
        Error::NonFinite {
            stage: "finetune",
            epoch,
        }
    };
    for epoch in 0..epochs {
        let batches = epoch_batches(x.nrows(), batch_size, &mut rng);
        for (k, rows) in batches.iter().enumerate() {
            let step = if batches.len() == 1 {
                gradient_on(model, x)
            } else {
                gradient_on(model, &x.select(Axis(0), rows))
            };
            let (eval, grad) = match step {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => {
                    return Err(non_finite(model, &last_good, epoch));
                }
                Err(e) => return Err(e),
            };
            if k == 0 {
                let full = if batches.len() == 1 {
                    eval.total
                } else {
                    loss(model, data)
                        .map_err(|_| non_finite(model, &last_good, epoch))?
                        .total
                };
                loss_history.push(full);
                debug!("finetune epoch {epoch}: loss {full:.6} d {:.3e}", opt.d());
            }
            degenerate_cells += eval.degenerate;
            let flat_grad = grad.flatten(learn_omega);
            last_good.clone_from(&params);
            if opt.step(&mut params, &flat_grad).is_err() {
                return Err(non_finite(model, &last_good, epoch));
            }
            model.unflatten(&params);
            model.reparameterize();
            params = model.flatten();
        }
    }
    let end = loss(model, data).map_err(|_| non_finite(model, &last_good, epochs))?;
    Ok(FineTuneOutcome {
        loss_history,
        final_loss: end.total,
        phases: end.phases,
        degenerate_cells,
    })
}

/// Statistic averaged per sample and per protein for outlier screening.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutlierStat {
    #[default]
    Signed,
    Absolute,
}

impl fmt::Display for OutlierStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutlierStat::Signed => "signed",
            OutlierStat::Absolute => "absolute",
        })
    }
}

impl FromStr for OutlierStat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(OutlierStat::Signed),
            "absolute" => Ok(OutlierStat::Absolute),
            _ => Err(Error::InvalidArgument(format!(
                "unknown outlier statistic {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub sample_outliers: Vec<Flagged>,
    /// Proteins past the 2σ rule, before the amplitude rescreen.
    pub protein_candidates: Vec<Flagged>,
    pub protein_outliers: Vec<Flagged>,
    /// Mean and standard deviation of the per-sample statistic.
    pub sample_stats: (f64, f64),
    pub protein_stats: (f64, f64),
    pub amplitude_75th_percentile: f64,
}

// Summing in sorted order makes the result independent of input order.
fn ordered_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let mean = ordered_mean(values.iter().copied());
    let var = ordered_mean(values.iter().map(|v| (v - mean).powi(2)));
    (mean, var.sqrt())
}

/// Linear-interpolation percentile (`q` in `[0, 1]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Two-level screen: 2σ rule on per-sample and per-protein mean residuals,
/// then protein candidates are confirmed only when their amplitude is below
/// the 75th percentile of all amplitudes.
pub fn screen_outliers(
    residuals: &Array2<f64>,
    amplitudes: &[f64],
    stat: OutlierStat,
) -> Result<OutlierReport> {
    let (m, n) = residuals.dim();
    if amplitudes.len() != n {
        return Err(Error::Shape(format!(
            "{} amplitudes for {n} proteins",
            amplitudes.len()
        )));
    }
    let f = |r: f64| match stat {
        OutlierStat::Signed => r,
        OutlierStat::Absolute => r.abs(),
    };
    let e: Vec<f64> = (0..m)
        .map(|i| ordered_mean(residuals.row(i).iter().map(|&r| f(r))))
        .collect();
    let d: Vec<f64> = (0..n)
        .map(|p| ordered_mean(residuals.column(p).iter().map(|&r| f(r))))
        .collect();
    let sample_stats = mean_sd(&e);
    let protein_stats = mean_sd(&d);
    let beyond = |v: &[f64], (mu, sd): (f64, f64)| -> Vec<Flagged> {
        v.iter()
            .enumerate()
            .filter(|(_, &x)| (x - mu).abs() > 2.0 * sd)
            .map(|(index, &value)| Flagged { index, value })
            .collect()
    };
    let sample_outliers = beyond(&e, sample_stats);
    let protein_candidates = beyond(&d, protein_stats);
    let amplitude_75th_percentile = percentile(amplitudes, 0.75);
    let protein_outliers = protein_candidates
        .iter()
        .copied()
        .filter(|c| amplitudes[c.index] < amplitude_75th_percentile)
        .collect();
    Ok(OutlierReport {
        sample_outliers,
        protein_candidates,
        protein_outliers,
        sample_stats,
        protein_stats,
        amplitude_75th_percentile,
    })
}

/// Whether the post-screen retraining starts from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrainMode {
    /// Pretrain and fine-tune again on the cleaned matrix.
    #[default]
    Fresh,
    /// Continue from the screened model with outlier rows and columns removed.
    FromCheckpoint,
}

impl fmt::Display for RetrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RetrainMode::Fresh => "fresh",
            RetrainMode::FromCheckpoint => "checkpoint",
        })
    }
}

impl FromStr for RetrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fresh" => Ok(RetrainMode::Fresh),
            "checkpoint" => Ok(RetrainMode::FromCheckpoint),
            _ => Err(Error::InvalidArgument(format!(
                "unknown retrain mode {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub pretrain: PretrainConfig,
    pub finetune_epochs: usize,
    pub retrain_epochs: usize,
    pub finetune_optimizer: OptimizerConfig,
    /// Samples per fine-tuning step; `None` is full batch.
    pub batch_size: Option<usize>,
    /// Independent pretrain + fine-tune runs per training stage; the run
    /// with the lowest final loss is kept.
    pub restarts: usize,
    pub q_norm: f64,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub omega_mode: OmegaMode,
    pub outlier_stat: OutlierStat,
    pub retrain_mode: RetrainMode,
    pub thresholds: RhythmThresholds,
    pub amplitude_scale: AmplitudeScale,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pretrain: PretrainConfig::default(),
            finetune_epochs: 20,
            retrain_epochs: 200,
            finetune_optimizer: OptimizerConfig::dadapt(),
            batch_size: Some(1),
            restarts: 4,
            q_norm: 1.0,
            lambda: 0.0,
            regularizer: Regularizer::None,
            omega_mode: OmegaMode::Fixed,
            outlier_stat: OutlierStat::Signed,
            retrain_mode: RetrainMode::Fresh,
            thresholds: RhythmThresholds::circadian(),
            amplitude_scale: AmplitudeScale::Raw,
        }
    }
}

/// Minimum cleaned-matrix size for retraining.
pub const MIN_SAMPLES: usize = 4;
pub const MIN_PROTEINS: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub pretrain_losses: Vec<Vec<f64>>,
    pub finetune_losses: Vec<f64>,
    pub retrain_pretrain_losses: Vec<Vec<f64>>,
    pub retrain_losses: Vec<f64>,
    pub degenerate_cells: usize,
    pub layer_sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub sample_ids: Vec<String>,
    /// One phase per input sample, outliers included.
    pub phases: PhaseVector,
    pub sample_outlier: Vec<bool>,
    pub protein_outliers: Vec<String>,
    pub report: OutlierReport,
    /// Residuals of the screened (pre-retrain) model, `m × n`.
    pub screen_residuals: Array2<f64>,
    /// Per-protein amplitudes of the screened model.
    pub screen_amplitudes: Vec<f64>,
    pub calls: Vec<RhythmCall>,
    pub model: FineTuneModel,
    pub cleaned: NormalizedMatrix,
    pub diagnostics: Diagnostics,
}

fn build_model(
    data: &NormalizedMatrix,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(FineTuneModel, Vec<Vec<f64>>)> {
    let pre = pretrain_stack(data, &cfg.pretrain, seed)?;
    let fits = initial_cosinor(data, &pre.initial.phi0)?;
    let mut model = FineTuneModel::new(pre.stack, fits.iter().map(|f| f.params).collect());
    model.q_norm = cfg.q_norm;
    model.lambda = cfg.lambda;
    model.regularizer = cfg.regularizer;
    model.omega_mode = cfg.omega_mode;
    Ok((model, pre.loss_histories))
}

struct TrainedStage {
    model: FineTuneModel,
    outcome: FineTuneOutcome,
    pretrain_losses: Vec<Vec<f64>>,
    degenerate_cells: usize,
}

// Pretrain + fine-tune from `cfg.restarts` split seeds and keep the run with
// the lowest final loss. Restarts that diverge are skipped.
fn train_best(
    data: &NormalizedMatrix,
    cfg: &PipelineConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainedStage> {
    let mut best: Option<TrainedStage> = None;
    let mut last_err = None;
    let mut degenerate_cells = 0;
    for r in 0..cfg.restarts.max(1) {
        let run_seed = seed::derive_index(seed, r as u64);
        let attempt = build_model(data, cfg, seed::derive(run_seed, "pretrain")).and_then(
            |(mut model, pretrain_losses)| {
                let outcome = finetune(
                    &mut model,
                    data,
                    epochs,
                    &cfg.finetune_optimizer,
                    cfg.batch_size,
                    seed::derive(run_seed, "finetune"),
                )?;
                Ok((model, outcome, pretrain_losses))
            },
        );
        match attempt {
            Ok((model, outcome, pretrain_losses)) => {
                debug!("restart {r}: final loss {:.6}", outcome.final_loss);
                degenerate_cells += outcome.degenerate_cells;
                if best
                    .as_ref()
                    .is_none_or(|b| outcome.final_loss < b.outcome.final_loss)
                {
                    best = Some(TrainedStage {
                        model,
                        outcome,
                        pretrain_losses,
                        degenerate_cells: 0,
                    });
                }
            }
            Err(e @ Error::NonFinite { .. }) => {
                warn!("restart {r} diverged: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(mut b) => {
            b.degenerate_cells = degenerate_cells;
            Ok(b)
        }
        None => Err(last_err.expect("at least one restart ran")),
    }
}

/// pretrain → initial cosinor → fine-tune → screen → retrain on the cleaned
/// matrix → rhythm calls.
pub fn run_pipeline(
    data: &NormalizedMatrix,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<PipelineResult> {
    cfg.thresholds.validate()?;
    let mut diag = Diagnostics::default();

    let stage = train_best(data, cfg, cfg.finetune_epochs, seed::derive(seed, "screen"))?;
    diag.pretrain_losses = stage.pretrain_losses;
    diag.finetune_losses = stage.outcome.loss_history;
    diag.degenerate_cells += stage.degenerate_cells;
    let model = stage.model;
    diag.layer_sizes = model.encoder.layer_sizes();

    let eval = loss(&model, data)?;
    let screen_amplitudes = model.amplitudes();
    let report = screen_outliers(&eval.residuals, &screen_amplitudes, cfg.outlier_stat)?;
    let mut sample_outlier = vec![false; data.n_samples()];
    for f in &report.sample_outliers {
        sample_outlier[f.index] = true;
    }
    let mut protein_drop = vec![false; data.n_proteins()];
    for f in &report.protein_outliers {
        protein_drop[f.index] = true;
    }
    let keep_samples: Vec<usize> = (0..data.n_samples())
        .filter(|&i| !sample_outlier[i])
        .collect();
    let keep_proteins: Vec<usize> = (0..data.n_proteins())
        .filter(|&p| !protein_drop[p])
        .collect();
    if keep_samples.len() < MIN_SAMPLES || keep_proteins.len() < MIN_PROTEINS {
        return Err(Error::Empty(format!(
            "cleaned matrix has {} samples and {} proteins; need at least {MIN_SAMPLES} and {MIN_PROTEINS}",
            keep_samples.len(),
            keep_proteins.len()
        )));
    }
    let cleaned = data.subset(&keep_samples, &keep_proteins)?;
    if cleaned.n_proteins() < MIN_PROTEINS {
        return Err(Error::Empty(format!(
            "cleaned matrix has {} proteins; need at least {MIN_PROTEINS}",
            cleaned.n_proteins()
        )));
    }
    info!(
        "screen flagged {} samples and {} proteins",
        report.sample_outliers.len(),
        report.protein_outliers.len()
    );

    let final_model = if cfg.retrain_epochs == 0 {
        restrict_model(&model, data, &cleaned)
    } else {
        match cfg.retrain_mode {
            RetrainMode::Fresh => {
                let stage = train_best(
                    &cleaned,
                    cfg,
                    cfg.retrain_epochs,
                    seed::derive(seed, "retrain"),
                )?;
                diag.retrain_pretrain_losses = stage.pretrain_losses;
                diag.retrain_losses = stage.outcome.loss_history;
                diag.degenerate_cells += stage.degenerate_cells;
                stage.model
            }
            RetrainMode::FromCheckpoint => {
                let mut m = restrict_model(&model, data, &cleaned);
                let out = finetune(
                    &mut m,
                    &cleaned,
                    cfg.retrain_epochs,
                    &cfg.finetune_optimizer,
                    cfg.batch_size,
                    seed::derive(seed, "retrain"),
                )?;
                diag.retrain_losses = out.loss_history;
                diag.degenerate_cells += out.degenerate_cells;
                m
            }
        }
    };

    let retained_phases = predict_phases(&final_model, &cleaned)?;
    let mut phases = vec![0.0; data.n_samples()];
    for (k, &i) in keep_samples.iter().enumerate() {
        phases[i] = retained_phases[k];
    }
    let dropped: Vec<usize> = (0..data.n_samples())
        .filter(|&i| sample_outlier[i])
        .collect();
    if !dropped.is_empty() {
        let projected = project_samples(data, &cleaned, &dropped);
        let (ph, _) = final_model.encoder.phases(&projected)?;
        for (k, &i) in dropped.iter().enumerate() {
            phases[i] = ph[k];
        }
    }

    let calls = call_rhythms(
        &cleaned,
        &retained_phases,
        &cfg.thresholds,
        cfg.amplitude_scale,
    )?;
    Ok(PipelineResult {
        sample_ids: data.sample_ids().to_vec(),
        phases: PhaseVector::from_radians(phases),
        sample_outlier,
        protein_outliers: report
            .protein_outliers
            .iter()
            .map(|f| data.protein_ids()[f.index].clone())
            .collect(),
        report,
        screen_residuals: eval.residuals,
        screen_amplitudes,
        calls,
        model: final_model,
        cleaned,
        diagnostics: diag,
    })
}

/// Drops the encoder inputs and cosine models of proteins absent from
/// `cleaned`.
fn restrict_model(
    model: &FineTuneModel,
    full: &NormalizedMatrix,
    cleaned: &NormalizedMatrix,
) -> FineTuneModel {
    let idx: Vec<usize> = cleaned
        .protein_ids()
        .iter()
        .map(|id| {
            full.protein_index(id)
                .expect("cleaned proteins come from the input")
        })
        .collect();
    let mut out = model.clone();
    let first = &mut out.encoder.layers[0];
    first.weights = first.weights.select(Axis(1), &idx);
    out.cosinor = idx.iter().map(|&p| model.cosinor[p]).collect();
    out
}

/// Re-expresses rows of `full` in the normalization of `cleaned`.
fn project_samples(
    full: &NormalizedMatrix,
    cleaned: &NormalizedMatrix,
    samples: &[usize],
) -> Array2<f64> {
    let mut out = Array2::zeros((samples.len(), cleaned.n_proteins()));
    for (j, id) in cleaned.protein_ids().iter().enumerate() {
        let p = full
            .protein_index(id)
            .expect("cleaned proteins come from the input");
        let (mu0, sd0) = (full.raw_means()[p], full.raw_sds()[p]);
        let (mu1, sd1) = (cleaned.raw_means()[j], cleaned.raw_sds()[j]);
        for (k, &i) in samples.iter().enumerate() {
            let raw = full.values()[[i, p]] * sd0 + mu0;
            out[[k, j]] = (raw - mu1) / sd1;
        }
    }
    out
}
