//! Greedy layer-wise pretraining of the phase encoder.
//!
//! Each stage trains a shallow autoencoder (encoder `d → h`, decoder
//! `h → d`) on the hidden output of the previous stage. The encoders are
//! kept and stacked; the last stage produces a 2-unit code `(s, c)` whose
//! angle is the initial sample phase.

use log::warn;
use ndarray::{Array2, Axis};

use crate::cosinor::{fit_cosinor, CosinorFit};
use crate::dataio::NormalizedMatrix;
use crate::error::{Error, Result};
use crate::phase::{code_angle, PhaseVector};
use crate::seed;
use crate::tensornet::{
    backward, epoch_batches, flatten_params, forward, n_params, predict, unflatten_params,
    xavier_init, Activation, DenseLayer, OptimizerConfig, OptimizerState,
};

/// Number of encoding stages when the input is wide enough.
pub const MAX_STAGES: usize = 6;

/// Widths of the encoder layers, from `2^⌊log2 n⌋` down to 2.
///
/// Exponents descend from `⌊log2 n⌋` to 1 over at most six stages; each
/// step takes `⌈remaining / stages_left⌉` so the ladder front-loads the big
/// reductions. Narrow inputs get a shorter ladder that halves each stage.
pub fn plan_layer_sizes(n_features: usize) -> Result<Vec<usize>> {
    if n_features < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 features to plan an encoder, got {n_features}"
        )));
    }
    let top = n_features.ilog2() as usize;
    let stages = MAX_STAGES.min(top);
    let mut exps = vec![top];
    let mut e = top;
    for left in (1..stages).rev() {
        let step = (e - 1).div_ceil(left);
        e -= step;
        exps.push(e);
    }
    debug_assert_eq!(*exps.last().unwrap(), 1);
    Ok(exps.into_iter().map(|e| 1usize << e).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStack {
    pub layers: Vec<DenseLayer>,
}

impl EncoderStack {
    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(DenseLayer::out_dim).collect()
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::in_dim)
    }

    pub fn n_params(&self) -> usize {
        n_params(&self.layers)
    }

    /// The `m × 2` code `(s, c)` for every sample.
    pub fn encode(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        predict(&self.layers, input)
    }

    pub fn phases(&self, input: &Array2<f64>) -> Result<(PhaseVector, usize)> {
        Ok(phases_from_code(&self.encode(input)?))
    }
}

/// Phase of each code row, `atan2(s, c) mod 2π`. Rows at the origin get
/// phase 0 and are counted in the second return value.
pub fn phases_from_code(code: &Array2<f64>) -> (PhaseVector, usize) {
    let mut degenerate = 0;
    let phases = code
        .rows()
        .into_iter()
        .map(|r| {
            if r[0] == 0.0 && r[1] == 0.0 {
                degenerate += 1;
            }
            code_angle(r[0], r[1])
        })
        .collect::<Vec<_>>();
    if degenerate > 0 {
        warn!("{degenerate} samples encoded at the origin; phase set to 0");
    }
    (PhaseVector::from_radians(phases), degenerate)
}

#[derive(Debug, Clone)]
pub struct ShallowAe {
    pub encoder: DenseLayer,
    pub hidden: Array2<f64>,
    pub loss_history: Vec<f64>,
}

fn mse(recon: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = recon.len() as f64;
    recon
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n
}

/// Trains one autoencoder on reconstruction MSE and returns its encoder, the
/// encoder's output on `input`, and the per-epoch loss.
pub fn train_shallow_ae(
    input: &Array2<f64>,
    hidden_dim: usize,
    hidden_activation: Activation,
    epochs: usize,
    optimizer: &OptimizerConfig,
    batch_size: Option<usize>,
    seed: u64,
) -> Result<ShallowAe> {
    let d = input.ncols();
    if hidden_dim == 0 || hidden_dim > d {
        return Err(Error::InvalidArgument(format!(
            "hidden width {hidden_dim} must be in 1..={d}"
        )));
    }
    optimizer.validate()?;
    let mut net = vec![
        xavier_init(
            d,
            hidden_dim,
            hidden_activation,
            seed::derive(seed, "encoder"),
        ),
        xavier_init(
            hidden_dim,
            d,
            Activation::Identity,
            seed::derive(seed, "decoder"),
        ),
    ];
    let mut params = Vec::with_capacity(n_params(&net));
    flatten_params(&net, &mut params);
    let mut opt = OptimizerState::new(*optimizer, params.len());

    let mut rng = seed::rng(seed::derive(seed, "batches"));
    let mut loss_history = Vec::with_capacity(epochs);
    let mut flat_grad = Vec::with_capacity(params.len());
    for epoch in 0..epochs {
        let batches = epoch_batches(input.nrows(), batch_size, &mut rng);
        let full_batch = batches.len() == 1;
        if !full_batch {
            let loss = mse(&predict(&net, input)?, input);
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: "pretrain",
                    epoch,
                });
            }
            loss_history.push(loss);
        }
        for rows in &batches {
            let x = if full_batch {
                input.clone()
            } else {
                input.select(Axis(0), rows)
            };
            let acts = forward(&net, &x)?;
            let recon = &acts[1];
            if full_batch {
                let loss = mse(recon, &x);
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        stage: "pretrain",
                        epoch,
                    });
                }
                loss_history.push(loss);
            }
            let out_grad = (recon - &x) * (2.0 / x.len() as f64);
            let grads = backward(&net, &x, &acts, &out_grad)?;
            flat_grad.clear();
            grads.flatten_into(&mut flat_grad);
            opt.step(&mut params, &flat_grad)?;
            unflatten_params(&mut net, &params);
        }
    }
    let encoder = net.swap_remove(0);
    let hidden = encoder.apply(input)?;
    Ok(ShallowAe {
        encoder,
        hidden,
        loss_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    /// Epochs for every stage but the last.
    pub stage_epochs: usize,
    pub last_stage_epochs: usize,
    pub optimizer: OptimizerConfig,
    pub last_optimizer: OptimizerConfig,
    /// Samples per step; `None` is full batch.
    pub batch_size: Option<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            stage_epochs: 7,
            last_stage_epochs: 20,
            optimizer: OptimizerConfig::dadapt(),
            last_optimizer: OptimizerConfig::dadapt(),
            batch_size: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialPhaseResult {
    pub phi0: PhaseVector,
    /// `m × 2` code, column 0 is `s`, column 1 is `c`.
    pub code: Array2<f64>,
    pub degenerate: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainResult {
    pub stack: EncoderStack,
    pub initial: InitialPhaseResult,
    pub loss_histories: Vec<Vec<f64>>,
}

/// Trains the encoder ladder stage by stage and derives initial phases.
pub fn pretrain_stack(
    data: &NormalizedMatrix,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainResult> {
    let sizes = plan_layer_sizes(data.n_proteins())?;
    let mut layers = Vec::with_capacity(sizes.len());
    let mut histories = Vec::with_capacity(sizes.len());
    let mut input = data.values().clone();
    for (stage, &width) in sizes.iter().enumerate() {
        let last = stage + 1 == sizes.len();
        let (activation, epochs, opt) = if last {
            (
                Activation::Identity,
                cfg.last_stage_epochs,
                &cfg.last_optimizer,
            )
        } else {
            (Activation::Tanh, cfg.stage_epochs, &cfg.optimizer)
        };
        let ae = train_shallow_ae(
            &input,
            width,
            activation,
            epochs,
            opt,
            cfg.batch_size,
            seed::derive_index(seed, stage as u64),
        )?;
        histories.push(ae.loss_history);
        layers.push(ae.encoder);
        input = ae.hidden;
    }
    let (phi0, degenerate) = phases_from_code(&input);
    Ok(PretrainResult {
        stack: EncoderStack { layers },
        initial: InitialPhaseResult {
            phi0,
            code: input,
            degenerate,
        },
        loss_histories: histories,
    })
}

/// Closed-form 24 h cosinor fit of every protein against `phi0`.
pub fn initial_cosinor(data: &NormalizedMatrix, phi0: &PhaseVector) -> Result<Vec<CosinorFit>> {
    if phi0.len() != data.n_samples() {
        return Err(Error::Shape(format!(
            "{} phases for {} samples",
            phi0.len(),
            data.n_samples()
        )));
    }
    data.values()
        .columns()
        .into_iter()
        .map(|col| fit_cosinor(&col.to_vec(), phi0, 1.0))
        .collect()
}
