//! Unsupervised circadian phase inference for proteomic matrices.
//!
//! A stack of greedily pretrained autoencoders maps each sample to a point
//! `(s, c)` whose angle is the sample's phase. The encoder is then tuned
//! jointly with a cosine model per protein under an L1 reconstruction loss,
//! outlying samples and proteins are screened out, and the model is trained
//! again on the cleaned matrix. Cosinor regression on the predicted phases
//! gives per-protein rhythm calls.
//!
//! ```no_run
//! use circaphase::{generate, run_pipeline, zscore, PipelineConfig, SynthSpec};
//!
//! let (matrix, _truth) = generate(&SynthSpec { seed: 1, ..Default::default() })?;
//! let (data, _dropped) = zscore(&matrix)?;
//! let result = run_pipeline(&data, &PipelineConfig::default(), 7)?;
//! println!("{:?}", result.phases.to_hours());
//! # Ok::<(), circaphase::Error>(())
//! ```

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cosinor;
pub mod dataio;
pub mod error;
pub mod evalharness;
pub mod finetune;
pub mod phase;
pub mod pretrain;
pub mod seed;
pub mod synthgen;
pub mod tensornet;

pub use cosinor::{
    align_acrophases, benjamini_hochberg, call_rhythms, fit_cosinor, AmplitudeScale, CosinorFit,
    CosinorParams, RhythmCall, RhythmThresholds,
};
pub use dataio::{
    apply_missingness, load_labels, load_matrix, select_features, zscore, ExpressionMatrix,
    FeatureSelection, Layout, LoadOptions, MissingnessPolicy, NormalizedMatrix,
};
pub use error::{Error, Result};
pub use evalharness::{align, circular_error, emit_reports, roc, AlignedPrediction, RocCurve};
pub use finetune::{
    finetune, run_pipeline, screen_outliers, FineTuneModel, OmegaMode, OutlierReport, OutlierStat,
    PipelineConfig, PipelineResult, Regularizer, RetrainMode,
};
pub use phase::PhaseVector;
pub use pretrain::{plan_layer_sizes, pretrain_stack, EncoderStack, PretrainConfig};
pub use synthgen::{generate, NoiseKind, PhaseSampling, SynthSpec, SynthTruth};
pub use tensornet::{OptimizerConfig, OptimizerKind};
