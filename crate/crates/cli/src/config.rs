//! Run configuration. Built-in defaults are overridden by a `key = value`
//! file, which is in turn overridden by command-line flags. The effective
//! configuration is echoed into every output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use circaphase::{
    AmplitudeScale, FeatureSelection, Layout, MissingnessPolicy, NoiseKind, OmegaMode,
    OptimizerConfig, OptimizerKind, OutlierStat, PhaseSampling, PipelineConfig, PretrainConfig,
    Regularizer, RetrainMode, RhythmThresholds, SynthSpec,
};

use crate::CliError;

/// File name of the echoed configuration.
pub const RUN_CONFIG_FILE: &str = "run_config.txt";

/// Feature counts at or above this width get top-variance selection under
/// `feature_selection = auto`.
pub const AUTO_SELECTION_MIN: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// Top-variance selection only when the matrix is very wide.
    Auto,
    Off,
    Method(FeatureSelection),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub delimiter: char,
    pub layout: Layout,
    pub plots: bool,

    pub max_missing_fraction: f64,
    pub impute: bool,
    pub feature_selection: SelectionMode,
    pub n_features: usize,

    pub pretrain_epochs: usize,
    pub last_pretrain_epochs: usize,
    pub pretrain_optimizer: OptimizerKind,
    /// 0 means full batch.
    pub pretrain_batch_size: usize,
    pub finetune_epochs: usize,
    pub retrain_epochs: usize,
    pub optimizer: OptimizerKind,
    /// `None` keeps the optimizer's own default.
    pub learning_rate: Option<f64>,
    /// 0 means full batch.
    pub batch_size: usize,
    pub restarts: usize,
    pub q_norm: f64,
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub learnable_omega: bool,
    pub outlier_stat: OutlierStat,
    pub retrain_mode: RetrainMode,

    pub period_hours: f64,
    pub q_max: Option<f64>,
    pub ramp_min: Option<f64>,
    pub r2_min: Option<f64>,
    pub amplitude_scale: AmplitudeScale,
    pub reference: Option<String>,
    pub bins: usize,
    pub exclude_outliers: bool,

    pub m: usize,
    pub n: usize,
    pub rhythmic_fraction: f64,
    pub amplitude: (f64, f64),
    pub mesor: (f64, f64),
    pub noise_sd: f64,
    pub noise: NoiseKind,
    pub sampling: PhaseSampling,
    pub periods: Vec<(f64, f64)>,
    pub missing_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let synth = SynthSpec::default();
        let missing = MissingnessPolicy::default();
        RunConfig {
            seed: None,
            delimiter: '\t',
            layout: Layout::ProteinsAsRows,
            plots: false,
            max_missing_fraction: missing.max_missing_fraction,
            impute: missing.impute_with_protein_mean,
            feature_selection: SelectionMode::Auto,
            n_features: 2000,
            pretrain_epochs: pipeline.pretrain.stage_epochs,
            last_pretrain_epochs: pipeline.pretrain.last_stage_epochs,
            pretrain_optimizer: pipeline.pretrain.optimizer.kind,
            pretrain_batch_size: pipeline.pretrain.batch_size.unwrap_or(0),
            finetune_epochs: pipeline.finetune_epochs,
            retrain_epochs: pipeline.retrain_epochs,
            optimizer: pipeline.finetune_optimizer.kind,
            learning_rate: None,
            batch_size: pipeline.batch_size.unwrap_or(0),
            restarts: pipeline.restarts,
            q_norm: pipeline.q_norm,
            lambda: pipeline.lambda,
            regularizer: pipeline.regularizer,
            learnable_omega: pipeline.omega_mode.is_learnable(),
            outlier_stat: pipeline.outlier_stat,
            retrain_mode: pipeline.retrain_mode,
            period_hours: 24.0,
            q_max: None,
            ramp_min: None,
            r2_min: None,
            amplitude_scale: pipeline.amplitude_scale,
            reference: None,
            bins: 8,
            exclude_outliers: true,
            m: synth.m,
            n: synth.n,
            rhythmic_fraction: synth.rhythmic_fraction,
            amplitude: synth.amplitude_range,
            mesor: synth.mesor_range,
            noise_sd: synth.noise_sd,
            noise: synth.noise,
            sampling: synth.phase_sampling,
            periods: synth.period_mix,
            missing_fraction: synth.missing_fraction,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "delimiter",
    "layout",
    "plots",
    "max_missing_fraction",
    "impute",
    "feature_selection",
    "n_features",
    "pretrain_epochs",
    "last_pretrain_epochs",
    "pretrain_optimizer",
    "pretrain_batch_size",
    "finetune_epochs",
    "retrain_epochs",
    "optimizer",
    "learning_rate",
    "batch_size",
    "restarts",
    "q_norm",
    "lambda",
    "regularizer",
    "omega",
    "outlier_stat",
    "retrain_mode",
    "period_hours",
    "q_max",
    "ramp_min",
    "r2_min",
    "amplitude_scale",
    "reference",
    "bins",
    "exclude_outliers",
    "m",
    "n",
    "rhythmic_fraction",
    "amplitude",
    "mesor",
    "noise_sd",
    "noise",
    "sampling",
    "periods",
    "missing_fraction",
];

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::config(format!(
        "{key}: cannot parse {value:?} (expected {expected})"
    ))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| bad(key, value, expected))
}

fn opt_num(key: &str, value: &str) -> Result<Option<f64>, CliError> {
    if value.is_empty() || value == "default" {
        Ok(None)
    } else {
        num(key, value, "a number or default").map(Some)
    }
}

fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "true or false")),
    }
}

fn range(key: &str, value: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = value
        .split_once("..")
        .ok_or_else(|| bad(key, value, "lo..hi"))?;
    Ok((
        num(key, lo.trim(), "lo..hi")?,
        num(key, hi.trim(), "lo..hi")?,
    ))
}

fn period_mix(key: &str, value: &str) -> Result<Vec<(f64, f64)>, CliError> {
    value
        .split(',')
        .map(|part| {
            let (p, w) = part
                .split_once(':')
                .ok_or_else(|| bad(key, value, "period:fraction[,period:fraction]"))?;
            Ok((
                num(key, p.trim(), "period:fraction")?,
                num(key, w.trim(), "period:fraction")?,
            ))
        })
        .collect()
}

fn parse_with<T, E>(
    key: &str,
    value: &str,
    expected: &str,
    f: impl Fn(&str) -> Result<T, E>,
) -> Result<T, CliError> {
    f(value).map_err(|_| bad(key, value, expected))
}

pub fn parse_delimiter(value: &str) -> Option<char> {
    match value {
        "tab" | "\\t" | "\t" => Some('\t'),
        "comma" => Some(','),
        "space" => Some(' '),
        "semicolon" => Some(';'),
        _ => {
            let mut chars = value.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            }
        }
    }
}

fn delimiter_name(c: char) -> String {
    match c {
        '\t' => "tab".into(),
        ',' => "comma".into(),
        ' ' => "space".into(),
        ';' => "semicolon".into(),
        c => c.to_string(),
    }
}

fn range_text(r: (f64, f64)) -> String {
    format!("{}..{}", r.0, r.1)
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or_else(|| "default".into(), |v| v.to_string())
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "seed" => {
                self.seed = if value.is_empty() {
                    None
                } else {
                    Some(num(key, value, "an unsigned integer")?)
                }
            }
            "delimiter" => {
                self.delimiter = parse_delimiter(value)
                    .ok_or_else(|| bad(key, value, "tab, comma or one character"))?
            }
            "layout" => {
                self.layout = match value {
                    "proteins_as_rows" => Layout::ProteinsAsRows,
                    "samples_as_rows" => Layout::SamplesAsRows,
                    _ => return Err(bad(key, value, "proteins_as_rows or samples_as_rows")),
                }
            }
            "plots" => self.plots = boolean(key, value)?,
            "max_missing_fraction" => self.max_missing_fraction = num(key, value, "a fraction")?,
            "impute" => self.impute = boolean(key, value)?,
            "feature_selection" => {
                self.feature_selection = match value {
                    "auto" => SelectionMode::Auto,
                    "none" => SelectionMode::Off,
                    "variance" => SelectionMode::Method(FeatureSelection::TopVariance),
                    "kmeans" => SelectionMode::Method(FeatureSelection::KMeansCluster),
                    _ => return Err(bad(key, value, "auto, none, variance or kmeans")),
                }
            }
            "n_features" => self.n_features = num(key, value, "a positive integer")?,
            "pretrain_epochs" => self.pretrain_epochs = num(key, value, "an integer")?,
            "last_pretrain_epochs" => self.last_pretrain_epochs = num(key, value, "an integer")?,
            "pretrain_optimizer" => {
                self.pretrain_optimizer = parse_with(key, value, "sgd, adam or dadapt", str::parse)?
            }
            "pretrain_batch_size" => self.pretrain_batch_size = num(key, value, "an integer")?,
            "finetune_epochs" => self.finetune_epochs = num(key, value, "an integer")?,
            "retrain_epochs" => self.retrain_epochs = num(key, value, "an integer")?,
            "optimizer" => {
                self.optimizer = parse_with(key, value, "sgd, adam or dadapt", str::parse)?
            }
            "learning_rate" => self.learning_rate = opt_num(key, value)?,
            "batch_size" => self.batch_size = num(key, value, "an integer")?,
            "restarts" => self.restarts = num(key, value, "a positive integer")?,
            "q_norm" => self.q_norm = num(key, value, "a positive number")?,
            "lambda" => self.lambda = num(key, value, "a non-negative number")?,
            "regularizer" => {
                self.regularizer = parse_with(key, value, "none, l1, l2 or tv", str::parse)?
            }
            "omega" => {
                self.learnable_omega = match value {
                    "fixed" => false,
                    "learnable" => true,
                    _ => return Err(bad(key, value, "fixed or learnable")),
                }
            }
            "outlier_stat" => {
                self.outlier_stat = parse_with(key, value, "signed or absolute", str::parse)?
            }
            "retrain_mode" => {
                self.retrain_mode = parse_with(key, value, "fresh or checkpoint", str::parse)?
            }
            "period_hours" => self.period_hours = num(key, value, "a positive number")?,
            "q_max" => self.q_max = opt_num(key, value)?,
            "ramp_min" => self.ramp_min = opt_num(key, value)?,
            "r2_min" => self.r2_min = opt_num(key, value)?,
            "amplitude_scale" => {
                self.amplitude_scale = match value {
                    "raw" => AmplitudeScale::Raw,
                    "normalized" => AmplitudeScale::Normalized,
                    _ => return Err(bad(key, value, "raw or normalized")),
                }
            }
            "reference" => {
                self.reference = (!value.is_empty()).then(|| value.to_string());
            }
            "bins" => self.bins = num(key, value, "an integer ≥ 2")?,
            "exclude_outliers" => self.exclude_outliers = boolean(key, value)?,
            "m" => self.m = num(key, value, "an integer")?,
            "n" => self.n = num(key, value, "an integer")?,
            "rhythmic_fraction" => self.rhythmic_fraction = num(key, value, "a fraction")?,
            "amplitude" => self.amplitude = range(key, value)?,
            "mesor" => self.mesor = range(key, value)?,
            "noise_sd" => self.noise_sd = num(key, value, "a non-negative number")?,
            "noise" => {
                self.noise = match value {
                    "gaussian" => NoiseKind::Gaussian,
                    _ => match value.strip_prefix("t:") {
                        Some(df) => NoiseKind::StudentT {
                            df: num(key, df, "gaussian or t:<df>")?,
                        },
                        None => return Err(bad(key, value, "gaussian or t:<df>")),
                    },
                }
            }
            "sampling" => {
                self.sampling = match value {
                    "uniform" => PhaseSampling::Uniform,
                    "clustered" => PhaseSampling::Clustered,
                    _ => return Err(bad(key, value, "uniform or clustered")),
                }
            }
            "periods" => self.periods = period_mix(key, value)?,
            "missing_fraction" => self.missing_fraction = num(key, value, "a fraction")?,
            _ => {
                return Err(CliError::config(format!(
                    "unknown configuration key {key:?}"
                )))
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of a configuration file. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("io error on {}: {e}", path.display())))?;
        self.apply_text(&text)
            .map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", i + 1)))?;
            self.apply(key.trim(), value)
                .map_err(|e| CliError::config(format!("line {}: {}", i + 1, e.message)))?;
        }
        Ok(())
    }

    /// Text form of one key, parseable by [`RunConfig::apply`].
    pub fn value_of(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.map_or_else(String::new, |s| s.to_string()),
            "delimiter" => delimiter_name(self.delimiter),
            "layout" => match self.layout {
                Layout::ProteinsAsRows => "proteins_as_rows".into(),
                Layout::SamplesAsRows => "samples_as_rows".into(),
            },
            "plots" => self.plots.to_string(),
            "max_missing_fraction" => self.max_missing_fraction.to_string(),
            "impute" => self.impute.to_string(),
            "feature_selection" => match self.feature_selection {
                SelectionMode::Auto => "auto".into(),
                SelectionMode::Off => "none".into(),
                SelectionMode::Method(FeatureSelection::TopVariance) => "variance".into(),
                SelectionMode::Method(FeatureSelection::KMeansCluster) => "kmeans".into(),
            },
            "n_features" => self.n_features.to_string(),
            "pretrain_epochs" => self.pretrain_epochs.to_string(),
            "last_pretrain_epochs" => self.last_pretrain_epochs.to_string(),
            "pretrain_optimizer" => self.pretrain_optimizer.to_string(),
            "pretrain_batch_size" => self.pretrain_batch_size.to_string(),
            "finetune_epochs" => self.finetune_epochs.to_string(),
            "retrain_epochs" => self.retrain_epochs.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "learning_rate" => opt_text(self.learning_rate),
            "batch_size" => self.batch_size.to_string(),
            "restarts" => self.restarts.to_string(),
            "q_norm" => self.q_norm.to_string(),
            "lambda" => self.lambda.to_string(),
            "regularizer" => self.regularizer.to_string(),
            "omega" => if self.learnable_omega {
                "learnable"
            } else {
                "fixed"
            }
            .into(),
            "outlier_stat" => self.outlier_stat.to_string(),
            "retrain_mode" => self.retrain_mode.to_string(),
            "period_hours" => self.period_hours.to_string(),
            "q_max" => opt_text(self.q_max),
            "ramp_min" => opt_text(self.ramp_min),
            "r2_min" => opt_text(self.r2_min),
            "amplitude_scale" => match self.amplitude_scale {
                AmplitudeScale::Raw => "raw".into(),
                AmplitudeScale::Normalized => "normalized".into(),
            },
            "reference" => self.reference.clone().unwrap_or_default(),
            "bins" => self.bins.to_string(),
            "exclude_outliers" => self.exclude_outliers.to_string(),
            "m" => self.m.to_string(),
            "n" => self.n.to_string(),
            "rhythmic_fraction" => self.rhythmic_fraction.to_string(),
            "amplitude" => range_text(self.amplitude),
            "mesor" => range_text(self.mesor),
            "noise_sd" => self.noise_sd.to_string(),
            "noise" => match self.noise {
                NoiseKind::Gaussian => "gaussian".into(),
                NoiseKind::StudentT { df } => format!("t:{df}"),
            },
            "sampling" => match self.sampling {
                PhaseSampling::Uniform => "uniform".into(),
                PhaseSampling::Clustered => "clustered".into(),
            },
            "periods" => self
                .periods
                .iter()
                .map(|(p, w)| format!("{p}:{w}"))
                .collect::<Vec<_>>()
                .join(","),
            "missing_fraction" => self.missing_fraction.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// The effective configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value_of(key)).unwrap();
        }
        out
    }

    pub fn write_echo(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join(RUN_CONFIG_FILE);
        fs::write(&path, self.to_text())
            .map_err(|e| CliError::new("io", format!("io error on {}: {e}", path.display())))
    }

    /// Rhythm thresholds: the 12 h defaults when `period_hours` is 12, the
    /// 24 h defaults otherwise, then any explicit overrides.
    pub fn thresholds(&self) -> RhythmThresholds {
        let mut t = if self.period_hours == 12.0 {
            RhythmThresholds::ultradian()
        } else {
            RhythmThresholds {
                period_hours: self.period_hours,
                ..RhythmThresholds::circadian()
            }
        };
        if let Some(q) = self.q_max {
            t.q_max = q;
        }
        if let Some(r) = self.ramp_min {
            t.ramp_min = r;
        }
        if let Some(r) = self.r2_min {
            t.r2_min = r;
        }
        t
    }

    pub fn missingness(&self) -> MissingnessPolicy {
        MissingnessPolicy {
            max_missing_fraction: self.max_missing_fraction,
            impute_with_protein_mean: self.impute,
        }
    }

    fn optimizer_config(&self, kind: OptimizerKind) -> OptimizerConfig {
        let mut c = OptimizerConfig::for_kind(kind);
        if let Some(lr) = self.learning_rate {
            c.learning_rate = lr;
        }
        c
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let pretrain_opt = self.optimizer_config(self.pretrain_optimizer);
        PipelineConfig {
            pretrain: PretrainConfig {
                stage_epochs: self.pretrain_epochs,
                last_stage_epochs: self.last_pretrain_epochs,
                optimizer: pretrain_opt,
                last_optimizer: pretrain_opt,
                batch_size: (self.pretrain_batch_size > 0).then_some(self.pretrain_batch_size),
            },
            finetune_epochs: self.finetune_epochs,
            retrain_epochs: self.retrain_epochs,
            finetune_optimizer: self.optimizer_config(self.optimizer),
            batch_size: (self.batch_size > 0).then_some(self.batch_size),
            restarts: self.restarts,
            q_norm: self.q_norm,
            lambda: self.lambda,
            regularizer: self.regularizer,
            omega_mode: if self.learnable_omega {
                OmegaMode::learnable()
            } else {
                OmegaMode::Fixed
            },
            outlier_stat: self.outlier_stat,
            retrain_mode: self.retrain_mode,
            thresholds: self.thresholds(),
            amplitude_scale: self.amplitude_scale,
        }
    }

    pub fn synth_spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            m: self.m,
            n: self.n,
            rhythmic_fraction: self.rhythmic_fraction,
            period_mix: self.periods.clone(),
            amplitude_range: self.amplitude,
            mesor_range: self.mesor,
            noise_sd: self.noise_sd,
            noise: self.noise,
            phase_sampling: self.sampling,
            missing_fraction: self.missing_fraction,
            seed,
        }
    }

    /// Checks every tunable before any computation starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::config(msg.to_string()))
            }
        };
        self.missingness().validate()?;
        self.thresholds().validate()?;
        let p = self.pipeline();
        p.pretrain.optimizer.validate()?;
        p.finetune_optimizer.validate()?;
        check(self.n_features > 0, "n_features must be positive")?;
        check(self.restarts > 0, "restarts must be positive")?;
        check(
            self.q_norm.is_finite() && self.q_norm > 0.0,
            "q_norm must be positive",
        )?;
        check(
            self.lambda.is_finite() && self.lambda >= 0.0,
            "lambda must be non-negative",
        )?;
        check(self.bins >= 2, "bins must be at least 2")?;
        check(
            self.pretrain_epochs > 0 && self.last_pretrain_epochs > 0,
            "pretrain epochs must be positive",
        )?;
        self.synth_spec(self.seed.unwrap_or(0)).validate()?;
        Ok(())
    }
}
