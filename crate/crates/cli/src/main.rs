use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use circaphase_cli::{commands, CliError, RunConfig};

/// Unsupervised circadian phase inference and rhythm calling for
/// proteomic abundance matrices.
///
/// Settings resolve as built-in defaults, then `--config` (`key = value`
/// lines), then flags. The effective settings are written to
/// `run_config.txt` in the output directory.
#[derive(Parser, Debug)]
#[command(name = "circaphase", version, about, long_about, term_width = 80)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// root seed for every random stage
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// configuration file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output directory
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// input delimiter: tab, comma or a single character
    #[arg(long, global = true)]
    delimiter: Option<String>,

    /// also write SVG plots
    #[arg(long, global = true)]
    plots: bool,

    /// more logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// generate a synthetic matrix with planted rhythms
    Simulate(SimulateArgs),

    /// infer one phase per sample
    Predict(Box<PredictArgs>),

    /// cosinor rhythm calls given a matrix and phases
    Rhythm(RhythmArgs),

    /// score phases against known collection times
    Evaluate(EvaluateArgs),

    /// overlap of two rhythm tables
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// number of samples
    #[arg(long)]
    m: Option<usize>,
    /// number of proteins
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rhythmic_fraction: Option<f64>,
    /// amplitude range as lo..hi
    #[arg(long)]
    amplitude: Option<String>,
    /// mesor range as lo..hi
    #[arg(long)]
    mesor: Option<String>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// gaussian or t:<df>
    #[arg(long)]
    noise: Option<String>,
    /// uniform or clustered
    #[arg(long)]
    sampling: Option<String>,
    /// period mix as period:fraction[,period:fraction]
    #[arg(long)]
    periods: Option<String>,
    #[arg(long)]
    missing_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct LoadArgs {
    /// input matrix has one sample per row
    #[arg(long)]
    samples_as_rows: bool,
    /// drop proteins missing in more than this fraction of samples
    #[arg(long)]
    max_missing_fraction: Option<f64>,
    /// drop proteins with missing cells instead of imputing them
    #[arg(long)]
    no_impute: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// abundance matrix
    matrix: PathBuf,
    #[command(flatten)]
    load: LoadArgs,
    /// auto, none, variance or kmeans
    #[arg(long)]
    feature_selection: Option<String>,
    #[arg(long)]
    n_features: Option<usize>,
    /// epochs per pretraining stage except the last
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    last_pretrain_epochs: Option<usize>,
    /// sgd, adam or dadapt
    #[arg(long)]
    pretrain_optimizer: Option<String>,
    /// samples per pretraining step, 0 for full batch
    #[arg(long)]
    pretrain_batch_size: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    retrain_epochs: Option<usize>,
    /// sgd, adam or dadapt
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// samples per fine-tuning step, 0 for full batch
    #[arg(long)]
    batch_size: Option<usize>,
    /// independent training runs; the lowest final loss wins
    #[arg(long)]
    restarts: Option<usize>,
    /// exponent of the reconstruction norm
    #[arg(long)]
    q_norm: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// none, l1, l2 or tv
    #[arg(long)]
    regularizer: Option<String>,
    /// fixed or learnable
    #[arg(long)]
    omega: Option<String>,
    /// signed or absolute
    #[arg(long)]
    outlier_stat: Option<String>,
    /// fresh or checkpoint
    #[arg(long)]
    retrain_mode: Option<String>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    /// rhythm period; 12 selects the ultradian thresholds
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    q_max: Option<f64>,
    #[arg(long)]
    ramp_min: Option<f64>,
    #[arg(long)]
    r2_min: Option<f64>,
    /// raw or normalized
    #[arg(long)]
    amplitude_scale: Option<String>,
}

#[derive(Args, Debug)]
struct RhythmArgs {
    /// abundance matrix
    matrix: PathBuf,
    /// phase table from `predict`, or a sample_id/hour labels file
    phases: PathBuf,
    #[command(flatten)]
    load: LoadArgs,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// protein whose acrophase is set to zero
    #[arg(long)]
    reference: Option<String>,
    /// acrophase histogram bins
    #[arg(long)]
    bins: Option<usize>,
    /// keep samples flagged as outliers in the phase table
    #[arg(long)]
    keep_outliers: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// phase table from `predict`
    phases: PathBuf,
    /// sample_id/hour labels
    labels: PathBuf,
    /// rhythm table for the acrophase rose
    #[arg(long)]
    rhythm: Option<PathBuf>,
    /// outlier table from `predict`
    #[arg(long)]
    outliers: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// rhythm table of group A
    table_a: PathBuf,
    /// rhythm table of group B
    table_b: PathBuf,
    /// protein both groups are aligned to
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    bins: Option<usize>,
}

type Overrides = Vec<(&'static str, Option<String>)>;

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(T::to_string)
}

fn load_overrides(a: &LoadArgs, out: &mut Overrides) {
    if a.samples_as_rows {
        out.push(("layout", Some("samples_as_rows".into())));
    }
    out.push(("max_missing_fraction", text(&a.max_missing_fraction)));
    if a.no_impute {
        out.push(("impute", Some("false".into())));
    }
}

fn threshold_overrides(a: &ThresholdArgs, out: &mut Overrides) {
    out.extend([
        ("period_hours", text(&a.period)),
        ("q_max", text(&a.q_max)),
        ("ramp_min", text(&a.ramp_min)),
        ("r2_min", text(&a.r2_min)),
        ("amplitude_scale", a.amplitude_scale.clone()),
    ]);
}

fn overrides(cli: &Cli) -> Overrides {
    let mut out: Overrides = vec![
        ("seed", text(&cli.seed)),
        ("delimiter", cli.delimiter.clone()),
    ];
    if cli.plots {
        out.push(("plots", Some("true".into())));
    }
    match &cli.command {
        Command::Simulate(a) => out.extend([
            ("m", text(&a.m)),
            ("n", text(&a.n)),
            ("rhythmic_fraction", text(&a.rhythmic_fraction)),
            ("amplitude", a.amplitude.clone()),
            ("mesor", a.mesor.clone()),
            ("noise_sd", text(&a.noise_sd)),
            ("noise", a.noise.clone()),
            ("sampling", a.sampling.clone()),
            ("periods", a.periods.clone()),
            ("missing_fraction", text(&a.missing_fraction)),
        ]),
        Command::Predict(a) => {
            load_overrides(&a.load, &mut out);
            threshold_overrides(&a.thresholds, &mut out);
            out.extend([
                ("feature_selection", a.feature_selection.clone()),
                ("n_features", text(&a.n_features)),
                ("pretrain_epochs", text(&a.pretrain_epochs)),
                ("last_pretrain_epochs", text(&a.last_pretrain_epochs)),
                ("pretrain_optimizer", a.pretrain_optimizer.clone()),
                ("pretrain_batch_size", text(&a.pretrain_batch_size)),
                ("finetune_epochs", text(&a.finetune_epochs)),
                ("retrain_epochs", text(&a.retrain_epochs)),
                ("optimizer", a.optimizer.clone()),
                ("learning_rate", text(&a.learning_rate)),
                ("batch_size", text(&a.batch_size)),
                ("restarts", text(&a.restarts)),
                ("q_norm", text(&a.q_norm)),
                ("lambda", text(&a.lambda)),
                ("regularizer", a.regularizer.clone()),
                ("omega", a.omega.clone()),
                ("outlier_stat", a.outlier_stat.clone()),
                ("retrain_mode", a.retrain_mode.clone()),
            ]);
        }
        Command::Rhythm(a) => {
            load_overrides(&a.load, &mut out);
            threshold_overrides(&a.thresholds, &mut out);
            out.extend([("reference", a.reference.clone()), ("bins", text(&a.bins))]);
            if a.keep_outliers {
                out.push(("exclude_outliers", Some("false".into())));
            }
        }
        Command::Evaluate(_) => {}
        Command::Compare(a) => {
            out.extend([("reference", a.reference.clone()), ("bins", text(&a.bins))]);
        }
    }
    out
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (key, value) in overrides(cli) {
        if let Some(v) = value {
            cfg.apply(key, &v).map_err(|e| {
                CliError::config(format!("--{}: {}", key.replace('_', "-"), e.message))
            })?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let mut cfg = resolve_config(cli)?;
    let needs_seed = matches!(cli.command, Command::Simulate(_) | Command::Predict(_));
    let mut out = String::new();
    if needs_seed && cfg.seed.is_none() {
        let seed: u64 = rand::random();
        out.push_str(&format!("seed: {seed}\n"));
        cfg.seed = Some(seed);
    }
    let dir = &cli.out_dir;
    out.push_str(&match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, dir)?,
        Command::Predict(a) => commands::predict(&cfg, &a.matrix, dir)?,
        Command::Rhythm(a) => commands::rhythm(&cfg, &a.matrix, &a.phases, dir)?,
        Command::Evaluate(a) => commands::evaluate(
            &cfg,
            &a.phases,
            &a.labels,
            a.rhythm.as_deref(),
            a.outliers.as_deref(),
            dir,
        )?,
        Command::Compare(a) => commands::compare(&cfg, &a.table_a, &a.table_b, dir)?,
    });
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
