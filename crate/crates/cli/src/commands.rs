//! Subcommand implementations. Each returns the text to print on standard
//! output; every file it writes lands in `out_dir`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};

use circaphase::cosinor::acrophase_histogram;
use circaphase::dataio::{match_labels, write_matrix};
use circaphase::evalharness::{OutlierSummary, ReportOptions, DEFAULT_GRID_STEP};
use circaphase::{
    align, align_acrophases, apply_missingness, call_rhythms, emit_reports, generate, load_labels,
    load_matrix, roc, run_pipeline, seed, select_features, zscore, LoadOptions, NormalizedMatrix,
    RhythmCall,
};

use crate::config::{SelectionMode, AUTO_SELECTION_MIN};
use crate::tables::{
    format_histogram, format_labels, format_paired_histogram, format_phases, format_rhythm_table,
    read_file, read_phases, read_rhythm_table, write_file,
};
use crate::{CliError, RunConfig};

pub const MATRIX_FILE: &str = "matrix.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const PHASES_FILE: &str = "phases.tsv";
pub const RHYTHM_FILE: &str = "rhythm.tsv";
pub const HISTOGRAM_FILE: &str = "acrophase_hist.tsv";
pub const OUTLIERS_FILE: &str = "outliers.tsv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.tsv";
pub const COMPARE_FILE: &str = "compare_summary.txt";
pub const A_SPECIFIC_FILE: &str = "a_specific.tsv";
pub const B_SPECIFIC_FILE: &str = "b_specific.tsv";
pub const PAIRED_ROSE_FILE: &str = "rose_paired.tsv";

fn prepare_out_dir(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    cfg.write_echo(out_dir)
}

fn root_seed(cfg: &RunConfig) -> Result<u64, CliError> {
    cfg.seed
        .ok_or_else(|| CliError::config("a seed must be resolved before running"))
}

/// Loads, filters for missingness and z-scores a matrix. With a seed given,
/// feature selection is applied per the configuration.
pub fn load_normalized(
    cfg: &RunConfig,
    path: &Path,
    selection_seed: Option<u64>,
) -> Result<NormalizedMatrix, CliError> {
    let raw = load_matrix(
        path,
        &LoadOptions {
            delimiter: cfg.delimiter,
            layout: cfg.layout,
        },
    )?;
    let filtered = apply_missingness(&raw, &cfg.missingness())?;
    if filtered.n_proteins() < raw.n_proteins() {
        info!(
            "missingness policy dropped {} of {} proteins",
            raw.n_proteins() - filtered.n_proteins(),
            raw.n_proteins()
        );
    }
    let (data, constant) = zscore(&filtered)?;
    if !constant.is_empty() {
        warn!("dropped {} constant proteins", constant.len());
    }
    let Some(sel_seed) = selection_seed else {
        return Ok(data);
    };
    let method = match cfg.feature_selection {
        SelectionMode::Off => return Ok(data),
        SelectionMode::Auto if data.n_proteins() < AUTO_SELECTION_MIN => return Ok(data),
        SelectionMode::Auto => circaphase::FeatureSelection::TopVariance,
        SelectionMode::Method(m) => m,
    };
    if cfg.n_features >= data.n_proteins() {
        return Ok(data);
    }
    info!(
        "selecting {} of {} proteins ({method:?})",
        cfg.n_features,
        data.n_proteins()
    );
    Ok(select_features(&data, method, cfg.n_features, sel_seed)?)
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    let seed = root_seed(cfg)?;
    let spec = cfg.synth_spec(seed);
    spec.validate()?;
    prepare_out_dir(cfg, out_dir)?;
    let (matrix, truth) = generate(&spec)?;
    write_matrix(
        &out_dir.join(MATRIX_FILE),
        matrix.sample_ids(),
        matrix.protein_ids(),
        matrix.values(),
        '\t',
    )?;
    write_file(
        &out_dir.join(LABELS_FILE),
        &format_labels(matrix.sample_ids(), &truth.sample_hours),
    )?;
    let mut t =
        String::from("protein_id\trhythmic\tperiod_hours\tmesor\tamplitude\tacrophase_rad\n");
    for ((id, p), r) in matrix
        .protein_ids()
        .iter()
        .zip(&truth.params)
        .zip(&truth.rhythmic)
    {
        writeln!(
            t,
            "{id}\t{r}\t{}\t{}\t{}\t{}",
            p.period_hours(),
            p.mesor,
            p.amplitude,
            p.acrophase
        )
        .unwrap();
    }
    write_file(&out_dir.join(TRUTH_FILE), &t)?;
    let rhythmic = truth.rhythmic.iter().filter(|&&r| r).count();
    Ok(format!(
        "simulated {} samples x {} proteins ({rhythmic} rhythmic) into {}\n",
        matrix.n_samples(),
        matrix.n_proteins(),
        out_dir.display()
    ))
}

pub fn predict(cfg: &RunConfig, matrix: &Path, out_dir: &Path) -> Result<String, CliError> {
    let seed = root_seed(cfg)?;
    let data = load_normalized(cfg, matrix, Some(seed::derive(seed, "features")))?;
    prepare_out_dir(cfg, out_dir)?;
    info!(
        "running pipeline on {} samples x {} proteins",
        data.n_samples(),
        data.n_proteins()
    );
    let result = run_pipeline(&data, &cfg.pipeline(), seed)?;

    write_file(
        &out_dir.join(PHASES_FILE),
        &format_phases(&result.sample_ids, &result.phases, &result.sample_outlier),
    )?;
    write_file(
        &out_dir.join(RHYTHM_FILE),
        &format_rhythm_table(&result.calls, &cfg.thresholds()),
    )?;

    let mut t = String::from("kind\tid\tstatistic\n");
    for f in &result.report.sample_outliers {
        writeln!(t, "sample\t{}\t{}", data.sample_ids()[f.index], f.value).unwrap();
    }
    for f in &result.report.protein_outliers {
        writeln!(t, "protein\t{}\t{}", data.protein_ids()[f.index], f.value).unwrap();
    }
    write_file(&out_dir.join(OUTLIERS_FILE), &t)?;

    let d = &result.diagnostics;
    let sizes: Vec<String> = d.layer_sizes.iter().map(usize::to_string).collect();
    let mut t = format!(
        "# layer_sizes: {}\n# degenerate_cells: {}\nstage\tlayer\tepoch\tloss\n",
        sizes.join(","),
        d.degenerate_cells
    );
    for (stage, histories) in [
        ("pretrain", &d.pretrain_losses),
        ("retrain_pretrain", &d.retrain_pretrain_losses),
    ] {
        for (layer, h) in histories.iter().enumerate() {
            for (e, l) in h.iter().enumerate() {
                writeln!(t, "{stage}\t{layer}\t{e}\t{l}").unwrap();
            }
        }
    }
    for (stage, h) in [
        ("finetune", &d.finetune_losses),
        ("retrain", &d.retrain_losses),
    ] {
        for (e, l) in h.iter().enumerate() {
            writeln!(t, "{stage}\t-\t{e}\t{l}").unwrap();
        }
    }
    write_file(&out_dir.join(DIAGNOSTICS_FILE), &t)?;

    let rhythmic = result.calls.iter().filter(|c| c.rhythmic).count();
    Ok(format!(
        "phased {} samples; {} sample outliers, {} protein outliers; {rhythmic} of {} proteins rhythmic\n",
        result.sample_ids.len(),
        result.report.sample_outliers.len(),
        result.protein_outliers.len(),
        result.calls.len()
    ))
}

pub fn rhythm(
    cfg: &RunConfig,
    matrix: &Path,
    phases: &Path,
    out_dir: &Path,
) -> Result<String, CliError> {
    let thresholds = cfg.thresholds();
    thresholds.validate()?;
    let data = load_normalized(cfg, matrix, None)?;
    let table = read_phases(phases)?.reorder(data.sample_ids())?;
    let keep: Vec<usize> = match (&table.outlier, cfg.exclude_outliers) {
        (Some(o), true) => (0..o.len()).filter(|&i| !o[i]).collect(),
        _ => (0..data.n_samples()).collect(),
    };
    let (data, hours) = if keep.len() < data.n_samples() {
        info!(
            "excluding {} outlier samples",
            data.n_samples() - keep.len()
        );
        let all: Vec<usize> = (0..data.n_proteins()).collect();
        let hours: Vec<f64> = keep.iter().map(|&i| table.hours[i]).collect();
        (data.subset(&keep, &all)?, hours)
    } else {
        (data, table.hours.clone())
    };
    let phase_vec = circaphase::PhaseVector::from_hours(hours);
    let mut calls = call_rhythms(&data, &phase_vec, &thresholds, cfg.amplitude_scale)?;
    if let Some(reference) = &cfg.reference {
        calls = align_acrophases(&calls, reference)?;
    }
    prepare_out_dir(cfg, out_dir)?;
    write_file(
        &out_dir.join(RHYTHM_FILE),
        &format_rhythm_table(&calls, &thresholds),
    )?;
    let bins = acrophase_histogram(&calls, cfg.bins)?;
    write_file(&out_dir.join(HISTOGRAM_FILE), &format_histogram(&bins))?;
    let rhythmic = calls.iter().filter(|c| c.rhythmic).count();
    Ok(format!(
        "{rhythmic} of {} proteins rhythmic ({})\n",
        calls.len(),
        thresholds.describe()
    ))
}

fn read_outlier_summary(path: &Path) -> Result<OutlierSummary, CliError> {
    let text = read_file(path)?;
    let mut s = OutlierSummary::default();
    for (i, line) in text.lines().enumerate().skip(1) {
        match line.split('\t').next().unwrap_or("") {
            "sample" => s.sample_outliers += 1,
            "protein" => s.protein_outliers += 1,
            "" => {}
            k => {
                return Err(CliError::new(
                    "parse",
                    format!(
                        "{} line {}: unknown outlier kind {k:?}",
                        path.display(),
                        i + 1
                    ),
                ))
            }
        }
    }
    Ok(s)
}

pub fn evaluate(
    cfg: &RunConfig,
    phases: &Path,
    labels: &Path,
    rhythm_table: Option<&Path>,
    outliers: Option<&Path>,
    out_dir: &Path,
) -> Result<String, CliError> {
    let table = read_phases(phases)?;
    let labels = load_labels(labels, cfg.delimiter)?;
    let truth = match_labels(&table.sample_ids, &labels)?;
    let aligned = align(&table.phases(), &truth)?;
    let curve = roc(&aligned, DEFAULT_GRID_STEP)?;
    let calls = rhythm_table.map(read_rhythm_table).transpose()?;
    let options = ReportOptions {
        plots: cfg.plots,
        outliers: outliers.map(read_outlier_summary).transpose()?,
    };
    prepare_out_dir(cfg, out_dir)?;
    emit_reports(&aligned, &curve, calls.as_deref(), out_dir, &options)?;
    Ok(format!(
        "nauc: {:.4}\nmedian_error_hours: {:.4}\n",
        curve.nauc,
        aligned.median_error()
    ))
}

/// Overlap of two rhythm tables restricted to their shared proteins.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub shared: usize,
    pub a_only: Vec<(String, f64, f64)>,
    pub b_only: Vec<(String, f64, f64)>,
    pub both: usize,
}

/// Counts rhythmic-in-A-only, rhythmic-in-B-only and both over the shared
/// proteins. Group-specific lists are ranked by their own q-value ascending,
/// then the other group's q-value descending.
pub fn compare_calls(a: &[RhythmCall], b: &[RhythmCall]) -> Result<Comparison, CliError> {
    let b_index: HashMap<&str, &RhythmCall> =
        b.iter().map(|c| (c.protein_id.as_str(), c)).collect();
    let pairs: Vec<(&RhythmCall, &RhythmCall)> = a
        .iter()
        .filter_map(|ca| b_index.get(ca.protein_id.as_str()).map(|cb| (ca, *cb)))
        .collect();
    if pairs.is_empty() {
        return Err(CliError::new(
            "empty",
            "the two rhythm tables share no proteins",
        ));
    }
    let rank = |v: &mut Vec<(String, f64, f64)>| {
        v.sort_by(|x, y| {
            x.1.total_cmp(&y.1)
                .then(y.2.total_cmp(&x.2))
                .then_with(|| x.0.cmp(&y.0))
        })
    };
    let mut a_only: Vec<_> = pairs
        .iter()
        .filter(|(x, y)| x.rhythmic && !y.rhythmic)
        .map(|(x, y)| (x.protein_id.clone(), x.q_value, y.q_value))
        .collect();
    let mut b_only: Vec<_> = pairs
        .iter()
        .filter(|(x, y)| !x.rhythmic && y.rhythmic)
        .map(|(x, y)| (x.protein_id.clone(), y.q_value, x.q_value))
        .collect();
    rank(&mut a_only);
    rank(&mut b_only);
    Ok(Comparison {
        shared: pairs.len(),
        a_only,
        b_only,
        both: pairs
            .iter()
            .filter(|(x, y)| x.rhythmic && y.rhythmic)
            .count(),
    })
}

fn restrict(calls: &[RhythmCall], keep: &HashSet<&str>) -> Vec<RhythmCall> {
    calls
        .iter()
        .filter(|c| keep.contains(c.protein_id.as_str()))
        .cloned()
        .collect()
}

pub fn compare(
    cfg: &RunConfig,
    table_a: &Path,
    table_b: &Path,
    out_dir: &Path,
) -> Result<String, CliError> {
    let a = read_rhythm_table(table_a)?;
    let b = read_rhythm_table(table_b)?;
    let cmp = compare_calls(&a, &b)?;
    let b_ids: HashSet<&str> = b.iter().map(|c| c.protein_id.as_str()).collect();
    let shared: HashSet<&str> = a
        .iter()
        .map(|c| c.protein_id.as_str())
        .filter(|id| b_ids.contains(id))
        .collect();
    let (mut ra, mut rb) = (restrict(&a, &shared), restrict(&b, &shared));
    if let Some(reference) = &cfg.reference {
        for (calls, path) in [(&a, table_a), (&b, table_b)] {
            if !calls.iter().any(|c| &c.protein_id == reference) {
                return Err(CliError::new(
                    "reference",
                    format!(
                        "reference protein {reference} is absent from {}",
                        path.display()
                    ),
                ));
            }
        }
        ra = align_acrophases(&ra, reference)?;
        rb = align_acrophases(&rb, reference)?;
    }
    let (ha, hb) = (
        acrophase_histogram(&ra, cfg.bins)?,
        acrophase_histogram(&rb, cfg.bins)?,
    );

    prepare_out_dir(cfg, out_dir)?;
    let summary = format!(
        "shared_proteins: {}\na_only: {}\nb_only: {}\nboth: {}\nreference: {}\n",
        cmp.shared,
        cmp.a_only.len(),
        cmp.b_only.len(),
        cmp.both,
        cfg.reference.as_deref().unwrap_or("none")
    );
    write_file(&out_dir.join(COMPARE_FILE), &summary)?;
    for (name, rows, own, other) in [
        (A_SPECIFIC_FILE, &cmp.a_only, "q_a", "q_b"),
        (B_SPECIFIC_FILE, &cmp.b_only, "q_b", "q_a"),
    ] {
        let mut t = format!("protein_id\t{own}\t{other}\n");
        for (id, q1, q2) in rows {
            writeln!(t, "{id}\t{q1}\t{q2}").unwrap();
        }
        write_file(&out_dir.join(name), &t)?;
    }
    write_file(
        &out_dir.join(PAIRED_ROSE_FILE),
        &format_paired_histogram(&ha, &hb),
    )?;
    Ok(summary)
}
