//! Matrix ingestion, missing-value handling, z-scoring and feature selection.
//!
//! On disk a matrix is a delimited text table whose header row holds sample
//! identifiers and whose first column holds protein identifiers. In memory
//! every matrix is oriented samples-as-rows (`m × n`). Missing cells are
//! stored as `NaN`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::phase::wrap_hours;
use crate::seed;

/// On-disk orientation of a delimited matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Header row holds sample ids, each following row is one protein.
    #[default]
    ProteinsAsRows,
    /// Header row holds protein ids, each following row is one sample.
    SamplesAsRows,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub delimiter: char,
    pub layout: Layout,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: '\t',
            layout: Layout::ProteinsAsRows,
        }
    }
}

/// Raw abundance matrix, samples as rows.
#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    sample_ids: Vec<String>,
    protein_ids: Vec<String>,
    values: Array2<f64>,
    hour_labels: Option<Vec<f64>>,
}

fn check_unique(ids: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                kind,
                id: id.clone(),
            });
        }
    }
    Ok(())
}

fn check_hours(hours: &[f64]) -> Result<()> {
    if let Some(h) = hours.iter().find(|h| !(0.0..24.0).contains(*h)) {
        return Err(Error::InvalidArgument(format!(
            "hour label {h} outside [0, 24)"
        )));
    }
    Ok(())
}

impl ExpressionMatrix {
    pub fn new(
        sample_ids: Vec<String>,
        protein_ids: Vec<String>,
        values: Array2<f64>,
        hour_labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = values.dim();
        if sample_ids.len() != m || protein_ids.len() != n {
            return Err(Error::Shape(format!(
                "{} sample ids and {} protein ids for a {m}x{n} matrix",
                sample_ids.len(),
                protein_ids.len()
            )));
        }
        if m < 2 || n < 2 {
            return Err(Error::Empty(format!(
                "matrix has {m} samples and {n} proteins; need at least 2 of each"
            )));
        }
        check_unique(&sample_ids, "sample")?;
        check_unique(&protein_ids, "protein")?;
        if let Some(h) = &hour_labels {
            if h.len() != m {
                return Err(Error::Shape(format!(
                    "{} hour labels for {m} samples",
                    h.len()
                )));
            }
            check_hours(h)?;
        }
        Ok(ExpressionMatrix {
            sample_ids,
            protein_ids,
            values,
            hour_labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_proteins(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn protein_ids(&self) -> &[String] {
        &self.protein_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn hour_labels(&self) -> Option<&[f64]> {
        self.hour_labels.as_deref()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Attaches `sample_id → hour` labels. Every sample must be labeled;
    /// hours are wrapped into `[0, 24)`.
    pub fn attach_labels(&mut self, labels: &[(String, f64)]) -> Result<()> {
        self.hour_labels = Some(match_labels(&self.sample_ids, labels)?);
        Ok(())
    }

    /// Keeps the given protein columns, in the given order.
    pub fn select_proteins(&self, keep: &[usize]) -> Result<ExpressionMatrix> {
        let values = self.values.select(Axis(1), keep);
        let ids = keep.iter().map(|&p| self.protein_ids[p].clone()).collect();
        ExpressionMatrix::new(
            self.sample_ids.clone(),
            ids,
            values,
            self.hour_labels.clone(),
        )
    }
}

/// Orders `labels` to match `sample_ids`, wrapping hours into `[0, 24)`.
pub fn match_labels(sample_ids: &[String], labels: &[(String, f64)]) -> Result<Vec<f64>> {
    let lookup: std::collections::HashMap<&str, f64> =
        labels.iter().map(|(id, h)| (id.as_str(), *h)).collect();
    let mut hours = Vec::with_capacity(sample_ids.len());
    let mut missing = Vec::new();
    for id in sample_ids {
        match lookup.get(id.as_str()) {
            Some(&h) => hours.push(wrap_hours(h)),
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Unlabeled(missing));
    }
    Ok(hours)
}

fn is_missing_marker(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str, line: usize, column: usize) -> Result<f64> {
    let cell = cell.trim();
    if is_missing_marker(cell) {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            column,
            message: format!("cannot parse {cell:?} as a number"),
        }),
    }
}

/// Parses a delimited matrix from text.
pub fn parse_matrix(text: &str, opts: &LoadOptions) -> Result<ExpressionMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "empty input".into(),
    })?;
    let header: Vec<&str> = header.split(opts.delimiter).map(str::trim).collect();

    let mut row_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(opts.delimiter).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::Ragged {
                line: line_no,
                expected,
                found: fields.len(),
            });
        }
        row_ids.push(fields[0].trim().to_string());
        let row = fields[1..]
            .iter()
            .enumerate()
            .map(|(j, c)| parse_cell(c, line_no, j + 2))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let width = width.ok_or_else(|| Error::Empty("matrix has no data rows".into()))?;
    let n_cols = width - 1;
    // header may or may not carry a corner cell above the id column
    let col_ids: Vec<String> = if header.len() == width {
        header[1..].iter().map(|s| s.to_string()).collect()
    } else if header.len() == n_cols {
        header.iter().map(|s| s.to_string()).collect()
    } else {
        return Err(Error::Ragged {
            line: 1,
            expected: width,
            found: header.len(),
        });
    };

    let n_rows = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let table =
        Array2::from_shape_vec((n_rows, n_cols), flat).map_err(|e| Error::Shape(e.to_string()))?;

    match opts.layout {
        Layout::ProteinsAsRows => {
            ExpressionMatrix::new(col_ids, row_ids, table.reversed_axes().to_owned(), None)
        }
        Layout::SamplesAsRows => ExpressionMatrix::new(row_ids, col_ids, table, None),
    }
}

pub fn load_matrix(path: &Path, opts: &LoadOptions) -> Result<ExpressionMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&text, opts)
}

/// Parses a two-column `sample_id<delim>hour` labels table. A header line is
/// skipped when its second field is not numeric.
pub fn parse_labels(text: &str, delimiter: char) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::Ragged {
                line: i + 1,
                expected: 2,
                found: fields.len(),
            });
        }
        let hour = match fields[1].parse::<f64>() {
            Ok(h) if h.is_finite() => h,
            _ if out.is_empty() && i == 0 => continue,
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 2,
                    message: format!("cannot parse hour {:?}", fields[1]),
                })
            }
        };
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::DuplicateId {
                kind: "sample",
                id: fields[0].to_string(),
            });
        }
        out.push((fields[0].to_string(), hour));
    }
    Ok(out)
}

pub fn load_labels(path: &Path, delimiter: char) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, delimiter)
}

/// Writes a samples-as-rows matrix to disk in the proteins-as-rows layout.
pub fn write_matrix(
    path: &Path,
    sample_ids: &[String],
    protein_ids: &[String],
    values: &Array2<f64>,
    delimiter: char,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(w, "protein_id").map_err(io)?;
    for s in sample_ids {
        write!(w, "{delimiter}{s}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (p, id) in protein_ids.iter().enumerate() {
        write!(w, "{id}").map_err(io)?;
        for v in values.column(p) {
            if v.is_nan() {
                write!(w, "{delimiter}NA").map_err(io)?;
            } else {
                write!(w, "{delimiter}{v}").map_err(io)?;
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// How missing cells are handled before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingnessPolicy {
    pub max_missing_fraction: f64,
    pub impute_with_protein_mean: bool,
}

impl Default for MissingnessPolicy {
    fn default() -> Self {
        MissingnessPolicy {
            max_missing_fraction: 0.0,
            impute_with_protein_mean: true,
        }
    }
}

impl MissingnessPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_missing_fraction) {
            return Err(Error::InvalidArgument(format!(
                "max_missing_fraction {} outside [0, 1]",
                self.max_missing_fraction
            )));
        }
        Ok(())
    }
}

/// Drops proteins whose missing fraction exceeds the policy threshold and
/// imputes (or drops) the rest so that no missing cell remains.
pub fn apply_missingness(
    matrix: &ExpressionMatrix,
    policy: &MissingnessPolicy,
) -> Result<ExpressionMatrix> {
    policy.validate()?;
    let m = matrix.n_samples() as f64;
    let mut keep = Vec::new();
    for (p, col) in matrix.values.columns().into_iter().enumerate() {
        let missing = col.iter().filter(|v| v.is_nan()).count();
        if missing as f64 / m > policy.max_missing_fraction {
            continue;
        }
        if missing > 0 && !policy.impute_with_protein_mean {
            continue;
        }
        if missing == col.len() {
            continue;
        }
        keep.push(p);
    }
    if keep.is_empty() {
        return Err(Error::Empty(
            "every protein was dropped by the missingness policy".into(),
        ));
    }
    let mut out = matrix.select_proteins(&keep)?;
    for mut col in out.values.columns_mut() {
        let (sum, count) = col
            .iter()
            .filter(|v| !v.is_nan())
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == col.len() {
            continue;
        }
        let mean = sum / count as f64;
        col.mapv_inplace(|v| if v.is_nan() { mean } else { v });
    }
    Ok(out)
}

/// Z-scored matrix with the per-protein raw statistics it was derived from.
#[derive(Debug, Clone)]
pub struct NormalizedMatrix {
    sample_ids: Vec<String>,
    protein_ids: Vec<String>,
    values: Array2<f64>,
    raw_means: Vec<f64>,
    raw_sds: Vec<f64>,
    hour_labels: Option<Vec<f64>>,
}

/// Column mean and population standard deviation.
fn column_stats(col: ArrayView1<f64>) -> (f64, f64) {
    let m = col.len() as f64;
    let mean = col.sum() / m;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    (mean, var.sqrt())
}

fn is_zero_variance(mean: f64, sd: f64) -> bool {
    sd <= 1e-12 * mean.abs().max(1.0)
}

struct Standardized {
    values: Array2<f64>,
    kept: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

fn standardize(values: &Array2<f64>) -> Standardized {
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (p, col) in values.columns().into_iter().enumerate() {
        let (mean, sd) = column_stats(col);
        if !is_zero_variance(mean, sd) {
            kept.push(p);
            means.push(mean);
            sds.push(sd);
        }
    }
    let mut out = values.select(Axis(1), &kept);
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let (mean, sd) = (means[j], sds[j]);
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Standardized {
        values: out,
        kept,
        means,
        sds,
    }
}

/// Per-protein z-scoring with population standard deviation. Zero-variance
/// proteins are dropped; their ids are returned alongside the result.
pub fn zscore(matrix: &ExpressionMatrix) -> Result<(NormalizedMatrix, Vec<String>)> {
    if matrix.missing_count() > 0 {
        return Err(Error::InvalidArgument(
            "matrix has missing values; apply a missingness policy first".into(),
        ));
    }
    let st = standardize(&matrix.values);
    let dropped = dropped_ids(&matrix.protein_ids, &st.kept);
    if !dropped.is_empty() {
        warn!("dropped zero-variance proteins: {}", dropped.join(","));
    }
    let normalized = NormalizedMatrix::from_parts(
        matrix.sample_ids.clone(),
        st.kept
            .iter()
            .map(|&p| matrix.protein_ids[p].clone())
            .collect(),
        st.values,
        st.means,
        st.sds,
        matrix.hour_labels.clone(),
    )?;
    Ok((normalized, dropped))
}

fn dropped_ids(ids: &[String], kept: &[usize]) -> Vec<String> {
    let kept: HashSet<usize> = kept.iter().copied().collect();
    ids.iter()
        .enumerate()
        .filter(|(p, _)| !kept.contains(p))
        .map(|(_, id)| id.clone())
        .collect()
}

impl NormalizedMatrix {
    fn from_parts(
        sample_ids: Vec<String>,
        protein_ids: Vec<String>,
        values: Array2<f64>,
        raw_means: Vec<f64>,
        raw_sds: Vec<f64>,
        hour_labels: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = values.dim();
        if m < 2 || n < 2 {
            return Err(Error::Empty(format!(
                "normalized matrix has {m} samples and {n} proteins; need at least 2 of each"
            )));
        }
        Ok(NormalizedMatrix {
            sample_ids,
            protein_ids,
            values,
            raw_means,
            raw_sds,
            hour_labels,
        })
    }

    /// Wraps already-standardized values, recomputing nothing. Raw statistics
    /// default to mean 0 and sd 1.
    pub fn from_standardized(
        sample_ids: Vec<String>,
        protein_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let n = values.ncols();
        let m = ExpressionMatrix::new(sample_ids, protein_ids, values, None)?;
        NormalizedMatrix::from_parts(
            m.sample_ids,
            m.protein_ids,
            m.values,
            vec![0.0; n],
            vec![1.0; n],
            None,
        )
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_proteins(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn protein_ids(&self) -> &[String] {
        &self.protein_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn raw_means(&self) -> &[f64] {
        &self.raw_means
    }

    pub fn raw_sds(&self) -> &[f64] {
        &self.raw_sds
    }

    pub fn raw_variance(&self, p: usize) -> f64 {
        self.raw_sds[p] * self.raw_sds[p]
    }

    pub fn hour_labels(&self) -> Option<&[f64]> {
        self.hour_labels.as_deref()
    }

    pub fn protein_index(&self, id: &str) -> Option<usize> {
        self.protein_ids.iter().position(|p| p == id)
    }

    /// Back-transforms the normalized values to the raw abundance scale.
    pub fn raw_values(&self) -> Array2<f64> {
        let mut raw = self.values.clone();
        for (p, mut col) in raw.columns_mut().into_iter().enumerate() {
            let (mean, sd) = (self.raw_means[p], self.raw_sds[p]);
            col.mapv_inplace(|v| v * sd + mean);
        }
        raw
    }

    /// Restricts to the given samples and proteins and z-scores again. The
    /// raw statistics are updated to describe the retained subset; proteins
    /// that become constant on the subset are dropped.
    pub fn subset(&self, samples: &[usize], proteins: &[usize]) -> Result<NormalizedMatrix> {
        let sub = self
            .values
            .select(Axis(0), samples)
            .select(Axis(1), proteins);
        let st = standardize(&sub);
        let raw_means = st
            .kept
            .iter()
            .zip(&st.means)
            .map(|(&j, mu)| self.raw_means[proteins[j]] + self.raw_sds[proteins[j]] * mu)
            .collect();
        let raw_sds = st
            .kept
            .iter()
            .zip(&st.sds)
            .map(|(&j, sd)| self.raw_sds[proteins[j]] * sd)
            .collect();
        NormalizedMatrix::from_parts(
            samples
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            st.kept
                .iter()
                .map(|&j| self.protein_ids[proteins[j]].clone())
                .collect(),
            st.values,
            raw_means,
            raw_sds,
            self.hour_labels
                .as_ref()
                .map(|h| samples.iter().map(|&i| h[i]).collect()),
        )
    }

    /// Reorders samples. Used to check permutation equivariance.
    pub fn permute_samples(&self, order: &[usize]) -> NormalizedMatrix {
        NormalizedMatrix {
            sample_ids: order.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            protein_ids: self.protein_ids.clone(),
            values: self.values.select(Axis(0), order),
            raw_means: self.raw_means.clone(),
            raw_sds: self.raw_sds.clone(),
            hour_labels: self
                .hour_labels
                .as_ref()
                .map(|h| order.iter().map(|&i| h[i]).collect()),
        }
    }

    pub fn write(&self, path: &Path, delimiter: char) -> Result<()> {
        write_matrix(
            path,
            &self.sample_ids,
            &self.protein_ids,
            &self.values,
            delimiter,
        )
    }
}

/// Feature selection strategy for very wide matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSelection {
    TopVariance,
    KMeansCluster,
}

/// Feature counts at or above this width get selection applied by default.
pub const DEFAULT_SELECTION_THRESHOLD: usize = 5000;

/// Protein indices ordered by descending raw variance, ties by ascending id.
fn variance_order(matrix: &NormalizedMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matrix.n_proteins()).collect();
    order.sort_by(|&a, &b| {
        matrix
            .raw_variance(b)
            .total_cmp(&matrix.raw_variance(a))
            .then_with(|| matrix.protein_ids[a].cmp(&matrix.protein_ids[b]))
    });
    order
}

/// Keeps a subset of proteins and re-z-scores the result.
pub fn select_features(
    matrix: &NormalizedMatrix,
    method: FeatureSelection,
    target_n: usize,
    seed: u64,
) -> Result<NormalizedMatrix> {
    let n = matrix.n_proteins();
    if target_n == 0 || target_n > n {
        return Err(Error::InvalidArgument(format!(
            "target_n {target_n} must be in 1..={n}"
        )));
    }
    let mut keep = match method {
        FeatureSelection::TopVariance => {
            let mut order = variance_order(matrix);
            order.truncate(target_n);
            order
        }
        FeatureSelection::KMeansCluster => {
            let k = n.div_ceil(target_n);
            let assignment = kmeans_columns(&matrix.values, k, seed, 100, 1e-6);
            clusters_by_variance(matrix, &assignment, k, target_n)
        }
    };
    keep.sort_unstable();
    let all: Vec<usize> = (0..matrix.n_samples()).collect();
    matrix.subset(&all, &keep)
}

fn clusters_by_variance(
    matrix: &NormalizedMatrix,
    assignment: &[usize],
    k: usize,
    target_n: usize,
) -> Vec<usize> {
    let mut members = vec![Vec::new(); k];
    for (p, &c) in assignment.iter().enumerate() {
        members[c].push(p);
    }
    let mut clusters: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|(_, ms)| !ms.is_empty())
        .map(|(c, ms)| {
            let mean_var =
                ms.iter().map(|&p| matrix.raw_variance(p)).sum::<f64>() / ms.len() as f64;
            (mean_var, c)
        })
        .collect();
    clusters.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut keep = Vec::new();
    for (_, c) in clusters {
        if keep.len() >= target_n {
            break;
        }
        keep.extend_from_slice(&members[c]);
    }
    keep
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lloyd's k-means over the columns of `data` with k-means++ seeding.
/// Returns the cluster index of every column.
pub fn kmeans_columns(
    data: &Array2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Vec<usize> {
    let (m, n) = data.dim();
    let k = k.clamp(1, n);
    let mut rng = seed::rng(seed);

    // k-means++ seeding
    let mut centers = Array2::<f64>::zeros((m, k));
    let first = rng.random_range(0..n);
    centers.column_mut(0).assign(&data.column(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|p| sq_dist(data.column(p), centers.column(0)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (p, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = p;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.column_mut(c).assign(&data.column(pick));
        for (p, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.column(p), centers.column(c)));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..max_iter {
        for (p, a) in assignment.iter_mut().enumerate() {
            let col = data.column(p);
            *a = (0..k)
                .map(|c| (sq_dist(col, centers.column(c)), c))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
                .map(|(_, c)| c)
                .unwrap_or(0);
        }
        let mut new_centers = Array2::<f64>::zeros((m, k));
        let mut counts = vec![0usize; k];
        for (p, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let mut col = new_centers.column_mut(c);
            col += &data.column(p);
        }
        let mut shift = 0.0f64;
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                new_centers.column_mut(c).assign(&centers.column(c));
                continue;
            }
            new_centers
                .column_mut(c)
                .mapv_inplace(|v| v / count as f64);
            shift = shift.max(sq_dist(new_centers.column(c), centers.column(c)).sqrt());
        }
        centers = new_centers;
        if shift < tol {
            break;
        }
    }
    assignment
}
