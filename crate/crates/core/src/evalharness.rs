//! Accuracy of predicted phases against known collection times.
//!
//! Unsupervised phases are identifiable only up to a rotation and a
//! reflection of the circle, so predictions are aligned to the truth before
//! any error is measured.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::cosinor::{acrophase_histogram, RhythmCall};
use crate::dataio::NormalizedMatrix;
use crate::error::{Error, Result};
use crate::phase::{code_angle, wrap_hours, PhaseVector, HOURS_PER_DAY};

/// Largest possible circular distance in hours.
pub const MAX_ERROR_HOURS: f64 = 12.0;
pub const DEFAULT_GRID_STEP: f64 = 0.1;
/// Bins of the acrophase rose histogram (one per hour).
pub const ROSE_BINS: usize = 24;

fn check_hour(h: f64) -> Result<()> {
    if (0.0..HOURS_PER_DAY).contains(&h) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("hour {h} outside [0, 24)")))
    }
}

/// `min(|a − b|, 24 − |a − b|)`.
pub fn circular_error(a_hours: f64, b_hours: f64) -> Result<f64> {
    check_hour(a_hours)?;
    check_hour(b_hours)?;
    Ok(circ(a_hours, b_hours))
}

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % HOURS_PER_DAY;
    d.min(HOURS_PER_DAY - d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPrediction {
    /// Predictions after alignment, `(orientation·pred − shift) mod 24`.
    pub predicted_hours: Vec<f64>,
    pub truth_hours: Vec<f64>,
    pub orientation: i8,
    pub shift_hours: f64,
    pub per_sample_error_hours: Vec<f64>,
}

impl AlignedPrediction {
    pub fn mean_error(&self) -> f64 {
        mean(&self.per_sample_error_hours)
    }

    pub fn median_error(&self) -> f64 {
        median(&self.per_sample_error_hours)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    }
}

// Mean and sum of squared circular errors after removing `shift`.
fn errors_at(oriented: &[f64], truth: &[f64], shift: f64) -> (f64, f64) {
    let (mut sum, mut sq) = (0.0, 0.0);
    for (&p, &t) in oriented.iter().zip(truth) {
        let e = circ(p - shift, t);
        sum += e;
        sq += e * e;
    }
    (sum / truth.len() as f64, sq)
}

// Relative tolerance under which two candidate scores count as tied.
const TIE_TOL: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Finds the orientation and shift minimizing the mean circular error.
///
/// The mean error is piecewise linear in the shift with convex kinks only
/// where one sample's error is zero, so its minimum lies on one of those
/// `m` candidate shifts per orientation and the search is exact.
pub fn align(predicted: &PhaseVector, truth_hours: &[f64]) -> Result<AlignedPrediction> {
    let m = predicted.len();
    if m != truth_hours.len() {
        return Err(Error::Shape(format!(
            "{m} predictions for {} labels",
            truth_hours.len()
        )));
    }
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "alignment needs at least 3 labeled samples, got {m}"
        )));
    }
    for &t in truth_hours {
        check_hour(t)?;
    }
    let hours = predicted.to_hours();
    // (mean error, squared error, orientation, shift). The mean error can be
    // flat between kinks; the squared error breaks such ties in a way that
    // does not depend on where the predictions sit on the circle.
    let mut best: Option<(f64, f64, i8, f64)> = None;
    for orientation in [1i8, -1] {
        let oriented: Vec<f64> = hours
            .iter()
            .map(|&h| wrap_hours(f64::from(orientation) * h))
            .collect();
        for (p, t) in oriented.iter().zip(truth_hours) {
            let shift = wrap_hours(p - t);
            let (e, sq) = errors_at(&oriented, truth_hours, shift);
            let better = match best {
                None => true,
                Some((be, bsq, bo, bs)) => {
                    if !tied(e, be) {
                        e < be
                    } else if !tied(sq, bsq) {
                        sq < bsq
                    } else {
                        (orientation, -shift) > (bo, -bs)
                    }
                }
            };
            if better {
                best = Some((e, sq, orientation, shift));
            }
        }
    }
    let (_, _, orientation, shift_hours) = best.expect("m ≥ 3");
    let predicted_hours: Vec<f64> = hours
        .iter()
        .map(|&h| wrap_hours(f64::from(orientation) * h - shift_hours))
        .collect();
    let per_sample_error_hours = predicted_hours
        .iter()
        .zip(truth_hours)
        .map(|(&p, &t)| circ(p, t))
        .collect();
    Ok(AlignedPrediction {
        predicted_hours,
        truth_hours: truth_hours.to_vec(),
        orientation,
        shift_hours,
        per_sample_error_hours,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub error_grid_hours: Vec<f64>,
    pub fraction_correct: Vec<f64>,
    pub nauc: f64,
}

/// Fraction of samples within each error tolerance on `0, step, …, 12`.
///
/// `nauc` is the exact area under the empirical step curve divided by 12,
/// which equals `1 − mean_error / 12` and does not depend on the grid.
pub fn roc(aligned: &AlignedPrediction, grid_step_hours: f64) -> Result<RocCurve> {
    if !(grid_step_hours > 0.0 && grid_step_hours <= MAX_ERROR_HOURS) {
        return Err(Error::InvalidArgument(format!(
            "grid step {grid_step_hours} must be in (0, 12]"
        )));
    }
    let errors = &aligned.per_sample_error_hours;
    if errors.is_empty() {
        return Err(Error::Empty("no aligned samples".into()));
    }
    let steps = (MAX_ERROR_HOURS / grid_step_hours).round() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| (k as f64 * grid_step_hours).min(MAX_ERROR_HOURS))
        .collect();
    let m = errors.len() as f64;
    let fraction_correct = grid
        .iter()
        .map(|&e| errors.iter().filter(|&&x| x <= e).count() as f64 / m)
        .collect();
    let nauc = (1.0 - mean(errors) / MAX_ERROR_HOURS).clamp(0.0, 1.0);
    Ok(RocCurve {
        error_grid_hours: grid,
        fraction_correct,
        nauc,
    })
}

/// Sample and protein screening counts echoed into the summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutlierSummary {
    pub sample_outliers: usize,
    pub protein_outliers: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    pub plots: bool,
    pub outliers: Option<OutlierSummary>,
}

/// Writes `roc.tsv`, `scatter.tsv`, `summary.txt` and, when rhythm calls
/// are given, `rose.tsv`. With `plots` set, SVG renderings are added.
pub fn emit_reports(
    aligned: &AlignedPrediction,
    roc: &RocCurve,
    calls: Option<&[RhythmCall]>,
    out_dir: &Path,
    options: &ReportOptions,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };

    let mut t = String::from("error_hours\tfraction\n");
    for (e, f) in roc.error_grid_hours.iter().zip(&roc.fraction_correct) {
        writeln!(t, "{e:.4}\t{f:.6}").unwrap();
    }
    write("roc.tsv", t)?;

    let mut t = String::from("truth_hours\tpredicted_hours_aligned\n");
    for (a, b) in aligned.truth_hours.iter().zip(&aligned.predicted_hours) {
        writeln!(t, "{a:.6}\t{b:.6}").unwrap();
    }
    write("scatter.tsv", t)?;

    let rose = match calls {
        Some(calls) => {
            let bins = acrophase_histogram(calls, ROSE_BINS)?;
            let width = HOURS_PER_DAY / ROSE_BINS as f64;
            let mut t = String::from("bin_start_hours\tbin_end_hours\tcount\n");
            for (k, c) in bins.iter().enumerate() {
                writeln!(
                    t,
                    "{:.2}\t{:.2}\t{c}",
                    k as f64 * width,
                    (k + 1) as f64 * width
                )
                .unwrap();
            }
            write("rose.tsv", t)?;
            Some(bins)
        }
        None => None,
    };

    let errs = &aligned.per_sample_error_hours;
    let within = |h: f64| errs.iter().filter(|&&e| e <= h).count();
    let mut s = String::new();
    writeln!(s, "nauc: {:.4}", roc.nauc).unwrap();
    writeln!(s, "median_error_hours: {:.4}", aligned.median_error()).unwrap();
    writeln!(s, "mean_error_hours: {:.4}", aligned.mean_error()).unwrap();
    writeln!(s, "samples: {}", errs.len()).unwrap();
    writeln!(s, "within_1h: {}", within(1.0)).unwrap();
    writeln!(s, "within_2h: {}", within(2.0)).unwrap();
    writeln!(s, "orientation: {}", aligned.orientation).unwrap();
    writeln!(s, "shift_hours: {:.4}", aligned.shift_hours).unwrap();
    if let Some(calls) = calls {
        writeln!(s, "proteins: {}", calls.len()).unwrap();
        writeln!(
            s,
            "rhythmic: {}",
            calls.iter().filter(|c| c.rhythmic).count()
        )
        .unwrap();
    }
    if let Some(o) = options.outliers {
        writeln!(s, "sample_outliers: {}", o.sample_outliers).unwrap();
        writeln!(s, "protein_outliers: {}", o.protein_outliers).unwrap();
    }
    write("summary.txt", s)?;

    if options.plots {
        write("roc.svg", svg::roc(roc))?;
        write("scatter.svg", svg::scatter(aligned))?;
        if let Some(bins) = rose {
            write("rose.svg", svg::rose(&bins))?;
        }
    }
    Ok(())
}

mod svg {
    use std::f64::consts::{FRAC_PI_2, TAU};
    use std::fmt::Write as _;

    use super::{AlignedPrediction, RocCurve, HOURS_PER_DAY, MAX_ERROR_HOURS};

    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;

    fn open() -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        )
    }

    fn frame(s: &mut String, x_label: &str, y_label: &str) {
        let w = SIZE - 2.0 * PAD;
        writeln!(
            s,
            "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{w}\" height=\"{w}\" fill=\"none\" stroke=\"black\"/>"
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>",
            SIZE / 2.0,
            SIZE - 10.0
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"12\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 12 {})\">{y_label}</text>",
            SIZE / 2.0,
            SIZE / 2.0
        )
        .unwrap();
    }

    // maps data (x in [0, xmax], y in [0, ymax]) into the plot frame
    fn px(x: f64, xmax: f64) -> f64 {
        PAD + x / xmax * (SIZE - 2.0 * PAD)
    }

    fn py(y: f64, ymax: f64) -> f64 {
        SIZE - PAD - y / ymax * (SIZE - 2.0 * PAD)
    }

    pub fn roc(roc: &RocCurve) -> String {
        let mut s = open();
        frame(&mut s, "error (h)", "fraction correct");
        let pts: Vec<String> = roc
            .error_grid_hours
            .iter()
            .zip(&roc.fraction_correct)
            .map(|(&e, &f)| format!("{:.2},{:.2}", px(e, MAX_ERROR_HOURS), py(f, 1.0)))
            .collect();
        writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>",
            pts.join(" ")
        )
        .unwrap();
        writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">nAUC {:.4}</text>",
            px(7.0, MAX_ERROR_HOURS),
            py(0.1, 1.0),
            roc.nauc
        )
        .unwrap();
        s.push_str("</svg>\n");
        s
    }

    pub fn scatter(aligned: &AlignedPrediction) -> String {
        let mut s = open();
        frame(&mut s, "true time (h)", "predicted time (h)");
        let d = HOURS_PER_DAY;
        for (x0, y0, x1, y1) in [
            (0.0, 0.0, d, d),
            (0.0, d - 2.0, 2.0, d),
            (d - 2.0, 0.0, d, 2.0),
        ] {
            writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"gray\" stroke-dasharray=\"4\"/>",
                px(x0, d),
                py(y0, d),
                px(x1, d),
                py(y1, d)
            )
            .unwrap();
        }
        for (&t, &p) in aligned.truth_hours.iter().zip(&aligned.predicted_hours) {
            writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"darkorange\"/>",
                px(t, d),
                py(p, d)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn rose(bins: &[usize]) -> String {
        let mut s = open();
        let c = SIZE / 2.0;
        let r_max = c - PAD;
        let top = bins.iter().copied().max().unwrap_or(0).max(1) as f64;
        let width = TAU / bins.len() as f64;
        writeln!(
            s,
            "<circle cx=\"{c}\" cy=\"{c}\" r=\"{r_max}\" fill=\"none\" stroke=\"gray\"/>"
        )
        .unwrap();
        // clockwise from the top, like a clock face
        let at = |theta: f64, r: f64| {
            (
                c + r * (theta - FRAC_PI_2).cos(),
                c + r * (theta - FRAC_PI_2).sin(),
            )
        };
        for (k, &count) in bins.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let r = r_max * (count as f64 / top).sqrt();
            let (x0, y0) = at(k as f64 * width, r);
            let (x1, y1) = at((k + 1) as f64 * width, r);
            writeln!(
                s,
                "<path d=\"M {c} {c} L {x0:.2} {y0:.2} A {r:.2} {r:.2} 0 0 1 {x1:.2} {y1:.2} Z\" fill=\"seagreen\" fill-opacity=\"0.7\" stroke=\"white\"/>"
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Phase from the angle of each sample on the first two principal
/// components; a weak baseline for comparison.
pub fn pca_angle_baseline(data: &NormalizedMatrix) -> Result<PhaseVector> {
    let x = data.values();
    let m = x.nrows();
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "PCA baseline needs ≥ 3 samples, got {m}"
        )));
    }
    let mut gram: Array2<f64> = x.dot(&x.t());
    let mut scores = Vec::with_capacity(2);
    for _ in 0..2 {
        let (lambda, v) = power_iteration(&gram);
        for i in 0..m {
            for j in 0..m {
                gram[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        scores.push(
            v.iter()
                .map(|vi| vi * lambda.max(0.0).sqrt())
                .collect::<Vec<f64>>(),
        );
    }
    Ok(PhaseVector::from_radians(
        (0..m).map(|i| code_angle(scores[1][i], scores[0][i])),
    ))
}

// Dominant eigenpair of a symmetric positive semi-definite matrix, with a
// deterministic start and a sign convention fixing the first non-zero entry
// positive.
fn power_iteration(a: &Array2<f64>) -> (f64, Vec<f64>) {
    let m = a.nrows();
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + i as f64 / m as f64).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| a[[i, j]] * v[j]).sum())
            .collect();
        let nw = norm(&w);
        if nw == 0.0 {
            return (0.0, v);
        }
        let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        lambda = nw;
        if delta < 1e-13 {
            break;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    (lambda, v)
}
