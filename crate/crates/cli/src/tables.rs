//! Tab-separated tables written and read by the subcommands.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use circaphase::dataio::parse_labels;
use circaphase::phase::{radians_to_hours, wrap_hours, HOURS_PER_DAY};
use circaphase::{CosinorParams, PhaseVector, RhythmCall, RhythmThresholds};

use crate::CliError;

pub const PHASE_HEADER: &str = "sample_id\tphase_rad\tphase_hours\toutlier";
pub const RHYTHM_HEADER: &str = "protein_id\tmesor\tamplitude\tacrophase_rad\tpeak_time_hours\tperiod_hours\tp_value\tq_value\tr_squared\tr_amp\trhythmic";

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::new(
        "parse",
        format!("{} line {line}: {message}", path.display()),
    )
}

/// Per-sample phases, optionally with outlier flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTable {
    pub sample_ids: Vec<String>,
    pub hours: Vec<f64>,
    pub outlier: Option<Vec<bool>>,
}

impl PhaseTable {
    pub fn phases(&self) -> PhaseVector {
        PhaseVector::from_hours(self.hours.iter().copied())
    }

    /// Rows reordered to follow `ids`. Both sides must hold the same set.
    pub fn reorder(&self, ids: &[String]) -> Result<PhaseTable, CliError> {
        let index: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let missing: Vec<&str> = ids
            .iter()
            .filter(|s| !index.contains_key(s.as_str()))
            .map(String::as_str)
            .collect();
        let known: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let extra: Vec<&str> = self
            .sample_ids
            .iter()
            .filter(|s| !known.contains(s.as_str()))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            return Err(CliError::new(
                "sample_mismatch",
                format!(
                    "phase table and matrix disagree on samples; without phase: [{}]; not in matrix: [{}]",
                    missing.join(","),
                    extra.join(",")
                ),
            ));
        }
        let order: Vec<usize> = ids.iter().map(|s| index[s.as_str()]).collect();
        Ok(PhaseTable {
            sample_ids: ids.to_vec(),
            hours: order.iter().map(|&i| self.hours[i]).collect(),
            outlier: self
                .outlier
                .as_ref()
                .map(|o| order.iter().map(|&i| o[i]).collect()),
        })
    }
}

pub fn format_phases(ids: &[String], phases: &PhaseVector, outlier: &[bool]) -> String {
    let mut t = format!("{PHASE_HEADER}\n");
    for ((id, &p), &o) in ids.iter().zip(phases.iter()).zip(outlier) {
        writeln!(t, "{id}\t{p}\t{}\t{o}", radians_to_hours(p)).unwrap();
    }
    t
}

/// Reads a phase table with a `phase_hours` or `phase_rad` column, or a
/// plain two-column `sample_id<TAB>hour` labels file.
pub fn read_phases(path: &Path) -> Result<PhaseTable, CliError> {
    let text = read_file(path)?;
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .ok_or_else(|| CliError::new("empty", format!("{} holds no rows", path.display())))?;
    let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let (hours_col, rad_col) = (find("phase_hours"), find("phase_rad"));
    if hours_col.is_none() && rad_col.is_none() {
        let labels = parse_labels(&text, '\t')?;
        return Ok(PhaseTable {
            sample_ids: labels.iter().map(|(s, _)| s.clone()).collect(),
            hours: labels.iter().map(|(_, h)| wrap_hours(*h)).collect(),
            outlier: None,
        });
    }
    let outlier_col = find("outlier");
    let mut table = PhaseTable {
        sample_ids: Vec::new(),
        hours: Vec::new(),
        outlier: outlier_col.map(|_| Vec::new()),
    };
    let mut seen = std::collections::HashSet::new();
    let mut past_header = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !past_header {
            past_header = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != cols.len() {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected {} fields, found {}", cols.len(), f.len()),
            ));
        }
        let value = |c: usize| -> Result<f64, CliError> {
            f[c].parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, i + 1, format!("cannot parse {:?}", f[c])))
        };
        let h = match hours_col {
            Some(c) => wrap_hours(value(c)?),
            None => wrap_hours(radians_to_hours(value(rad_col.unwrap())?)),
        };
        if !seen.insert(f[0].to_string()) {
            return Err(CliError::new(
                "duplicate_id",
                format!("duplicate sample identifier: {}", f[0]),
            ));
        }
        table.sample_ids.push(f[0].to_string());
        table.hours.push(h);
        if let (Some(c), Some(o)) = (outlier_col, table.outlier.as_mut()) {
            o.push(match f[c] {
                "true" => true,
                "false" => false,
                v => {
                    return Err(parse_error(
                        path,
                        i + 1,
                        format!("cannot parse outlier flag {v:?}"),
                    ))
                }
            });
        }
    }
    Ok(table)
}

pub fn format_rhythm_table(calls: &[RhythmCall], thresholds: &RhythmThresholds) -> String {
    let mut t = format!("# thresholds: {}\n{RHYTHM_HEADER}\n", thresholds.describe());
    for c in calls {
        writeln!(
            t,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.protein_id,
            c.params.mesor,
            c.params.amplitude,
            c.params.acrophase,
            c.params.peak_time_hours(),
            c.params.period_hours(),
            c.p_value,
            c.q_value,
            c.r_squared,
            c.r_amp,
            c.rhythmic
        )
        .unwrap();
    }
    t
}

pub fn read_rhythm_table(path: &Path) -> Result<Vec<RhythmCall>, CliError> {
    let text = read_file(path)?;
    let mut calls = Vec::new();
    let mut past_header = false;
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !past_header {
            if line.trim_end() != RHYTHM_HEADER {
                return Err(parse_error(path, i + 1, "not a rhythm table header"));
            }
            past_header = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 11 {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected 11 fields, found {}", f.len()),
            ));
        }
        let v = |c: usize| -> Result<f64, CliError> {
            f[c].parse::<f64>()
                .map_err(|_| parse_error(path, i + 1, format!("cannot parse {:?}", f[c])))
        };
        let period = v(5)?;
        if !(period > 0.0) {
            return Err(parse_error(path, i + 1, "period_hours must be positive"));
        }
        let rhythmic = match f[10] {
            "true" => true,
            "false" => false,
            x => {
                return Err(parse_error(
                    path,
                    i + 1,
                    format!("cannot parse rhythmic flag {x:?}"),
                ))
            }
        };
        if !seen.insert(f[0].to_string()) {
            return Err(CliError::new(
                "duplicate_id",
                format!(
                    "duplicate protein identifier in {}: {}",
                    path.display(),
                    f[0]
                ),
            ));
        }
        calls.push(RhythmCall {
            protein_id: f[0].to_string(),
            params: CosinorParams {
                mesor: v(1)?,
                amplitude: v(2)?,
                acrophase: v(3)?,
                omega: HOURS_PER_DAY / period,
            },
            p_value: v(6)?,
            q_value: v(7)?,
            r_squared: v(8)?,
            r_amp: v(9)?,
            rhythmic,
        });
    }
    if !past_header {
        return Err(CliError::new(
            "empty",
            format!("{} holds no rows", path.display()),
        ));
    }
    Ok(calls)
}

/// Acrophase histogram with bin edges in degrees.
pub fn format_histogram(bins: &[usize]) -> String {
    let width = 360.0 / bins.len() as f64;
    let mut t = String::from("bin_start_deg\tbin_end_deg\tcount\n");
    for (k, c) in bins.iter().enumerate() {
        writeln!(t, "{}\t{}\t{c}", k as f64 * width, (k + 1) as f64 * width).unwrap();
    }
    t
}

/// Two histograms side by side, one count column per group.
pub fn format_paired_histogram(a: &[usize], b: &[usize]) -> String {
    let width = 360.0 / a.len() as f64;
    let mut t = String::from("bin_start_deg\tbin_end_deg\tcount_a\tcount_b\n");
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        writeln!(
            t,
            "{}\t{}\t{x}\t{y}",
            k as f64 * width,
            (k + 1) as f64 * width
        )
        .unwrap();
    }
    t
}

pub fn format_labels(ids: &[String], hours: &[f64]) -> String {
    let mut t = String::from("sample_id\thour\n");
    for (id, h) in ids.iter().zip(hours) {
        writeln!(t, "{id}\t{h}").unwrap();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn phase_table_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("phases.tsv");
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let phases = PhaseVector::from_hours([1.0, 13.5, 23.25]);
        write_file(&path, &format_phases(&ids, &phases, &[false, true, false])).unwrap();
        let t = read_phases(&path).unwrap();
        assert_eq!(t.sample_ids, ids);
        for (a, b) in t.hours.iter().zip([1.0, 13.5, 23.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(t.outlier, Some(vec![false, true, false]));
    }

    #[test]
    fn labels_file_reads_as_phases() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.tsv");
        write_file(&path, "sample_id\thour\nx\t3\ny\t25\n").unwrap();
        let t = read_phases(&path).unwrap();
        assert_eq!(t.hours, vec![3.0, 1.0]);
        assert_eq!(t.outlier, None);
    }

    #[test]
    fn reorder_reports_mismatch() {
        let t = PhaseTable {
            sample_ids: vec!["a".into(), "b".into()],
            hours: vec![1.0, 2.0],
            outlier: None,
        };
        let r = t.reorder(&["b".into(), "a".into()]).unwrap();
        assert_eq!(r.hours, vec![2.0, 1.0]);
        let e = t.reorder(&["a".into(), "c".into()]).unwrap_err();
        assert!(e.message.contains('c') && e.message.contains('b'));
    }

    #[test]
    fn rhythm_table_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rhythm.tsv");
        let calls = vec![RhythmCall {
            protein_id: "P1".into(),
            params: CosinorParams {
                mesor: 0.1,
                amplitude: 1.3,
                acrophase: 2.2,
                omega: 2.0,
            },
            p_value: 1.5e-7,
            q_value: 3e-6,
            r_squared: 0.8,
            r_amp: 0.4,
            rhythmic: true,
        }];
        let text = format_rhythm_table(&calls, &RhythmThresholds::ultradian());
        assert!(text.starts_with("# thresholds: q<0.0005, rAmp≥0.2, R²≥0.6"));
        write_file(&path, &text).unwrap();
        let back = read_rhythm_table(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].protein_id, "P1");
        assert!((back[0].params.omega - 2.0).abs() < 1e-12);
        assert_eq!(back[0].q_value, 3e-6);
    }

    #[test]
    fn histogram_edges_in_degrees() {
        let t = format_histogram(&[1, 0, 2, 0]);
        assert_eq!(
            t,
            "bin_start_deg\tbin_end_deg\tcount\n0\t90\t1\n90\t180\t0\n180\t270\t2\n270\t360\t0\n"
        );
    }
}
