//! Synthetic proteomes with planted cosine rhythms and known sample times.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};

use crate::cosinor::CosinorParams;
use crate::dataio::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::phase::{wrap_angle, wrap_hours, HOURS_PER_DAY};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseSampling {
    /// Sample hours uniform on `[0, 24)`.
    #[default]
    Uniform,
    /// Two wrapped-normal bumps, mimicking unbalanced collection times.
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Student-t scaled so its standard deviation equals `noise_sd` (df > 2).
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub rhythmic_fraction: f64,
    /// `(period_hours, fraction)` pairs over the rhythmic proteins.
    pub period_mix: Vec<(f64, f64)>,
    pub amplitude_range: (f64, f64),
    pub mesor_range: (f64, f64),
    pub noise_sd: f64,
    pub noise: NoiseKind,
    pub phase_sampling: PhaseSampling,
    pub missing_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            m: 24,
            n: 400,
            rhythmic_fraction: 0.4,
            period_mix: vec![(24.0, 1.0)],
            amplitude_range: (0.5, 1.5),
            mesor_range: (2.0, 4.0),
            noise_sd: 0.4,
            noise: NoiseKind::Gaussian,
            phase_sampling: PhaseSampling::Uniform,
            missing_fraction: 0.0,
            seed: 0,
        }
    }
}

fn ordered(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.m < 2 || self.n < 2 {
            return bad(format!("need m, n ≥ 2 (got {} x {})", self.m, self.n));
        }
        if !(0.0..=1.0).contains(&self.rhythmic_fraction) {
            return bad(format!(
                "rhythmic fraction {} outside [0, 1]",
                self.rhythmic_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad(format!(
                "missing fraction {} outside [0, 1)",
                self.missing_fraction
            ));
        }
        if !ordered(self.amplitude_range) || self.amplitude_range.0 <= 0.0 {
            return bad(format!(
                "amplitude range {:?} must be positive and ordered",
                self.amplitude_range
            ));
        }
        if !ordered(self.mesor_range) {
            return bad(format!(
                "mesor range {:?} must be ordered",
                self.mesor_range
            ));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad(format!("noise sd {} must be non-negative", self.noise_sd));
        }
        if let NoiseKind::StudentT { df } = self.noise {
            if !(df > 2.0) {
                return bad(format!("Student-t noise needs df > 2, got {df}"));
            }
        }
        if self.period_mix.is_empty()
            || self
                .period_mix
                .iter()
                .any(|&(t, f)| !(t > 0.0) || !(f >= 0.0) || !t.is_finite())
        {
            return bad(format!("invalid period mix {:?}", self.period_mix));
        }
        let total: f64 = self.period_mix.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("period mix fractions sum to {total}, expected 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub sample_hours: Vec<f64>,
    /// Planted model per protein in raw units; `phase = 2π·t/24`, so a
    /// period `T` appears as `ω = 24/T`. Flat proteins have amplitude 0.
    pub params: Vec<CosinorParams>,
    pub rhythmic: Vec<bool>,
}

/// Splits `total` into integer counts proportional to `fractions`, the
/// rounding remainder going to the last entry.
fn apportion(total: usize, fractions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|f| (f * total as f64).round() as usize)
        .collect();
    let assigned: usize = counts[..counts.len() - 1].iter().sum::<usize>().min(total);
    *counts.last_mut().expect("non-empty") = total - assigned;
    counts
}

fn sample_hours(spec: &SynthSpec) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(spec.seed, "hours"));
    match spec.phase_sampling {
        PhaseSampling::Uniform => (0..spec.m)
            .map(|_| rng.random_range(0.0..HOURS_PER_DAY))
            .collect(),
        PhaseSampling::Clustered => {
            let first = rng.random_range(0.0..HOURS_PER_DAY);
            let second = wrap_hours(first + rng.random_range(8.0..16.0));
            let bump = Normal::new(0.0, 2.0).expect("valid sd");
            (0..spec.m)
                .map(|_| {
                    let c = if rng.random_bool(0.5) { first } else { second };
                    wrap_hours(c + bump.sample(&mut rng))
                })
                .collect()
        }
    }
}

/// Draws a matrix and its ground truth; identical specs give identical
/// output.
pub fn generate(spec: &SynthSpec) -> Result<(ExpressionMatrix, SynthTruth)> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    let hours = sample_hours(spec);

    let mut rng = seed::rng(seed::derive(spec.seed, "proteins"));
    let n_rhythmic = (spec.rhythmic_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let fractions: Vec<f64> = spec.period_mix.iter().map(|p| p.1).collect();
    let mut period = vec![None; n];
    let mut at = 0;
    for (k, count) in apportion(n_rhythmic, &fractions).into_iter().enumerate() {
        for &p in &order[at..at + count] {
            period[p] = Some(spec.period_mix[k].0);
        }
        at += count;
    }

    let params: Vec<CosinorParams> = period
        .iter()
        .map(|t| {
            let mesor = rng.random_range(spec.mesor_range.0..=spec.mesor_range.1);
            match t {
                Some(t) => CosinorParams {
                    mesor,
                    amplitude: rng.random_range(spec.amplitude_range.0..=spec.amplitude_range.1),
                    acrophase: wrap_angle(rng.random_range(0.0..TAU)),
                    omega: HOURS_PER_DAY / t,
                },
                None => CosinorParams {
                    mesor,
                    amplitude: 0.0,
                    acrophase: 0.0,
                    omega: 1.0,
                },
            }
        })
        .collect();

    let mut noise_rng = seed::rng(seed::derive(spec.seed, "noise"));
    let gaussian = Normal::new(0.0, 1.0).expect("unit normal");
    let student = match spec.noise {
        NoiseKind::StudentT { df } => Some((
            StudentT::new(df).expect("validated df"),
            (df / (df - 2.0)).sqrt(),
        )),
        NoiseKind::Gaussian => None,
    };
    let mut values = Array2::zeros((m, n));
    for i in 0..m {
        let phase = TAU * hours[i] / HOURS_PER_DAY;
        for (p, c) in params.iter().enumerate() {
            let eps = match &student {
                Some((t, sd)) => t.sample(&mut noise_rng) / sd,
                None => gaussian.sample(&mut noise_rng),
            };
            values[[i, p]] = c.evaluate(phase) + spec.noise_sd * eps;
        }
    }

    let n_missing = (spec.missing_fraction * (m * n) as f64).round() as usize;
    if n_missing > 0 {
        let mut mask_rng = seed::rng(seed::derive(spec.seed, "missing"));
        for cell in index::sample(&mut mask_rng, m * n, n_missing) {
            values[[cell / n, cell % n]] = f64::NAN;
        }
    }

    let matrix = ExpressionMatrix::new(
        (0..m).map(|i| format!("S{:03}", i + 1)).collect(),
        (0..n).map(|p| format!("P{:04}", p + 1)).collect(),
        values,
        Some(hours.clone()),
    )?;
    Ok((
        matrix,
        SynthTruth {
            sample_hours: hours,
            rhythmic: period.iter().map(Option::is_some).collect(),
            params,
        },
    ))
}
