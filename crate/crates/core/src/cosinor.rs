//! Single-component cosinor regression, multiple-testing correction and
//! rhythmicity calls.
//!
//! The model is `x ≈ L + A·cos(ω·φ + acrophase)` where `φ` is the sample
//! phase in radians and `ω` counts cycles per 24 h. It is fitted in closed
//! form through the linearization `L + β_c·cos(ωφ) + β_s·sin(ωφ)`.

use std::f64::consts::TAU;

use crate::dataio::NormalizedMatrix;
use crate::error::{Error, Result};
use crate::phase::{wrap_angle, PhaseVector, HOURS_PER_DAY};

/// Floor applied to `|mesor|` when computing relative amplitude.
pub const RAMP_MESOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosinorParams {
    pub mesor: f64,
    pub amplitude: f64,
    /// Phase offset in `[0, 2π)`.
    pub acrophase: f64,
    /// Cycles per 24 h; the period is `24 / omega` hours.
    pub omega: f64,
}

impl CosinorParams {
    pub fn evaluate(&self, phase: f64) -> f64 {
        self.mesor + self.amplitude * (self.omega * phase + self.acrophase).cos()
    }

    pub fn period_hours(&self) -> f64 {
        HOURS_PER_DAY / self.omega
    }

    /// Clock time of a model maximum: `24·((−acrophase/ω) mod 2π)/2π`.
    pub fn peak_time_hours(&self) -> f64 {
        HOURS_PER_DAY * wrap_angle(-self.acrophase / self.omega) / TAU
    }

    /// Makes the amplitude non-negative and wraps the acrophase.
    pub fn canonicalize(&mut self) {
        if self.amplitude < 0.0 {
            self.amplitude = -self.amplitude;
            self.acrophase += std::f64::consts::PI;
        }
        self.acrophase = wrap_angle(self.acrophase);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosinorFit {
    pub params: CosinorParams,
    pub r_squared: f64,
    pub p_value: f64,
    /// Set when the design matrix is rank deficient (phases do not span the
    /// circle at the requested frequency).
    pub degenerate: bool,
}

/// F(2, ν) survival function: `(ν / (ν + 2F))^(ν/2)`.
fn f2_survival(f: f64, nu: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    (nu / (nu + 2.0 * f)).powf(nu / 2.0)
}

/// Least-squares cosinor fit with an F-test against the mesor-only model.
pub fn fit_cosinor(values: &[f64], phases: &[f64], omega: f64) -> Result<CosinorFit> {
    let m = values.len();
    if phases.len() != m {
        return Err(Error::Shape(format!(
            "{m} values but {} phases",
            phases.len()
        )));
    }
    if m < 4 {
        return Err(Error::InvalidArgument(format!(
            "cosinor fit needs at least 4 samples, got {m}"
        )));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "omega must be positive, got {omega}"
        )));
    }
    let mf = m as f64;
    let (cos, sin): (Vec<f64>, Vec<f64>) = phases
        .iter()
        .map(|&p| {
            let t = omega * p;
            (t.cos(), t.sin())
        })
        .unzip();
    let mean_x = values.iter().sum::<f64>() / mf;
    let mean_c = cos.iter().sum::<f64>() / mf;
    let mean_s = sin.iter().sum::<f64>() / mf;

    // centered normal equations for (β_c, β_s)
    let (mut scc, mut sss, mut scs, mut scx, mut ssx, mut sst) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let c = cos[i] - mean_c;
        let s = sin[i] - mean_s;
        let x = values[i] - mean_x;
        scc += c * c;
        sss += s * s;
        scs += c * s;
        scx += c * x;
        ssx += s * x;
        sst += x * x;
    }
    let det = scc * sss - scs * scs;
    let scale = (scc + sss).max(f64::MIN_POSITIVE);
    let null_fit = |degenerate| CosinorFit {
        params: CosinorParams {
            mesor: mean_x,
            amplitude: 0.0,
            acrophase: 0.0,
            omega,
        },
        r_squared: 0.0,
        p_value: 1.0,
        degenerate,
    };
    if det <= 1e-10 * scale * scale {
        return Ok(null_fit(true));
    }
    if sst <= 0.0 {
        return Ok(null_fit(false));
    }
    let beta_c = (sss * scx - scs * ssx) / det;
    let beta_s = (scc * ssx - scs * scx) / det;
    let mesor = mean_x - beta_c * mean_c - beta_s * mean_s;

    let sse: f64 = (0..m)
        .map(|i| {
            let fitted = mesor + beta_c * cos[i] + beta_s * sin[i];
            (values[i] - fitted).powi(2)
        })
        .sum();
    let r_squared = 1.0 - sse / sst;
    let p_value = if m > 3 {
        let nu = (m - 3) as f64;
        let ssr = (sst - sse).max(0.0);
        let f = if sse > 0.0 {
            (ssr / 2.0) / (sse / nu)
        } else {
            f64::INFINITY
        };
        f2_survival(f, nu).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(CosinorFit {
        params: CosinorParams {
            mesor,
            amplitude: beta_c.hypot(beta_s),
            acrophase: wrap_angle((-beta_s).atan2(beta_c)),
            omega,
        },
        r_squared,
        p_value,
        degenerate: false,
    })
}

/// Benjamini–Hochberg adjusted p-values, returned in input order.
pub fn benjamini_hochberg(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!(
            "p-value {p} outside [0, 1]"
        )));
    }
    let n = p_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; n];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // N/j ≥ 1 rounds to ≥ 1, so q never falls below p.
        let adjusted = p_values[i] * (n as f64 / (rank + 1) as f64);
        running = running.min(adjusted);
        q[i] = running.min(1.0);
    }
    Ok(q)
}

/// Which abundance scale relative amplitude is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeScale {
    /// Back-transform the fit to raw abundances before dividing by the mesor.
    #[default]
    Raw,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhythmThresholds {
    pub q_max: f64,
    pub ramp_min: f64,
    pub r2_min: f64,
    pub period_hours: f64,
}

impl RhythmThresholds {
    /// 24 h calls: q < 0.05, rAmp ≥ 0.1, R² ≥ 0.1.
    pub fn circadian() -> Self {
        RhythmThresholds {
            q_max: 0.05,
            ramp_min: 0.1,
            r2_min: 0.1,
            period_hours: 24.0,
        }
    }

    /// 12 h calls: q < 5e-4, rAmp ≥ 0.2, R² ≥ 0.6.
    pub fn ultradian() -> Self {
        RhythmThresholds {
            q_max: 5e-4,
            ramp_min: 0.2,
            r2_min: 0.6,
            period_hours: 12.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_max > 0.0
            && self.q_max <= 1.0
            && self.ramp_min > 0.0
            && self.r2_min > 0.0
            && self.period_hours > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid rhythm thresholds {self:?}"
            )))
        }
    }

    pub fn omega(&self) -> f64 {
        HOURS_PER_DAY / self.period_hours
    }

    pub fn passes(&self, q_value: f64, r_amp: f64, r_squared: f64) -> bool {
        q_value < self.q_max && r_amp >= self.ramp_min && r_squared >= self.r2_min
    }

    /// Human-readable threshold summary used in table headers.
    pub fn describe(&self) -> String {
        format!(
            "q<{}, rAmp≥{}, R²≥{}, period_hours={}",
            self.q_max, self.ramp_min, self.r2_min, self.period_hours
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhythmCall {
    pub protein_id: String,
    pub params: CosinorParams,
    pub p_value: f64,
    pub q_value: f64,
    pub r_squared: f64,
    pub r_amp: f64,
    pub rhythmic: bool,
}

/// `A / |L|` with the mesor floored at [`RAMP_MESOR_FLOOR`].
pub fn relative_amplitude(amplitude: f64, mesor: f64) -> f64 {
    amplitude / mesor.abs().max(RAMP_MESOR_FLOOR)
}

/// Fits every protein at the threshold period, applies BH across proteins
/// and flags proteins passing all three criteria.
pub fn call_rhythms(
    data: &NormalizedMatrix,
    phases: &PhaseVector,
    thresholds: &RhythmThresholds,
    scale: AmplitudeScale,
) -> Result<Vec<RhythmCall>> {
    thresholds.validate()?;
    if phases.len() != data.n_samples() {
        return Err(Error::Shape(format!(
            "{} phases for {} samples",
            phases.len(),
            data.n_samples()
        )));
    }
    let omega = thresholds.omega();
    let fits = data
        .values()
        .columns()
        .into_iter()
        .map(|col| fit_cosinor(&col.to_vec(), phases, omega))
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = fits.iter().map(|f| f.p_value).collect();
    let q = benjamini_hochberg(&p)?;
    Ok(fits
        .into_iter()
        .enumerate()
        .map(|(j, fit)| {
            let r_amp = match scale {
                AmplitudeScale::Normalized => {
                    relative_amplitude(fit.params.amplitude, fit.params.mesor)
                }
                AmplitudeScale::Raw => {
                    let sd = data.raw_sds()[j];
                    let raw_mesor = data.raw_means()[j] + sd * fit.params.mesor;
                    relative_amplitude(sd * fit.params.amplitude, raw_mesor)
                }
            };
            RhythmCall {
                protein_id: data.protein_ids()[j].clone(),
                params: fit.params,
                p_value: fit.p_value,
                q_value: q[j],
                r_squared: fit.r_squared,
                r_amp,
                rhythmic: thresholds.passes(q[j], r_amp, fit.r_squared),
            }
        })
        .collect())
}

/// Shifts every acrophase so that `reference` sits at zero.
pub fn align_acrophases(calls: &[RhythmCall], reference: &str) -> Result<Vec<RhythmCall>> {
    let r = calls
        .iter()
        .find(|c| c.protein_id == reference)
        .ok_or_else(|| Error::Reference {
            id: reference.to_string(),
            reason: "is absent",
        })?;
    if !r.rhythmic {
        return Err(Error::Reference {
            id: reference.to_string(),
            reason: "is not rhythmic",
        });
    }
    let shift = r.params.acrophase;
    Ok(calls
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.params.acrophase = wrap_angle(c.params.acrophase - shift);
            c
        })
        .collect())
}

/// Counts rhythmic proteins per equal-width acrophase bin over `[0, 2π)`.
pub fn acrophase_histogram(calls: &[RhythmCall], n_bins: usize) -> Result<Vec<usize>> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    let mut bins = vec![0usize; n_bins];
    let width = TAU / n_bins as f64;
    for c in calls.iter().filter(|c| c.rhythmic) {
        let b = ((wrap_angle(c.params.acrophase) / width) as usize).min(n_bins - 1);
        bins[b] += 1;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::hours_to_radians;
    use std::f64::consts::PI;

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|k| TAU * k as f64 / m as f64).collect()
    }

    #[test]
    fn exact_model_recovered() {
        let ph = grid(12);
        let x: Vec<f64> = ph
            .iter()
            .map(|p| 2.0 + 1.5 * (p + PI / 3.0).cos())
            .collect();
        let fit = fit_cosinor(&x, &ph, 1.0).unwrap();
        assert!((fit.params.mesor - 2.0).abs() < 1e-9);
        assert!((fit.params.amplitude - 1.5).abs() < 1e-9);
        assert!((fit.params.acrophase - PI / 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        assert!(fit.p_value < 1e-9);
    }

    #[test]
    fn constant_values() {
        let fit = fit_cosinor(&[3.0; 8], &grid(8), 1.0).unwrap();
        assert_eq!(fit.params.amplitude, 0.0);
        assert_eq!(fit.r_squared, 0.0);
        assert_eq!(fit.p_value, 1.0);
        assert!(!fit.degenerate);
    }

    #[test]
    fn single_phase_is_degenerate() {
        let fit = fit_cosinor(&[1.0, 2.0, 3.0, 4.0], &[0.7; 4], 1.0).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.params.amplitude, 0.0);
        assert_eq!(fit.params.mesor, 2.5);
        assert_eq!(fit.p_value, 1.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_cosinor(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn f_survival_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, FisherSnedecor};
        for nu in [1.0, 5.0, 13.0, 40.0] {
            let dist = FisherSnedecor::new(2.0, nu).unwrap();
            for f in [0.01, 0.5, 2.0, 7.5, 30.0] {
                let a = f2_survival(f, nu);
                let b = dist.sf(f);
                assert!((a - b).abs() < 1e-10, "nu={nu} f={f}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn bh_hand_examples() {
        let q = benjamini_hochberg(&[0.005, 0.03, 0.5]).unwrap();
        for (a, b) in q.iter().zip([0.015, 0.045, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        let q = benjamini_hochberg(&[0.01, 0.02, 0.03, 0.04, 0.05]).unwrap();
        assert!(q.iter().all(|v| (v - 0.05).abs() < 1e-15));
        assert_eq!(benjamini_hochberg(&[0.2]).unwrap(), vec![0.2]);
        assert!(benjamini_hochberg(&[0.2, 1.5]).is_err());
        assert!(benjamini_hochberg(&[f64::NAN]).is_err());
    }

    #[test]
    fn bh_unsorted_input_order_preserved() {
        let q = benjamini_hochberg(&[0.5, 0.005, 0.03]).unwrap();
        assert!((q[0] - 0.5).abs() < 1e-15);
        assert!((q[1] - 0.015).abs() < 1e-15);
        assert!((q[2] - 0.045).abs() < 1e-15);
    }

    fn call(id: &str, acrophase: f64, rhythmic: bool) -> RhythmCall {
        RhythmCall {
            protein_id: id.into(),
            params: CosinorParams {
                mesor: 0.0,
                amplitude: 1.0,
                acrophase,
                omega: 1.0,
            },
            p_value: 0.0,
            q_value: 0.0,
            r_squared: 1.0,
            r_amp: 1.0,
            rhythmic,
        }
    }

    #[test]
    fn alignment_shifts_relative_to_reference() {
        let calls = vec![
            call("EHD1", PI / 2.0, true),
            call("X", PI, true),
            call("Y", 0.2, false),
        ];
        let out = align_acrophases(&calls, "EHD1").unwrap();
        assert_eq!(out[0].params.acrophase, 0.0);
        assert!((out[1].params.acrophase - PI / 2.0).abs() < 1e-15);
        assert!((out[2].params.acrophase - wrap_angle(0.2 - PI / 2.0)).abs() < 1e-15);

        let zero = vec![call("R", 0.0, true), call("X", 1.0, true)];
        assert_eq!(align_acrophases(&zero, "R").unwrap(), zero);

        assert!(matches!(
            align_acrophases(&calls, "NOPE"),
            Err(Error::Reference { .. })
        ));
        assert!(matches!(
            align_acrophases(&calls, "Y"),
            Err(Error::Reference {
                reason: "is not rhythmic",
                ..
            })
        ));
    }

    #[test]
    fn histogram_bins() {
        let calls = vec![
            call("a", 0.1, true),
            call("b", 0.1, true),
            call("c", PI, true),
            call("d", PI, true),
            call("e", 2.0, false),
        ];
        assert_eq!(
            acrophase_histogram(&calls, 8).unwrap(),
            vec![2, 0, 0, 0, 2, 0, 0, 0]
        );
        let none: Vec<RhythmCall> = calls
            .iter()
            .map(|c| RhythmCall {
                rhythmic: false,
                ..c.clone()
            })
            .collect();
        assert_eq!(acrophase_histogram(&none, 8).unwrap(), vec![0; 8]);
        assert!(acrophase_histogram(&calls, 1).is_err());
    }

    #[test]
    fn peak_time_follows_sign_convention() {
        let p = CosinorParams {
            mesor: 0.0,
            amplitude: 1.0,
            acrophase: PI / 2.0,
            omega: 1.0,
        };
        // cos(φ + π/2) peaks at φ = 3π/2 → 18 h
        assert!((p.peak_time_hours() - 18.0).abs() < 1e-12);
        let half = CosinorParams { omega: 2.0, ..p };
        // cos(2φ + π/2) peaks at φ = 3π/4 and 7π/4; the latter is reported
        assert!((half.peak_time_hours() - 21.0).abs() < 1e-12);
        assert!((half.evaluate(hours_to_radians(21.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thresholds_describe() {
        assert_eq!(
            RhythmThresholds::circadian().describe(),
            "q<0.05, rAmp≥0.1, R²≥0.1, period_hours=24"
        );
        assert_eq!(
            RhythmThresholds::ultradian().describe(),
            "q<0.0005, rAmp≥0.2, R²≥0.6, period_hours=12"
        );
    }
}
