//! Angles on the 24 h circle.

use std::f64::consts::TAU;
use std::ops::Deref;

/// Hours in one circadian cycle.
pub const HOURS_PER_DAY: f64 = 24.0;

/// Wraps an angle in radians into `[0, 2π)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid of a tiny negative number rounds up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps a clock time into `[0, 24)`.
#[inline]
pub fn wrap_hours(h: f64) -> f64 {
    let r = h.rem_euclid(HOURS_PER_DAY);
    if r >= HOURS_PER_DAY {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn radians_to_hours(theta: f64) -> f64 {
    wrap_hours(theta * HOURS_PER_DAY / TAU)
}

#[inline]
pub fn hours_to_radians(h: f64) -> f64 {
    wrap_angle(h * TAU / HOURS_PER_DAY)
}

/// Angle of the point `(s, c)`, i.e. `atan2(s, c)` mapped to `[0, 2π)`.
///
/// The origin has no angle; it maps to 0 and callers are expected to count
/// such samples as degenerate.
#[inline]
pub fn code_angle(s: f64, c: f64) -> f64 {
    if s == 0.0 && c == 0.0 {
        return 0.0;
    }
    wrap_angle(s.atan2(c))
}

/// Per-sample phases in radians, every entry in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(Vec<f64>);

impl PhaseVector {
    /// Builds a phase vector, wrapping every entry into `[0, 2π)`.
    pub fn from_radians(values: impl IntoIterator<Item = f64>) -> Self {
        PhaseVector(values.into_iter().map(wrap_angle).collect())
    }

    pub fn from_hours(hours: impl IntoIterator<Item = f64>) -> Self {
        PhaseVector(hours.into_iter().map(hours_to_radians).collect())
    }

    pub fn to_hours(&self) -> Vec<f64> {
        self.0.iter().copied().map(radians_to_hours).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn select(&self, idx: &[usize]) -> PhaseVector {
        PhaseVector(idx.iter().map(|&i| self.0[i]).collect())
    }
}

impl Deref for PhaseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}
