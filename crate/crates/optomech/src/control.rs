//! Piecewise-constant coupling schedules.

use serde::{Deserialize, Serialize};

use crate::error::{OptomechError, Result};

/// One constant-coupling interval. Durations are dimensionless time in units
/// of `1/omega_m`; the coupling is `g = g_tilde / omega_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub g: f64,
}

/// Piecewise-constant coupling schedule `g(t)` with amplitude bound `G`.
///
/// Invariants: every duration is positive, the couplings satisfy `|g| <= G`,
/// and the total horizon is the sum of segment durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    segments: Vec<Segment>,
    bound: f64,
}

/// Slack for `|g| <= G` checks, so that values computed as `±G` by arithmetic
/// that rounds differently still validate.
const BOUND_SLACK: f64 = 1e-12;

impl ControlProfile {
    pub fn new(segments: Vec<Segment>, bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(OptomechError::InvalidProfile(format!(
                "bound must be positive and finite, got {bound}"
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration > 0.0) || !s.duration.is_finite() {
                return Err(OptomechError::InvalidProfile(format!(
                    "segment {i} has nonpositive duration {}",
                    s.duration
                )));
            }
            if !s.g.is_finite() || s.g.abs() > bound * (1.0 + BOUND_SLACK) {
                return Err(OptomechError::InvalidProfile(format!(
                    "segment {i} coupling {} exceeds bound {bound}",
                    s.g
                )));
            }
        }
        Ok(Self { segments, bound })
    }

    /// Empty schedule (zero horizon). Useful for the degenerate `T = 0` case.
    pub fn empty(bound: f64) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(OptomechError::InvalidProfile(format!(
                "bound must be positive and finite, got {bound}"
            )));
        }
        Ok(Self { segments: Vec::new(), bound })
    }

    /// Constant coupling over `[0, t_total]`.
    pub fn constant(g: f64, t_total: f64, bound: f64) -> Result<Self> {
        if t_total == 0.0 {
            return Self::empty(bound);
        }
        Self::new(vec![Segment { duration: t_total, g }], bound)
    }

    /// Build a profile from interior switch times and per-segment couplings.
    /// `switch_times` must be nondecreasing and lie in `[0, t_total]`;
    /// zero-width segments are dropped.
    pub fn from_switch_times(
        couplings: &[f64],
        switch_times: &[f64],
        t_total: f64,
        bound: f64,
    ) -> Result<Self> {
        if couplings.len() != switch_times.len() + 1 {
            return Err(OptomechError::InvalidProfile(format!(
                "{} couplings need {} switch times, got {}",
                couplings.len(),
                couplings.len() - 1,
                switch_times.len()
            )));
        }
        let mut boundaries = Vec::with_capacity(switch_times.len() + 2);
        boundaries.push(0.0);
        boundaries.extend_from_slice(switch_times);
        boundaries.push(t_total);
        let mut segments = Vec::new();
        for (i, w) in boundaries.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d < -1e-12 {
                return Err(OptomechError::InvalidSwitchTimes(format!(
                    "boundary {} at t = {} precedes t = {}",
                    i,
                    w[1],
                    w[0]
                )));
            }
            if d > 0.0 {
                segments.push(Segment { duration: d, g: couplings[i] });
            }
        }
        if segments.is_empty() {
            return Self::empty(bound);
        }
        Self::new(segments, bound)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Interior switch instants (cumulative segment boundaries, excluding 0 and T).
    pub fn switch_times(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = 0.0;
        for s in &self.segments[..self.segments.len().saturating_sub(1)] {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// Coupling in effect at time `t` (segments are right-open; `t = T` maps
    /// to the last segment).
    pub fn g_at(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for s in &self.segments {
            acc += s.duration;
            if t < acc {
                return s.g;
            }
        }
        self.segments.last().map_or(0.0, |s| s.g)
    }

    /// Append a zero-coupling segment, extending the horizon to `t_total`.
    pub fn zero_padded(&self, t_total: f64) -> Result<Self> {
        let t = self.total_duration();
        if t_total <= t {
            return Ok(self.clone());
        }
        let mut segments = self.segments.clone();
        segments.push(Segment { duration: t_total - t, g: 0.0 });
        Self::new(segments, self.bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_duration() {
        let err = ControlProfile::new(vec![Segment { duration: 0.0, g: 0.5 }], 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_coupling_beyond_bound() {
        let err = ControlProfile::new(vec![Segment { duration: 1.0, g: 1.5 }], 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn switch_times_are_cumulative() {
        let p = ControlProfile::new(
            vec![
                Segment { duration: 0.5, g: 1.0 },
                Segment { duration: 0.25, g: -1.0 },
                Segment { duration: 0.25, g: 1.0 },
            ],
            1.0,
        )
        .unwrap();
        assert_eq!(p.switch_times(), vec![0.5, 0.75]);
        assert!((p.total_duration() - 1.0).abs() < 1e-15);
        assert_eq!(p.g_at(0.6), -1.0);
        assert_eq!(p.g_at(0.99), 1.0);
    }

    #[test]
    fn from_switch_times_drops_zero_width() {
        let p = ControlProfile::from_switch_times(&[1.0, -1.0, 1.0], &[0.4, 0.4], 1.0, 1.0)
            .unwrap();
        assert_eq!(p.segments().len(), 2);
        assert_eq!(p.switch_times(), vec![0.4]);
    }

    #[test]
    fn from_switch_times_rejects_decreasing() {
        let err = ControlProfile::from_switch_times(&[1.0, -1.0, 1.0], &[0.6, 0.4], 1.0, 1.0);
        assert!(err.is_err());
    }
}
