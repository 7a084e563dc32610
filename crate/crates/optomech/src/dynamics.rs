//! Moment dynamics and the fixed-step integrator.
//!
//! Two equivalent views of the same evolution are provided: the reduced
//! three-variable system used by the optimizers, and the full ten-moment
//! linear system used for conservation checks. Both are integrated with the
//! classic fourth-order Runge-Kutta scheme; steps never cross a control
//! discontinuity, so bang switching times are honored exactly.

use serde::{Deserialize, Serialize};

use crate::control::ControlProfile;
use crate::error::{OptomechError, Result};
use crate::geometry::{lift, HyperboloidPoint, ReducedState};

/// Default integrator step cap (dimensionless time).
pub const DEFAULT_STEP: f64 = 1e-4;

/// Minimum number of steps per control segment.
const MIN_STEPS_PER_SEGMENT: usize = 16;

/// Normalized expectation values of all ten quadratic generators.
/// From vacuum initial conditions the `(k1..k3, j1..j3)` block stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub j0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

impl MomentVector {
    pub const VACUUM: Self = Self {
        q1: 0.0,
        q2: 0.0,
        q3: 0.0,
        j0: 1.0,
        k1: 0.0,
        k2: 0.0,
        k3: 0.0,
        j1: 0.0,
        j2: 0.0,
        j3: 0.0,
    };

    pub fn to_array(self) -> [f64; 10] {
        [
            self.q1, self.q2, self.q3, self.j0, self.k1, self.k2, self.k3, self.j1, self.j2,
            self.j3,
        ]
    }

    pub fn from_array(a: [f64; 10]) -> Self {
        Self {
            q1: a[0],
            q2: a[1],
            q3: a[2],
            j0: a[3],
            k1: a[4],
            k2: a[5],
            k3: a[6],
            j1: a[7],
            j2: a[8],
            j3: a[9],
        }
    }

    /// Four-vector part `(q1, q2, q3, j0)` as a hyperboloid point.
    pub fn point(&self) -> HyperboloidPoint {
        HyperboloidPoint { q1: self.q1, q2: self.q2, q3: self.q3, j0: self.j0 }
    }

    /// Largest magnitude in the `(k, j1..j3)` block.
    pub fn aux_block_max(&self) -> f64 {
        [self.k1, self.k2, self.k3, self.j1, self.j2, self.j3]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Right-hand side of the reduced system:
/// `dq1 = -2g (sqrt(1 + |q|^2) - q3)`, `dq2 = 2 q3`, `dq3 = -2g q1 - 2 q2`.
pub fn reduced_rhs(state: &ReducedState, g: f64) -> (f64, f64, f64) {
    let root = state.root_term();
    (
        -2.0 * g * (root - state.q3),
        2.0 * state.q3,
        -2.0 * g * state.q1 - 2.0 * state.q2,
    )
}

fn reduced_rhs_arr(x: &[f64; 3], g: f64) -> [f64; 3] {
    let (d1, d2, d3) = reduced_rhs(&ReducedState::from_array(*x), g);
    [d1, d2, d3]
}

/// Right-hand side of the concatenated four- plus six-moment linear systems.
pub fn full_moment_rhs(m: &MomentVector, g: f64) -> MomentVector {
    MomentVector {
        q1: 2.0 * g * m.q3 - 2.0 * g * m.j0,
        q2: 2.0 * m.q3,
        q3: -2.0 * g * m.q1 - 2.0 * m.q2,
        j0: -2.0 * g * m.q1,
        k1: 2.0 * g * m.k3,
        k2: 2.0 * m.k3 + 2.0 * g * m.j3,
        k3: -2.0 * g * m.k1 - 2.0 * m.k2 - 2.0 * g * m.j2,
        j1: 2.0 * g * m.j3,
        j2: -2.0 * g * m.k3 + 2.0 * m.j3,
        j3: 2.0 * g * m.k2 - 2.0 * g * m.j1 - 2.0 * m.j2,
    }
}

fn full_rhs_arr(x: &[f64; 10], g: f64) -> [f64; 10] {
    full_moment_rhs(&MomentVector::from_array(*x), g).to_array()
}

/// One classic RK4 step of an autonomous system.
pub(crate) fn rk4_step<const N: usize>(
    f: &dyn Fn(&[f64; N]) -> [f64; N],
    x: &[f64; N],
    h: f64,
) -> [f64; N] {
    let k1 = f(x);
    let mut s = *x;
    for i in 0..N {
        s[i] = x[i] + 0.5 * h * k1[i];
    }
    let k2 = f(&s);
    for i in 0..N {
        s[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = f(&s);
    for i in 0..N {
        s[i] = x[i] + h * k3[i];
    }
    let k4 = f(&s);
    let mut out = *x;
    for i in 0..N {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// One planned integration step: advance from `t0` to `t1` under coupling
/// `g`. Endpoints are stored, not step widths, so segment boundaries and
/// marks appear bitwise-exactly in sample-time vectors.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PlannedStep {
    pub t0: f64,
    pub t1: f64,
    pub g: f64,
}

impl PlannedStep {
    pub fn h(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Lay out integration steps for a profile: per segment the step is capped
/// at `min(step, duration / 16)`, the last step of each subinterval lands
/// exactly on its boundary, and `marks` (sorted or not) become exact step
/// boundaries as well.
pub(crate) fn plan_steps(profile: &ControlProfile, step: f64, marks: &[f64]) -> Vec<PlannedStep> {
    let total = profile.total_duration();
    let mut cuts: Vec<f64> = marks
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < total)
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut plan = Vec::new();
    let mut seg_start = 0.0;
    let mut cut_idx = 0;
    for seg in profile.segments() {
        let seg_end = seg_start + seg.duration;
        let h_max = step.min(seg.duration / MIN_STEPS_PER_SEGMENT as f64);
        let mut sub_start = seg_start;
        loop {
            // Next cut strictly inside the remaining part of this segment.
            while cut_idx < cuts.len() && cuts[cut_idx] <= sub_start + 1e-15 {
                cut_idx += 1;
            }
            let sub_end = if cut_idx < cuts.len() && cuts[cut_idx] < seg_end - 1e-15 {
                cuts[cut_idx]
            } else {
                seg_end
            };
            let width = sub_end - sub_start;
            if width > 0.0 {
                let n = (width / h_max).ceil().max(1.0) as usize;
                let mut a = sub_start;
                for i in 0..n {
                    let b = if i + 1 == n {
                        sub_end
                    } else {
                        sub_start + width * (i + 1) as f64 / n as f64
                    };
                    plan.push(PlannedStep { t0: a, t1: b, g: seg.g });
                    a = b;
                }
            }
            if sub_end >= seg_end - 1e-15 {
                break;
            }
            sub_start = sub_end;
        }
        seg_start = seg_end;
    }
    plan
}

/// Sampled solution of the reduced system. `controls[i]` is the coupling on
/// `[times[i], times[i+1])`, so `controls.len() == times.len() - 1`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ReducedState>,
    pub controls: Vec<f64>,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial sample")
    }

    pub fn final_state(&self) -> ReducedState {
        *self.states.last().expect("trajectory has at least the initial sample")
    }

    /// State at time `t` by linear interpolation between samples.
    pub fn state_at(&self, t: f64) -> ReducedState {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => self.states[i],
            Err(0) => self.states[0],
            Err(i) if i >= self.times.len() => self.final_state(),
            Err(i) => {
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let w = (t - t0) / (t1 - t0);
                let (a, b) = (self.states[i - 1], self.states[i]);
                ReducedState::new(
                    a.q1 + w * (b.q1 - a.q1),
                    a.q2 + w * (b.q2 - a.q2),
                    a.q3 + w * (b.q3 - a.q3),
                )
            }
        }
    }

    /// Index of an exact sample time, if present.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap())
            .ok()
            .or_else(|| {
                self.times
                    .iter()
                    .position(|&x| (x - t).abs() <= 1e-12 * (1.0 + t.abs()))
            })
    }
}

/// Sampled solution of the full ten-moment system.
#[derive(Debug, Clone)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<MomentVector>,
    pub controls: Vec<f64>,
}

impl MomentTrajectory {
    pub fn final_moments(&self) -> MomentVector {
        *self.moments.last().expect("trajectory has at least the initial sample")
    }

    /// Largest hyperboloid-constraint defect over all samples.
    pub fn max_constraint_defect(&self) -> f64 {
        self.moments
            .iter()
            .fold(0.0f64, |m, v| m.max(v.point().constraint_defect().abs()))
    }

    /// Largest auxiliary-block magnitude over all samples.
    pub fn max_aux_block(&self) -> f64 {
        self.moments.iter().fold(0.0f64, |m, v| m.max(v.aux_block_max()))
    }
}

/// Integrate the reduced system through a control profile with sample points
/// at every accepted step and every segment boundary.
pub fn integrate_reduced(
    profile: &ControlProfile,
    start: ReducedState,
    step: f64,
) -> Result<Trajectory> {
    integrate_reduced_marked(profile, start, step, &[])
}

/// As [`integrate_reduced`], additionally landing exactly on each `marks`
/// time so callers can read off states at prescribed instants.
pub fn integrate_reduced_marked(
    profile: &ControlProfile,
    start: ReducedState,
    step: f64,
    marks: &[f64],
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(OptomechError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    if !start.is_finite() {
        return Err(OptomechError::Diverged { t: 0.0 });
    }
    let plan = plan_steps(profile, step, marks);
    let mut times = Vec::with_capacity(plan.len() + 1);
    let mut states = Vec::with_capacity(plan.len() + 1);
    let mut controls = Vec::with_capacity(plan.len());
    times.push(0.0);
    states.push(start);
    let mut x = start.to_array();
    for ps in &plan {
        let g = ps.g;
        x = rk4_step(&|y: &[f64; 3]| reduced_rhs_arr(y, g), &x, ps.h());
        let s = ReducedState::from_array(x);
        if !s.is_finite() {
            return Err(OptomechError::Diverged { t: ps.t1 });
        }
        times.push(ps.t1);
        states.push(s);
        controls.push(g);
    }
    Ok(Trajectory { times, states, controls })
}

/// Integrate the full ten-moment system through a control profile.
pub fn integrate_full(
    profile: &ControlProfile,
    start: MomentVector,
    step: f64,
) -> Result<MomentTrajectory> {
    integrate_full_marked(profile, start, step, &[])
}

pub fn integrate_full_marked(
    profile: &ControlProfile,
    start: MomentVector,
    step: f64,
    marks: &[f64],
) -> Result<MomentTrajectory> {
    if !(step > 0.0) {
        return Err(OptomechError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let plan = plan_steps(profile, step, marks);
    let mut times = Vec::with_capacity(plan.len() + 1);
    let mut moments = Vec::with_capacity(plan.len() + 1);
    let mut controls = Vec::with_capacity(plan.len());
    times.push(0.0);
    moments.push(start);
    let mut x = start.to_array();
    for ps in &plan {
        let g = ps.g;
        x = rk4_step(&|y: &[f64; 10]| full_rhs_arr(y, g), &x, ps.h());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OptomechError::Diverged { t: ps.t1 });
        }
        times.push(ps.t1);
        moments.push(MomentVector::from_array(x));
        controls.push(g);
    }
    Ok(MomentTrajectory { times, moments, controls })
}

/// Convenience: propagate only the final reduced state (no sample storage).
pub fn propagate_final(
    profile: &ControlProfile,
    start: ReducedState,
    step: f64,
) -> Result<ReducedState> {
    let mut x = start.to_array();
    for ps in plan_steps(profile, step, &[]) {
        let g = ps.g;
        x = rk4_step(&|y: &[f64; 3]| reduced_rhs_arr(y, g), &x, ps.h());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OptomechError::Diverged { t: ps.t1 });
        }
    }
    Ok(ReducedState::from_array(x))
}

/// Lifted hyperboloid point of a trajectory sample.
pub fn lifted(traj: &Trajectory, idx: usize) -> HyperboloidPoint {
    lift(traj.states[idx])
}
