//! Optimizers for maximum entanglement at fixed horizon.
//!
//! The problem is `min q1(T)` subject to `q2(T) = q3(T) = 0` and
//! `|g| <= G`. Two independent methods are provided and referee each other:
//! a general direct-transcription solver ([`direct`]) and a
//! structure-exploiting switch-time solver ([`switch_times`]). Candidate
//! enumeration runs both and picks the feasible result with the smallest
//! `q1(T)`.

pub mod direct;
pub mod switch_times;

use serde::{Deserialize, Serialize};

use crate::control::ControlProfile;
use crate::dynamics::{integrate_reduced, DEFAULT_STEP};
use crate::error::{OptomechError, Result};
use crate::exec::{contiguous_chunks, ordered_map};
use crate::geometry::{lift, r_from_final, ReducedState};
use crate::io::SweepRow;
use crate::pmp::{verify_on_trajectory, PmpReport, VerifyTolerances};

pub use switch_times::{simulate_structure, solve_switch_times, CandidateStructure, StructureSim};

/// Pulse-structure label of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "BBB")]
    Bbb,
    #[serde(rename = "BBSB")]
    Bbsb,
    #[serde(rename = "BB")]
    Bb,
    #[serde(rename = "other-grid")]
    OtherGrid,
}

impl std::fmt::Display for Structure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Structure::Bbb => "BBB",
            Structure::Bbsb => "BBSB",
            Structure::Bb => "BB",
            Structure::OtherGrid => "other-grid",
        };
        f.write_str(s)
    }
}

/// Solver statistics attached to every result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u64,
    pub rho_final: f64,
    pub wall_ms: f64,
}

/// Summary of one enumeration candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub label: String,
    pub structure: Structure,
    pub converged: bool,
    pub feasible: bool,
    pub r: f64,
    #[serde(rename = "objective_q1T")]
    pub objective_q1t: f64,
}

/// A solved instance: optimal profile, structure, squeezing parameter,
/// residuals and the attached minimum-principle certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub g_max: f64,
    #[serde(rename = "T")]
    pub t_total: f64,
    pub method: String,
    pub structure: Structure,
    pub first_sign: i8,
    pub switch_times: Vec<f64>,
    pub r: f64,
    pub q_final: [f64; 3],
    pub residual_q2: f64,
    pub residual_q3: f64,
    #[serde(rename = "objective_q1T")]
    pub objective_q1t: f64,
    pub pmp: PmpReport,
    pub stats: SolveStats,
    pub profile: ControlProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_controls: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateSummary>>,
}

impl SolveResult {
    /// Fraction of the horizon spent on singular (zero-coupling) segments.
    pub fn singular_fraction(&self) -> f64 {
        let t = self.profile.total_duration();
        if t <= 0.0 {
            return 0.0;
        }
        let s: f64 = self
            .profile
            .segments()
            .iter()
            .filter(|s| s.g.abs() <= 1e-12 * self.profile.bound())
            .map(|s| s.duration)
            .sum();
        s / t
    }

    /// The always-feasible zero-coupling baseline (`r = 0`).
    pub fn zero_control(g_max: f64, t_total: f64, method: &str) -> Result<Self> {
        let profile = if t_total > 0.0 {
            ControlProfile::constant(0.0, t_total, g_max)?
        } else {
            ControlProfile::empty(g_max)?
        };
        let pmp = crate::pmp::verify_candidate(&profile, &VerifyTolerances::default())?;
        Ok(Self {
            g_max,
            t_total,
            method: method.into(),
            structure: Structure::OtherGrid,
            first_sign: 1,
            switch_times: Vec::new(),
            r: 0.0,
            q_final: [0.0, 0.0, 0.0],
            residual_q2: 0.0,
            residual_q3: 0.0,
            objective_q1t: 0.0,
            pmp,
            stats: SolveStats { iterations: 0, rho_final: 0.0, wall_ms: 0.0 },
            profile,
            grid_controls: None,
            candidates: None,
        })
    }
}

/// Options shared across solvers. `workers = 0` means all available
/// parallelism.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Integration step for Newton search phases.
    pub step_coarse: f64,
    /// Canonical integration step for reported residuals and verification.
    pub step_final: f64,
    /// Feasibility tolerance on `|q2(T)|, |q3(T)|`.
    pub feas_tol: f64,
    /// Direct-transcription grid size.
    pub grid_n: usize,
    /// Seeds for the random multi-start bang patterns.
    pub seed_set: Vec<u64>,
    /// Inner iteration cap per augmented-Lagrangian subproblem.
    pub max_inner: usize,
    /// Outer augmented-Lagrangian iteration cap.
    pub max_outer: usize,
    /// Projected-gradient tolerance for inner convergence.
    pub gtol: f64,
    /// Tighter tolerance for the final fixed-multiplier polish of the
    /// direct solver (settles singular arcs).
    pub gtol_polish: f64,
    pub rho0: f64,
    pub rho_max: f64,
    /// Worker count for sweeps (0 = available parallelism).
    pub workers: usize,
    pub verify: VerifyTolerances,
    /// Extra switch-time seed carried over from a neighboring sweep point.
    pub warm_start: Option<(CandidateStructure, Vec<f64>)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            step_coarse: 1e-3,
            step_final: DEFAULT_STEP,
            feas_tol: 1e-8,
            grid_n: 4000,
            seed_set: vec![17, 23, 71],
            max_inner: 4000,
            max_outer: 30,
            gtol: 3e-9,
            gtol_polish: 2e-10,
            rho0: 10.0,
            rho_max: 1e8,
            workers: 0,
            verify: VerifyTolerances::default(),
            warm_start: None,
        }
    }
}

/// Cluster grid controls to `{-G, 0, +G}` (threshold `0.05 G`), run-length
/// encode, and derive the structure label plus switch-time estimates.
///
/// Runs shorter than `max(2, n/1000)` intervals count as transitions, not
/// structure.
pub fn classify_controls(controls: &[f64], g_max: f64, t_total: f64) -> (Structure, Vec<f64>, i8) {
    let n = controls.len();
    if n == 0 {
        return (Structure::OtherGrid, Vec::new(), 1);
    }
    let h = t_total / n as f64;
    let thresh = 0.05 * g_max;
    let label = |u: f64| -> Option<i8> {
        if (u - g_max).abs() <= thresh {
            Some(1)
        } else if (u + g_max).abs() <= thresh {
            Some(-1)
        } else if u.abs() <= thresh {
            Some(0)
        } else {
            None
        }
    };
    let min_run = (n / 1000).max(2);

    // Runs of identical labels with their interval index ranges.
    let mut runs: Vec<(i8, usize, usize)> = Vec::new();
    for (i, &u) in controls.iter().enumerate() {
        match label(u) {
            None => continue,
            Some(l) => match runs.last_mut() {
                Some((rl, _, end)) if *rl == l && i <= *end + min_run => *end = i,
                _ => runs.push((l, i, i)),
            },
        }
    }
    runs.retain(|(_, s, e)| e - s + 1 >= min_run);
    // Merge adjacent runs with equal labels left over after filtering.
    let mut merged: Vec<(i8, usize, usize)> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some((l, _, e)) if *l == r.0 => *e = r.2,
            _ => merged.push(r),
        }
    }

    let pattern: Vec<i8> = merged.iter().map(|r| r.0).collect();
    let mut switch_times = Vec::new();
    for w in merged.windows(2) {
        let gap_mid = (w[0].2 + 1 + w[1].1) as f64 / 2.0;
        switch_times.push(gap_mid * h);
    }
    let first_sign = merged.first().map_or(1, |r| if r.0 < 0 { -1 } else { 1 });

    let structure = match pattern.as_slice() {
        [a, b, c] if *a != 0 && *b == -*a && *c == *a => Structure::Bbb,
        [a, b, 0, d] if *a != 0 && *b == -*a && *d != 0 => Structure::Bbsb,
        [a, b] if *a != 0 && *b == -*a => Structure::Bb,
        _ => Structure::OtherGrid,
    };
    (structure, switch_times, first_sign)
}

/// Run the switch-time solver over `{BBB, BBSB} x {first sign}` plus the
/// direct solver as fallback/referee; return the feasible result with
/// minimal `q1(T)` and record all candidates.
pub fn enumerate_candidates(g_max: f64, t_total: f64, opts: &SolveOptions) -> Result<SolveResult> {
    let t0 = std::time::Instant::now();
    if t_total == 0.0 {
        return SolveResult::zero_control(g_max, t_total, "enumerate");
    }

    struct Cand {
        label: String,
        result: Result<SolveResult>,
    }

    let mut jobs: Vec<Box<dyn FnOnce() -> Cand + Send>> = Vec::new();
    for (structure, label) in [
        (CandidateStructure::Bbb { first_sign: 1.0 }, "switch-BBB+"),
        (CandidateStructure::Bbb { first_sign: -1.0 }, "switch-BBB-"),
        (CandidateStructure::Bbsb { first_sign: 1.0, final_sign: 1.0 }, "switch-BBSB+"),
        (CandidateStructure::Bbsb { first_sign: -1.0, final_sign: 1.0 }, "switch-BBSB-"),
    ] {
        let opts = opts.clone();
        jobs.push(Box::new(move || Cand {
            label: label.into(),
            result: solve_switch_times(g_max, t_total, structure, &opts),
        }));
    }
    {
        let opts = opts.clone();
        jobs.push(Box::new(move || Cand {
            label: "direct".into(),
            result: direct::solve_direct(g_max, t_total, opts.grid_n, &opts),
        }));
    }

    let outcomes = ordered_map(jobs, |job| job());

    let mut summaries = Vec::new();
    let mut best: Option<SolveResult> = None;
    let zero = SolveResult::zero_control(g_max, t_total, "enumerate")?;
    for c in &outcomes {
        match &c.result {
            Ok(res) => {
                let feasible = res.residual_q2.abs() <= opts.feas_tol
                    && res.residual_q3.abs() <= opts.feas_tol;
                summaries.push(CandidateSummary {
                    label: c.label.clone(),
                    structure: res.structure,
                    converged: true,
                    feasible,
                    r: res.r,
                    objective_q1t: res.objective_q1t,
                });
                if feasible && better_candidate(res, best.as_ref()) {
                    best = Some(res.clone());
                }
            }
            Err(e) => {
                summaries.push(CandidateSummary {
                    label: format!("{} ({e})", c.label),
                    structure: Structure::OtherGrid,
                    converged: false,
                    feasible: false,
                    r: f64::NAN,
                    objective_q1t: f64::NAN,
                });
            }
        }
    }

    let mut winner = best.unwrap_or(zero);
    winner.method = "enumerate".into();
    winner.candidates = Some(summaries);
    winner.stats.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(winner)
}

/// Deterministic candidate comparison: smaller `q1(T)` wins; ties go to
/// fewer segments, then to the earlier first switch.
fn better_candidate(new: &SolveResult, cur: Option<&SolveResult>) -> bool {
    let Some(cur) = cur else { return true };
    let dq = new.objective_q1t - cur.objective_q1t;
    if dq.abs() > 1e-12 {
        return dq < 0.0;
    }
    let (sn, sc) = (new.profile.segments().len(), cur.profile.segments().len());
    if sn != sc {
        return sn < sc;
    }
    let tn = new.switch_times.first().copied().unwrap_or(f64::INFINITY);
    let tc = cur.switch_times.first().copied().unwrap_or(f64::INFINITY);
    tn < tc
}

/// Solve one instance with the requested method.
pub fn solve(g_max: f64, t_total: f64, method: &str, opts: &SolveOptions) -> Result<SolveResult> {
    if !(g_max > 0.0) || t_total < 0.0 {
        return Err(OptomechError::InvalidArgument(format!(
            "need g_max > 0 and T >= 0, got G = {g_max}, T = {t_total}"
        )));
    }
    if t_total == 0.0 {
        return SolveResult::zero_control(g_max, t_total, method);
    }
    match method {
        "direct" => direct::solve_direct(g_max, t_total, opts.grid_n, opts),
        "switch" => solve_switch_best(g_max, t_total, opts),
        "enumerate" => enumerate_candidates(g_max, t_total, opts),
        other => Err(OptomechError::InvalidArgument(format!("unknown method '{other}'"))),
    }
}

/// Best switch-time candidate over `{BBB, BBSB} x {first sign}`.
pub fn solve_switch_best(g_max: f64, t_total: f64, opts: &SolveOptions) -> Result<SolveResult> {
    let t0 = std::time::Instant::now();
    let structures = vec![
        CandidateStructure::Bbb { first_sign: 1.0 },
        CandidateStructure::Bbb { first_sign: -1.0 },
        CandidateStructure::Bbsb { first_sign: 1.0, final_sign: 1.0 },
        CandidateStructure::Bbsb { first_sign: -1.0, final_sign: 1.0 },
    ];
    let opts_c = opts.clone();
    let outcomes = ordered_map(structures, move |s| {
        solve_switch_times(g_max, t_total, s, &opts_c)
    });
    let mut best: Option<SolveResult> = None;
    for res in outcomes.into_iter().flatten() {
        let feasible =
            res.residual_q2.abs() <= opts.feas_tol && res.residual_q3.abs() <= opts.feas_tol;
        if feasible && better_candidate(&res, best.as_ref()) {
            best = Some(res);
        }
    }
    let mut winner = match best {
        Some(b) => b,
        None => SolveResult::zero_control(g_max, t_total, "switch")?,
    };
    winner.method = "switch".into();
    winner.stats.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    Ok(winner)
}

/// Swept axis of a parameter scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary the control bound `G` at fixed horizon.
    Bound,
    /// Vary the horizon `T` at fixed bound.
    Horizon,
}

/// One sweep point: the axis value plus the solve outcome.
#[derive(Debug)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub outcome: Result<SolveResult>,
}

impl SweepPoint {
    pub fn to_row(&self) -> SweepRow {
        match &self.outcome {
            Ok(res) => SweepRow {
                axis_value: self.axis_value,
                r: res.r,
                structure: res.structure.to_string(),
                residual_q2: res.residual_q2,
                residual_q3: res.residual_q3,
                singular_fraction: res.singular_fraction(),
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                axis_value: self.axis_value,
                r: f64::NAN,
                structure: Structure::OtherGrid.to_string(),
                residual_q2: f64::NAN,
                residual_q3: f64::NAN,
                singular_fraction: f64::NAN,
                status: format!("error: {e}"),
            },
        }
    }
}

/// Sweep the solver along one axis. Points are processed in contiguous
/// chunks (one per worker); within a chunk each solve is warm-started from
/// the previous point's switch-time solution. Chunking depends only on the
/// configured worker count, so outputs are reproducible for a fixed
/// configuration regardless of actual thread scheduling.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    fixed: f64,
    method: &str,
    opts: &SolveOptions,
) -> Vec<SweepPoint> {
    let workers = if opts.workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        opts.workers
    };
    let chunks = contiguous_chunks(values.len(), workers);
    let chunk_jobs: Vec<Vec<f64>> =
        chunks.iter().map(|c| values[c.clone()].to_vec()).collect();

    let opts_base = opts.clone();
    let results: Vec<Vec<SweepPoint>> = ordered_map(chunk_jobs, move |vals| {
        let mut out = Vec::with_capacity(vals.len());
        let mut warm: Option<(CandidateStructure, Vec<f64>)> = None;
        for v in vals {
            let (g, t) = match axis {
                SweepAxis::Bound => (v, fixed),
                SweepAxis::Horizon => (fixed, v),
            };
            let mut o = opts_base.clone();
            o.warm_start = warm.take();
            let outcome = solve(g, t, method, &o);
            if let Ok(res) = &outcome {
                warm = warm_seed_from(res);
            }
            out.push(SweepPoint { axis_value: v, outcome });
        }
        out
    });
    results.into_iter().flatten().collect()
}

fn warm_seed_from(res: &SolveResult) -> Option<(CandidateStructure, Vec<f64>)> {
    let first_sign = res.first_sign as f64;
    match res.structure {
        Structure::Bbb if res.switch_times.len() == 2 => Some((
            CandidateStructure::Bbb { first_sign },
            res.switch_times.clone(),
        )),
        Structure::Bbsb if res.switch_times.len() == 3 => {
            let final_sign = res
                .profile
                .segments()
                .last()
                .map_or(1.0, |s| if s.g < 0.0 { -1.0 } else { 1.0 });
            Some((
                CandidateStructure::Bbsb { first_sign, final_sign },
                res.switch_times.clone(),
            ))
        }
        _ => None,
    }
}

/// Assemble a [`SolveResult`] from a feasible profile (shared by both
/// solver backends).
pub(crate) fn result_from_profile(
    g_max: f64,
    t_total: f64,
    method: &str,
    structure: Structure,
    first_sign: i8,
    profile: ControlProfile,
    opts: &SolveOptions,
    stats: SolveStats,
) -> Result<SolveResult> {
    let traj = integrate_reduced(&profile, ReducedState::ORIGIN, opts.step_final)?;
    let q = traj.final_state();
    let point = lift(q);
    let r = r_from_final(&point, 1e-6_f64.max(10.0 * opts.feas_tol))?;
    let mut verify = opts.verify;
    verify.feasibility = verify.feasibility.max(10.0 * opts.feas_tol);
    let pmp = verify_on_trajectory(&profile, &traj, &verify)?;
    Ok(SolveResult {
        g_max,
        t_total,
        method: method.into(),
        structure,
        first_sign,
        switch_times: profile.switch_times(),
        r,
        q_final: [q.q1, q.q2, q.q3],
        residual_q2: q.q2,
        residual_q3: q.q3,
        objective_q1t: q.q1,
        pmp,
        stats,
        profile,
        grid_controls: None,
        candidates: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_recognizes_bbb() {
        let g = 1.0;
        let n = 1000;
        let mut u = vec![g; n];
        for v in u.iter_mut().take(760).skip(320) {
            *v = -g;
        }
        // A couple of transition values at the boundaries.
        u[319] = 0.4;
        u[760] = -0.2;
        let (s, times, first) = classify_controls(&u, g, std::f64::consts::PI);
        assert_eq!(s, Structure::Bbb);
        assert_eq!(first, 1);
        assert_eq!(times.len(), 2);
        let h = std::f64::consts::PI / n as f64;
        assert!((times[0] - 320.0 * h).abs() < 3.0 * h);
        assert!((times[1] - 760.0 * h).abs() < 3.0 * h);
    }

    #[test]
    fn classify_recognizes_bbsb() {
        let g = 2.0;
        let n = 2000;
        let mut u = vec![g; n];
        for v in u.iter_mut().take(700).skip(300) {
            *v = -g;
        }
        for v in u.iter_mut().take(1400).skip(700) {
            *v = 0.0;
        }
        let (s, times, first) = classify_controls(&u, g, 1.5707963267948966);
        assert_eq!(s, Structure::Bbsb);
        assert_eq!(first, 1);
        assert_eq!(times.len(), 3);
    }

    #[test]
    fn classify_ignores_single_interval_spikes() {
        let g = 1.0;
        let n = 1000;
        let mut u = vec![g; n];
        for v in u.iter_mut().take(800).skip(400) {
            *v = -g;
        }
        // One stray interval near zero inside the transition.
        u[400] = 0.01;
        let (s, _, _) = classify_controls(&u, g, 3.0);
        assert_eq!(s, Structure::Bbb);
    }

    #[test]
    fn classify_other_patterns() {
        let g = 1.0;
        let u = vec![0.0; 500];
        let (s, times, _) = classify_controls(&u, g, 1.0);
        assert_eq!(s, Structure::OtherGrid);
        assert!(times.is_empty());

        let mut u = vec![g; 400];
        for v in u.iter_mut().skip(200) {
            *v = -g;
        }
        let (s, times, first) = classify_controls(&u, g, 1.0);
        assert_eq!(s, Structure::Bb);
        assert_eq!(first, 1);
        assert_eq!(times.len(), 1);
    }

    #[test]
    fn zero_control_result_is_feasible_baseline() {
        let res = SolveResult::zero_control(2.0, 1.0, "enumerate").unwrap();
        assert_eq!(res.r, 0.0);
        assert!(res.pmp.pass);
        assert_eq!(res.structure, Structure::OtherGrid);
        assert_eq!(res.singular_fraction(), 1.0);
    }
}
