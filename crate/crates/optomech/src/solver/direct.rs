//! Direct transcription: piecewise-constant control on a uniform grid,
//! propagated by the fourth-order stepper, optimized by an augmented
//! Lagrangian on the endpoint constraints with projected limited-memory
//! quasi-Newton inner iterations. Gradients are exact discrete adjoints of
//! the stepped integrator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{ControlProfile, Segment};
use crate::dynamics::integrate_reduced;
use crate::error::{OptomechError, Result};
use crate::exec::ordered_map;
use crate::geometry::{lift, r_from_final, ReducedState};
use crate::pmp::{verify_on_trajectory, PmpReport};

use super::switch_times::{self, CandidateStructure};
use super::{classify_controls, SolveOptions, SolveResult, SolveStats, Structure};

/// Target substep width inside each grid interval. One fourth-order step of
/// this size keeps the global propagation error orders of magnitude below
/// the feasibility tolerance.
const SUBSTEP_TARGET: f64 = 1e-3;

/// Uniform control grid: `n` intervals of width `T/n`, one coupling per
/// interval, clamped to `[-G, G]`.
#[derive(Debug, Clone)]
pub struct TranscriptionGrid {
    pub g_max: f64,
    pub t_total: f64,
    pub controls: Vec<f64>,
    substeps: usize,
}

impl TranscriptionGrid {
    pub fn new(g_max: f64, t_total: f64, n: usize) -> Result<Self> {
        if n < 100 {
            return Err(OptomechError::InvalidArgument(format!(
                "grid needs at least 100 intervals, got {n}"
            )));
        }
        if !(g_max > 0.0) || !(t_total > 0.0) {
            return Err(OptomechError::InvalidArgument(format!(
                "need g_max > 0 and T > 0, got G = {g_max}, T = {t_total}"
            )));
        }
        let h = t_total / n as f64;
        let substeps = (h / SUBSTEP_TARGET).ceil().max(1.0) as usize;
        Ok(Self { g_max, t_total, controls: vec![0.0; n], substeps })
    }

    pub fn with_controls(mut self, controls: Vec<f64>) -> Result<Self> {
        if controls.len() != self.controls.len() {
            return Err(OptomechError::InvalidArgument(format!(
                "expected {} controls, got {}",
                self.controls.len(),
                controls.len()
            )));
        }
        self.controls = controls;
        self.project();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.controls.len()
    }

    fn h_sub(&self) -> f64 {
        self.t_total / (self.n() as f64 * self.substeps as f64)
    }

    fn project(&mut self) {
        let g = self.g_max;
        for u in &mut self.controls {
            *u = u.clamp(-g, g);
        }
    }

    /// The grid as an explicit control profile (one segment per interval).
    pub fn to_profile(&self) -> Result<ControlProfile> {
        let h = self.t_total / self.n() as f64;
        ControlProfile::new(
            self.controls.iter().map(|&g| Segment { duration: h, g }).collect(),
            self.g_max,
        )
    }
}

/// Weights of the augmented-Lagrangian scalar
/// `q1(T) + mu2 q2(T) + mu3 q3(T) + rho/2 (q2(T)^2 + q3(T)^2)
///  + reg * integral of u^2 dt`.
///
/// The `reg` term is a vanishing Tikhonov penalty used only inside the
/// solver's continuation schedule: singular arcs leave the control gradient
/// flat, and a small strictly convex term selects the minimum-norm
/// (singular) control before being removed again.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlWeights {
    pub mu2: f64,
    pub mu3: f64,
    pub rho: f64,
    pub reg: f64,
}

#[inline]
fn rhs(x: &[f64; 3], g: f64) -> [f64; 3] {
    let w = (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    [-2.0 * g * (w - x[2]), 2.0 * x[2], -2.0 * g * x[0] - 2.0 * x[1]]
}

/// State Jacobian of the reduced right-hand side.
#[inline]
fn rhs_jac(x: &[f64; 3], g: f64) -> [[f64; 3]; 3] {
    let w = (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    [
        [-2.0 * g * x[0] / w, -2.0 * g * x[1] / w, -2.0 * g * (x[2] / w - 1.0)],
        [0.0, 0.0, 2.0],
        [-2.0 * g, -2.0, 0.0],
    ]
}

/// Control derivative of the reduced right-hand side.
#[inline]
fn rhs_dg(x: &[f64; 3]) -> [f64; 3] {
    let w = (1.0 + x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    [-2.0 * (w - x[2]), 0.0, -2.0 * x[0]]
}

#[inline]
fn rk4(x: &[f64; 3], g: f64, h: f64) -> [f64; 3] {
    let k1 = rhs(x, g);
    let mut s = [0.0; 3];
    for i in 0..3 {
        s[i] = x[i] + 0.5 * h * k1[i];
    }
    let k2 = rhs(&s, g);
    for i in 0..3 {
        s[i] = x[i] + 0.5 * h * k2[i];
    }
    let k3 = rhs(&s, g);
    for i in 0..3 {
        s[i] = x[i] + h * k3[i];
    }
    let k4 = rhs(&s, g);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Propagate the grid from the origin; returns the final state components
/// `(q1(T), q2(T), q3(T))`.
pub fn objective_and_constraints(grid: &TranscriptionGrid) -> Result<(f64, f64, f64)> {
    let h = grid.h_sub();
    let mut x = [0.0f64; 3];
    for (i, &g) in grid.controls.iter().enumerate() {
        for _ in 0..grid.substeps {
            x = rk4(&x, g, h);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OptomechError::Diverged {
                t: (i + 1) as f64 * grid.t_total / grid.n() as f64,
            });
        }
    }
    Ok((x[0], x[1], x[2]))
}

#[inline]
fn mat_t_vec(a: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[1][0] * v[1] + a[2][0] * v[2],
        a[0][1] * v[0] + a[1][1] * v[1] + a[2][1] * v[2],
        a[0][2] * v[0] + a[1][2] * v[1] + a[2][2] * v[2],
    ]
}

#[inline]
fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Augmented-Lagrangian value, its exact gradient with respect to every
/// interval control (discrete adjoint through each RK4 stage), and the
/// endpoint triple.
pub fn value_and_grad(
    grid: &TranscriptionGrid,
    w: &AlWeights,
) -> Result<(f64, Vec<f64>, [f64; 3])> {
    let mut states = Vec::new();
    let mut grad = vec![0.0; grid.n()];
    let (value, q) = value_and_grad_buf(grid, w, None, &mut states, &mut grad)?;
    Ok((value, grad, q))
}

/// As [`value_and_grad`] but reusing caller-provided buffers (the inner
/// optimizer calls this thousands of times).
fn value_and_grad_buf(
    grid: &TranscriptionGrid,
    w: &AlWeights,
    reg_mask: Option<&[f64]>,
    states: &mut Vec<[f64; 3]>,
    grad: &mut [f64],
) -> Result<(f64, [f64; 3])> {
    let n = grid.n();
    let sub = grid.substeps;
    let h = grid.h_sub();

    // Forward pass, storing the state at every substep start.
    states.clear();
    states.reserve(n * sub + 1);
    let mut x = [0.0f64; 3];
    states.push(x);
    for &g in &grid.controls {
        for _ in 0..sub {
            x = rk4(&x, g, h);
            states.push(x);
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OptomechError::Diverged { t: grid.t_total });
    }
    let q = [x[0], x[1], x[2]];
    let h_int = grid.t_total / n as f64;
    let u_sq: f64 = masked_u_sq(&grid.controls, reg_mask);
    let value = q[0]
        + w.mu2 * q[1]
        + w.mu3 * q[2]
        + 0.5 * w.rho * (q[1] * q[1] + q[2] * q[2])
        + w.reg * h_int * u_sq;

    // Terminal gradient of the scalar with respect to the final state.
    let mut xbar = [1.0, w.mu2 + w.rho * q[1], w.mu3 + w.rho * q[2]];

    for i in (0..n).rev() {
        let g = grid.controls[i];
        let mut ubar = 0.0;
        for j in (0..sub).rev() {
            let x0 = states[i * sub + j];
            // Reconstruct stage points.
            let k1 = rhs(&x0, g);
            let mut s2 = [0.0; 3];
            for d in 0..3 {
                s2[d] = x0[d] + 0.5 * h * k1[d];
            }
            let k2 = rhs(&s2, g);
            let mut s3 = [0.0; 3];
            for d in 0..3 {
                s3[d] = x0[d] + 0.5 * h * k2[d];
            }
            let k3 = rhs(&s3, g);
            let mut s4 = [0.0; 3];
            for d in 0..3 {
                s4[d] = x0[d] + h * k3[d];
            }

            let gbar = xbar;
            let mut kbar1 = [0.0; 3];
            let mut kbar2 = [0.0; 3];
            let mut kbar3 = [0.0; 3];
            let mut kbar4 = [0.0; 3];
            for d in 0..3 {
                kbar1[d] = h / 6.0 * gbar[d];
                kbar2[d] = h / 3.0 * gbar[d];
                kbar3[d] = h / 3.0 * gbar[d];
                kbar4[d] = h / 6.0 * gbar[d];
            }
            let mut xb = gbar;

            // Stage 4.
            let sbar4 = mat_t_vec(&rhs_jac(&s4, g), &kbar4);
            ubar += dot3(&rhs_dg(&s4), &kbar4);
            for d in 0..3 {
                xb[d] += sbar4[d];
                kbar3[d] += h * sbar4[d];
            }
            // Stage 3.
            let sbar3 = mat_t_vec(&rhs_jac(&s3, g), &kbar3);
            ubar += dot3(&rhs_dg(&s3), &kbar3);
            for d in 0..3 {
                xb[d] += sbar3[d];
                kbar2[d] += 0.5 * h * sbar3[d];
            }
            // Stage 2.
            let sbar2 = mat_t_vec(&rhs_jac(&s2, g), &kbar2);
            ubar += dot3(&rhs_dg(&s2), &kbar2);
            for d in 0..3 {
                xb[d] += sbar2[d];
                kbar1[d] += 0.5 * h * sbar2[d];
            }
            // Stage 1.
            let sbar1 = mat_t_vec(&rhs_jac(&x0, g), &kbar1);
            ubar += dot3(&rhs_dg(&x0), &kbar1);
            for d in 0..3 {
                xb[d] += sbar1[d];
            }
            xbar = xb;
        }
        let m = reg_mask.map_or(1.0, |mk| mk[i]);
        grad[i] = ubar + 2.0 * w.reg * h_int * m * grid.controls[i];
    }
    Ok((value, q))
}

fn masked_u_sq(controls: &[f64], mask: Option<&[f64]>) -> f64 {
    match mask {
        None => controls.iter().map(|u| u * u).sum(),
        Some(mk) => controls.iter().zip(mk).map(|(u, m)| m * u * u).sum(),
    }
}

/// Exact gradient of the augmented Lagrangian over the grid controls.
pub fn adjoint_gradient(grid: &TranscriptionGrid, w: &AlWeights) -> Result<Vec<f64>> {
    value_and_grad(grid, w).map(|(_, g, _)| g)
}

/// Augmented-Lagrangian value without the adjoint pass (line searches only
/// need the scalar).
fn value_only(
    grid: &TranscriptionGrid,
    w: &AlWeights,
    reg_mask: Option<&[f64]>,
) -> Result<(f64, [f64; 3])> {
    let (q1, q2, q3) = objective_and_constraints(grid)?;
    let h_int = grid.t_total / grid.n() as f64;
    let u_sq: f64 = masked_u_sq(&grid.controls, reg_mask);
    let value = q1
        + w.mu2 * q2
        + w.mu3 * q3
        + 0.5 * w.rho * (q2 * q2 + q3 * q3)
        + w.reg * h_int * u_sq;
    Ok((value, [q1, q2, q3]))
}

struct InnerOutcome {
    controls: Vec<f64>,
    q: [f64; 3],
    iterations: usize,
    converged: bool,
}

/// Projected L-BFGS for `min f(u)` with `u in [-G, G]^n`.
///
/// Directions are built in the free subspace (coordinates not pinned at an
/// active bound), which keeps the quasi-Newton model usable as the active
/// set settles; a spectral (Barzilai-Borwein) projected-gradient step is the
/// fallback when the model direction stalls. Convergence is on the infinity
/// norm of the projected gradient step `u - P(u - grad)`.
fn lbfgs_bound(
    grid: &TranscriptionGrid,
    u0: Vec<f64>,
    w: &AlWeights,
    reg_mask: Option<&[f64]>,
    gtol: f64,
    max_iter: usize,
) -> Result<InnerOutcome> {
    const MEM: usize = 10;
    let g_max = grid.g_max;
    let n = u0.len();
    let project = |u: &mut [f64]| {
        for v in u.iter_mut() {
            *v = v.clamp(-g_max, g_max);
        }
    };
    let mut work = grid.clone();
    let mut states_buf: Vec<[f64; 3]> = Vec::new();

    let mut u = u0;
    project(&mut u);
    let mut grad = vec![0.0f64; n];
    work.controls.copy_from_slice(&u);
    let (mut fval, mut q) = value_and_grad_buf(&work, w, reg_mask, &mut states_buf, &mut grad)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut bb_step = 1.0 / grad.iter().fold(1e-12f64, |m, g| m.max(g.abs()));
    let mut iter = 0;
    let mut f_anchor = fval;
    let mut anchor_iter = 0usize;
    let mut converged = false;

    while iter < max_iter {
        // Stagnation cutoff: no meaningful decrease over a long stretch.
        if iter >= anchor_iter + 80 {
            if f_anchor - fval <= 1e-15 * fval.abs().max(1.0) {
                break;
            }
            f_anchor = fval;
            anchor_iter = iter;
        }
        let mut pg = 0.0f64;
        for i in 0..n {
            let step = (u[i] - grad[i]).clamp(-g_max, g_max) - u[i];
            pg = pg.max(step.abs());
        }
        if pg <= gtol {
            converged = true;
            break;
        }

        // Free-subspace gradient: zero where the bound is active and the
        // gradient pushes outward.
        let mut gf = grad.clone();
        for i in 0..n {
            let at_lo = u[i] <= -g_max && grad[i] > 0.0;
            let at_hi = u[i] >= g_max && grad[i] < 0.0;
            if at_lo || at_hi {
                gf[i] = 0.0;
            }
        }

        // Two-loop recursion on the free gradient.
        let mut d: Vec<f64> = gf.iter().map(|g| -g).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0f64; m];
        for k in (0..m).rev() {
            let a = rho_hist[k] * s_hist[k].iter().zip(&d).map(|(s, d)| s * d).sum::<f64>();
            alpha[k] = a;
            for i in 0..n {
                d[i] -= a * y_hist[k][i];
            }
        }
        if m > 0 {
            let sy: f64 = s_hist[m - 1].iter().zip(&y_hist[m - 1]).map(|(s, y)| s * y).sum();
            let yy: f64 = y_hist[m - 1].iter().map(|y| y * y).sum();
            for v in d.iter_mut() {
                *v *= sy / yy;
            }
        }
        for k in 0..m {
            let b = rho_hist[k] * y_hist[k].iter().zip(&d).map(|(y, d)| y * d).sum::<f64>();
            for i in 0..n {
                d[i] += (alpha[k] - b) * s_hist[k][i];
            }
        }
        // Keep the model direction inside the free subspace.
        for i in 0..n {
            if gf[i] == 0.0 {
                d[i] = 0.0;
            }
        }
        let dg: f64 = d.iter().zip(&grad).map(|(d, g)| d * g).sum();
        let mut tried_bb = false;
        if dg >= -1e-14 * fval.abs().max(1.0) {
            // Degenerate model; use the spectral projected-gradient step.
            for i in 0..n {
                d[i] = -bb_step * gf[i];
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            tried_bb = true;
        }

        // Backtracking Armijo search along the projected path, with one
        // retry on the spectral direction if the model step fails.
        let mut accepted = false;
        'search: loop {
            let mut step = 1.0f64;
            for _ in 0..30 {
                let mut u_new: Vec<f64> =
                    u.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                project(&mut u_new);
                let gdx: f64 = grad
                    .iter()
                    .zip(u_new.iter().zip(&u))
                    .map(|(g, (n, o))| g * (n - o))
                    .sum();
                let moved = u_new.iter().zip(&u).any(|(a, b)| a != b);
                if !moved {
                    break;
                }
                if gdx >= 0.0 {
                    step *= 0.5;
                    continue;
                }
                work.controls.copy_from_slice(&u_new);
                let (f_new, q_new) = value_only(&work, w, reg_mask)?;
                if f_new <= fval + 1e-4 * gdx {
                    let mut g_new = vec![0.0f64; n];
                    let (_, _) =
                        value_and_grad_buf(&work, w, reg_mask, &mut states_buf, &mut g_new)?;
                    let s: Vec<f64> = u_new.iter().zip(&u).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
                    let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                    let ss: f64 = s.iter().map(|v| v * v).sum();
                    if sy > 1e-12 * ss.sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
                        bb_step = (ss / sy).clamp(1e-10, 1e10);
                        if s_hist.len() == MEM {
                            s_hist.remove(0);
                            y_hist.remove(0);
                            rho_hist.remove(0);
                        }
                        s_hist.push(s);
                        y_hist.push(y);
                        rho_hist.push(1.0 / sy);
                    }
                    u = u_new;
                    fval = f_new;
                    grad = g_new;
                    q = q_new;
                    accepted = true;
                    break 'search;
                }
                step *= 0.5;
            }
            if tried_bb {
                break;
            }
            // Model direction failed; retry once with the spectral step.
            for i in 0..n {
                d[i] = -bb_step * gf[i];
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            tried_bb = true;
        }
        iter += 1;
        if !accepted {
            break;
        }
    }
    if iter >= max_iter {
        let mut pg = 0.0f64;
        for i in 0..n {
            let step = (u[i] - grad[i]).clamp(-g_max, g_max) - u[i];
            pg = pg.max(step.abs());
        }
        converged = pg <= gtol;
    }
    Ok(InnerOutcome { controls: u, q, iterations: iter, converged })
}

#[derive(Debug, Clone)]
struct AlState {
    controls: Vec<f64>,
    mu2: f64,
    mu3: f64,
    rho: f64,
    q: [f64; 3],
    iterations: u64,
    feasible: bool,
}

impl AlState {
    fn fresh(controls: Vec<f64>, rho0: f64) -> Self {
        Self {
            controls,
            mu2: 0.0,
            mu3: 0.0,
            rho: rho0,
            q: [0.0; 3],
            iterations: 0,
            feasible: false,
        }
    }
}

/// Augmented-Lagrangian outer loop: standard first-order multiplier update
/// every iteration; the penalty grows tenfold whenever the constraint norm
/// fails to drop fourfold, capped at `rho_max`. Resumes from the carried
/// multiplier/penalty state so regularization phases can be chained.
fn al_solve(
    grid: &TranscriptionGrid,
    mut state: AlState,
    reg: f64,
    reg_mask: Option<&[f64]>,
    max_outer: usize,
    gtol_final: f64,
    max_inner: usize,
    tighten: bool,
    freeze_mu: bool,
    opts: &SolveOptions,
) -> Result<AlState> {
    let mut c_prev = f64::INFINITY;
    state.feasible = false;
    for outer in 0..max_outer {
        // Loose inner tolerance while the multipliers are far off, then a
        // hard polish once the constraints are nearly in place. Resumed
        // polish phases skip the loosening.
        let gtol = if tighten {
            (gtol_final * 10f64.powi((4 - outer as i32).max(0))).max(gtol_final)
        } else {
            gtol_final
        };
        let w = AlWeights { mu2: state.mu2, mu3: state.mu3, rho: state.rho, reg };
        let out = lbfgs_bound(grid, state.controls, &w, reg_mask, gtol, max_inner)?;
        state.controls = out.controls;
        state.q = out.q;
        state.iterations += out.iterations as u64;
        let cnorm = state.q[1].abs().max(state.q[2].abs());
        if std::env::var_os("OPTOMECH_DEBUG").is_some() {
            eprintln!(
                "al n={} reg={reg:.1e} outer={outer} gtol={gtol:.1e} inner={} q1T={:.6} c={cnorm:.2e} mu=({:.3e},{:.3e}) rho={:.1e}",
                grid.n(), out.iterations, state.q[0], state.mu2, state.mu3, state.rho
            );
        }
        if cnorm <= opts.feas_tol && gtol <= gtol_final {
            state.feasible = true;
            return Ok(state);
        }
        if !freeze_mu {
            state.mu2 += state.rho * state.q[1];
            state.mu3 += state.rho * state.q[2];
            if out.converged && cnorm > 0.25 * c_prev && cnorm > 10.0 * opts.feas_tol {
                state.rho = (state.rho * 10.0).min(opts.rho_max);
            }
        }
        c_prev = cnorm;
    }
    state.feasible = state.q[1].abs().max(state.q[2].abs()) <= opts.feas_tol;
    Ok(state)
}

/// Multi-start seed profiles: zero, two three-bang heuristics, and random
/// bang patterns from the configured seed set.
fn build_seeds(g_max: f64, t_total: f64, n: usize, seed_set: &[u64]) -> Vec<Vec<f64>> {
    let mut seeds = Vec::new();
    seeds.push(vec![0.0; n]);
    for sign in [1.0, -1.0] {
        let mut u = vec![0.0; n];
        for (i, v) in u.iter_mut().enumerate() {
            let frac = (i as f64 + 0.5) / n as f64;
            let s = if frac < 1.0 / 3.0 {
                sign
            } else if frac < 2.0 / 3.0 {
                -sign
            } else {
                sign
            };
            *v = s * g_max;
        }
        seeds.push(u);
    }
    for &seed in seed_set {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..=4usize);
        let mut cuts: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..0.9)).collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let first: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut u = vec![0.0; n];
        for (i, v) in u.iter_mut().enumerate() {
            let frac = (i as f64 + 0.5) / n as f64;
            let piece = cuts.iter().filter(|&&c| c <= frac).count();
            let sign = if piece % 2 == 0 { first } else { -first };
            *v = sign * g_max;
        }
        seeds.push(u);
    }
    let _ = t_total;
    seeds
}

/// Direct-transcription solve: multi-started augmented Lagrangian over the
/// control grid, bang/singular classification of the winner, and a
/// minimum-principle certificate computed on the classified profile
/// (switch times polished to feasibility first).
pub fn solve_direct(g_max: f64, t_total: f64, n: usize, opts: &SolveOptions) -> Result<SolveResult> {
    let t0 = std::time::Instant::now();
    let grid = TranscriptionGrid::new(g_max, t_total, n)?;
    let seeds = build_seeds(g_max, t_total, n, &opts.seed_set);
    let n_seeds = seeds.len();

    // Stage 1 -- triage on a four-times-coarser grid: a short, mildly
    // regularized solve on every seed ranks the basins cheaply.
    let n_triage = (n / 4).clamp(100, n);
    let coarse = TranscriptionGrid::new(g_max, t_total, n_triage)?;
    let seeds_c = build_seeds(g_max, t_total, n_triage, &opts.seed_set);
    let coarse_c = coarse.clone();
    let opts_c = opts.clone();
    let triaged = ordered_map(seeds_c, move |u0| {
        al_solve(
            &coarse_c,
            AlState::fresh(u0, opts_c.rho0),
            1e-4 * g_max,
            None,
            6,
            1e-6,
            300,
            true,
            false,
            &opts_c,
        )
    });

    // Rank: near-feasible first, then by objective; index-order ties keep
    // the outcome deterministic.
    let mut ranked: Vec<AlState> = Vec::new();
    for out in triaged {
        ranked.push(out?);
    }
    ranked.sort_by(|a, b| {
        let fa = a.q[1].abs().max(a.q[2].abs()) <= 1e-6;
        let fb = b.q[1].abs().max(b.q[2].abs()) <= 1e-6;
        fb.cmp(&fa).then(a.q[0].partial_cmp(&b.q[0]).unwrap())
    });
    ranked.truncate(2);
    if ranked.len() == 2 {
        let same = ranked[0]
            .controls
            .iter()
            .zip(&ranked[1].controls)
            .all(|(a, b)| (a - b).abs() <= 1e-3 * g_max);
        if same {
            ranked.truncate(1);
        }
    }

    // Stage 2 -- full grid, three phases. First converge the augmented
    // Lagrangian to feasibility. Then "squash": one pass with a strong
    // control penalty; with the multipliers already converged the switching
    // function vanishes on singular stretches, so the penalty simply damps
    // the leftover flat-direction wiggle toward the singular control
    // without moving the bangs. Finally "release": drop the penalty and
    // re-polish to remove the bias the squash introduced near switches.
    let reg_squash = 2e-3 * g_max;
    let grid_c = grid.clone();
    let opts_c = opts.clone();
    let finished = ordered_map(ranked, move |st| -> Result<AlState> {
        // Upsample the coarse controls onto the full grid.
        let mut up = vec![0.0f64; n];
        for (i, v) in up.iter_mut().enumerate() {
            *v = st.controls[i * n_triage / n];
        }
        let mut st = AlState { controls: up, ..st };
        st = al_solve(
            &grid_c,
            st,
            0.0,
            None,
            opts_c.max_outer,
            opts_c.gtol,
            opts_c.max_inner,
            true,
            false,
            &opts_c,
        )?;
        // Squash/release cycles: a strong control penalty masked to the
        // sub-bang coordinates (frozen from the converged solution) damps
        // the flat-direction wiggle on singular stretches without biasing
        // the bangs; the release pass then restores exact feasibility.
        // Multipliers are frozen through the squash (its constraint drift
        // is an artifact of the penalty) and rho is softened to keep the
        // subproblem well conditioned.
        let h_int = grid_c.t_total / grid_c.n() as f64;
        let gtol_squash = (2.0 * reg_squash * h_int * 5e-4 * g_max).max(1e-11);
        for (squash_cap, release_cap) in [(2500usize, 1200usize), (800, 500)] {
            let mask: Vec<f64> = st
                .controls
                .iter()
                .map(|u| if u.abs() <= 0.5 * g_max { 1.0 } else { 0.0 })
                .collect();
            let rho_keep = st.rho;
            st.rho = st.rho.min(3e2);
            st = al_solve(
                &grid_c,
                st,
                reg_squash,
                Some(&mask),
                1,
                gtol_squash,
                squash_cap,
                false,
                true,
                &opts_c,
            )?;
            st.rho = rho_keep;
            st = al_solve(
                &grid_c,
                st,
                0.0,
                None,
                6,
                opts_c.gtol,
                release_cap,
                false,
                false,
                &opts_c,
            )?;
        }
        Ok(st)
    });

    let mut best: Option<AlState> = None;
    for out in finished {
        let out = out?;
        if !out.feasible {
            continue;
        }
        let replace = match &best {
            None => true,
            Some(b) => out.q[0] < b.q[0] - 1e-12,
        };
        if replace {
            best = Some(out);
        }
    }
    let best = best.ok_or(OptomechError::NoFeasibleSolution { tried: n_seeds })?;

    let (structure, rough_switches, first_sign) =
        classify_controls(&best.controls, g_max, t_total);

    // Certificate on the classified profile: polish the classified switch
    // times onto the feasibility manifold, then verify. Falls back to an
    // unverified report when no clean structure emerged.
    let (pmp, verified_profile, polished_switches) =
        certify_classified(g_max, t_total, structure, first_sign, &rough_switches, opts);

    let final_grid = grid.with_controls(best.controls.clone())?;
    let profile = final_grid.to_profile()?;
    let q = best.q;
    let point = lift(ReducedState::new(q[0], q[1], q[2]));
    let r = r_from_final(&point, 1e-6_f64.max(10.0 * opts.feas_tol))?;

    let switch_times = polished_switches.unwrap_or(rough_switches);
    let _ = verified_profile;

    Ok(SolveResult {
        g_max,
        t_total,
        method: "direct".into(),
        structure,
        first_sign,
        switch_times,
        r,
        q_final: q,
        residual_q2: q[1],
        residual_q3: q[2],
        objective_q1t: q[0],
        pmp,
        stats: SolveStats {
            iterations: best.iterations,
            rho_final: best.rho,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        },
        profile,
        grid_controls: Some(final_grid.controls),
        candidates: None,
    })
}

/// Polish classification-derived switch times to feasibility and run the
/// verifier on the resulting clean profile.
fn certify_classified(
    g_max: f64,
    t_total: f64,
    structure: Structure,
    first_sign: i8,
    rough_switches: &[f64],
    opts: &SolveOptions,
) -> (PmpReport, Option<ControlProfile>, Option<Vec<f64>>) {
    let unverified = |reason: &str| PmpReport {
        mu2: 0.0,
        mu3: 0.0,
        switch_phi_residuals: Vec::new(),
        bang_sign_ok: Vec::new(),
        max_abs_phi_singular: None,
        max_lc_singular: None,
        pass: false,
        status: format!("unverified: {reason}"),
        min_costate_norm: 0.0,
    };

    let cand = match structure {
        Structure::Bbb if rough_switches.len() == 2 => {
            CandidateStructure::Bbb { first_sign: first_sign as f64 }
        }
        Structure::Bbsb if rough_switches.len() == 3 => CandidateStructure::Bbsb {
            first_sign: first_sign as f64,
            final_sign: first_sign as f64,
        },
        _ => return (unverified("no clean bang/singular structure"), None, None),
    };

    let polish = |c: CandidateStructure| {
        switch_times::newton_polish(g_max, t_total, &c, rough_switches, opts.step_final, 1e-12, 30)
            .map(|t| (c, t))
    };
    let polished = polish(cand).or_else(|| {
        // The BBSB final sign may differ from the first sign.
        if let CandidateStructure::Bbsb { first_sign, .. } = cand {
            polish(CandidateStructure::Bbsb { first_sign, final_sign: -first_sign })
        } else {
            None
        }
    });
    let Some((cand, times)) = polished else {
        return (unverified("classified switch times do not polish"), None, None);
    };
    let profile = match ControlProfile::from_switch_times(
        &cand.couplings(g_max),
        &times,
        t_total,
        g_max,
    ) {
        Ok(p) => p,
        Err(_) => return (unverified("polished times invalid"), None, None),
    };
    let traj = match integrate_reduced(&profile, ReducedState::ORIGIN, opts.step_final) {
        Ok(t) => t,
        Err(_) => return (unverified("classified profile diverged"), None, None),
    };
    match verify_on_trajectory(&profile, &traj, &opts.verify) {
        Ok(report) => (report, Some(profile), Some(times)),
        Err(e) => (unverified(&e.to_string()), None, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn grid_rejects_small_n() {
        assert!(TranscriptionGrid::new(1.0, 1.0, 50).is_err());
    }

    #[test]
    fn zero_control_stays_at_origin() {
        let grid = TranscriptionGrid::new(1.0, PI, 200).unwrap();
        let (q1, q2, q3) = objective_and_constraints(&grid).unwrap();
        assert_eq!((q1, q2, q3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_sign_bang_pushes_q1_negative() {
        let grid = TranscriptionGrid::new(1.0, 1.0, 100)
            .unwrap()
            .with_controls(vec![1.0; 100])
            .unwrap();
        let (q1, _, _) = objective_and_constraints(&grid).unwrap();
        assert!(q1 < 0.0);
    }

    #[test]
    fn grid_propagation_matches_profile_integrator() {
        let n = 200;
        let mut controls = vec![2.0; n];
        for c in controls.iter_mut().skip(n / 2) {
            *c = -2.0;
        }
        let grid = TranscriptionGrid::new(2.0, PI / 2.0, n)
            .unwrap()
            .with_controls(controls)
            .unwrap();
        let (q1, q2, q3) = objective_and_constraints(&grid).unwrap();
        let profile = grid.to_profile().unwrap();
        let fin = crate::dynamics::propagate_final(&profile, ReducedState::ORIGIN, 1e-4).unwrap();
        assert_relative_eq!(q1, fin.q1, epsilon = 1e-9);
        assert_relative_eq!(q2, fin.q2, epsilon = 1e-9);
        assert_relative_eq!(q3, fin.q3, epsilon = 1e-9);
    }

    /// Central finite differences of the scalar objective; the independent
    /// oracle for the adjoint gradient.
    fn fd_gradient(grid: &TranscriptionGrid, w: &AlWeights, eps: f64) -> Vec<f64> {
        let scalar = |g: &TranscriptionGrid| -> f64 {
            let (q1, q2, q3) = objective_and_constraints(g).unwrap();
            let h_int = g.t_total / g.n() as f64;
            let u_sq: f64 = g.controls.iter().map(|u| u * u).sum();
            q1 + w.mu2 * q2 + w.mu3 * q3 + 0.5 * w.rho * (q2 * q2 + q3 * q3)
                + w.reg * h_int * u_sq
        };
        let mut out = vec![0.0; grid.n()];
        for i in 0..grid.n() {
            let mut gp = grid.clone();
            let mut gm = grid.clone();
            gp.controls[i] += eps;
            gm.controls[i] -= eps;
            out[i] = (scalar(&gp) - scalar(&gm)) / (2.0 * eps);
        }
        out
    }

    #[test]
    fn adjoint_matches_finite_differences_on_random_profiles() {
        use rand::Rng;
        let n = 120;
        let (g_max, t_total) = (2.0, PI / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..3 {
            let controls: Vec<f64> = (0..n).map(|_| rng.gen_range(-g_max..g_max)).collect();
            let grid = TranscriptionGrid::new(g_max, t_total, n)
                .unwrap()
                .with_controls(controls)
                .unwrap();
            let w = AlWeights { mu2: 0.3, mu3: -0.8, rho: 5.0, reg: if case == 2 { 0.7 } else { 0.0 } };
            let adj = adjoint_gradient(&grid, &w).unwrap();
            let fd = fd_gradient(&grid, &w, 1e-6);
            let num: f64 = adj.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(num / den <= 1e-6, "case {case}: relative error {:.3e}", num / den);
        }
    }

    #[test]
    fn gradient_at_zero_control_flows_through_q1_channel() {
        let n = 150;
        let grid = TranscriptionGrid::new(1.0, 1.0, n).unwrap();
        let w = AlWeights { mu2: 0.0, mu3: 0.0, rho: 3.0, reg: 0.0 };
        let adj = adjoint_gradient(&grid, &w).unwrap();
        let fd = fd_gradient(&grid, &w, 1e-6);
        for i in 0..n {
            assert!((adj[i] - fd[i]).abs() <= 1e-8 * (1.0 + fd[i].abs()));
        }
        // At the equilibrium the constraint part contributes nothing; the
        // whole gradient is the q1 sensitivity, which is nonzero.
        assert!(adj.iter().all(|&v| v < 0.0));
    }

    #[test]
    fn penalty_part_of_gradient_scales_linearly_in_rho() {
        let n = 100;
        let controls: Vec<f64> = (0..n).map(|i| if i < n / 2 { 1.0 } else { -0.4 }).collect();
        let grid = TranscriptionGrid::new(1.0, 1.0, n)
            .unwrap()
            .with_controls(controls)
            .unwrap();
        let base = AlWeights { mu2: 0.0, mu3: 0.0, rho: 0.0, reg: 0.0 };
        let w1 = AlWeights { mu2: 0.0, mu3: 0.0, rho: 4.0, reg: 0.0 };
        let w2 = AlWeights { mu2: 0.0, mu3: 0.0, rho: 8.0, reg: 0.0 };
        let g0 = adjoint_gradient(&grid, &base).unwrap();
        let g1 = adjoint_gradient(&grid, &w1).unwrap();
        let g2 = adjoint_gradient(&grid, &w2).unwrap();
        for i in 0..n {
            let p1 = g1[i] - g0[i];
            let p2 = g2[i] - g0[i];
            assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-10, epsilon = 1e-14);
        }
    }
}
