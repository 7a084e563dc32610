//! Pontryagin machinery: costate dynamics, switching function, singular-arc
//! conditions, and a verifier certifying candidate optimal controls.
//!
//! The objective `min q1(T)` with `q2(T) = q3(T) = 0` fixes the terminal
//! costate `l1(T) = 1` and leaves `(l2(T), l3(T))` free. The control enters
//! the control Hamiltonian linearly, so optimal couplings are bang (`+/-G`)
//! where the switching function `Phi` is nonzero and singular where `Phi`
//! vanishes on an interval; the singular surface is `q1 = 0` with singular
//! control `g = 0`.

use serde::{Deserialize, Serialize};

use crate::control::ControlProfile;
use crate::dynamics::{integrate_reduced, reduced_rhs, rk4_step, Trajectory};
use crate::error::{OptomechError, Result};
use crate::geometry::ReducedState;

/// Adjoint variables `(l1, l2, l3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costate {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl Costate {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Self {
        Self { l1, l2, l3 }
    }

    pub fn norm(&self) -> f64 {
        (self.l1 * self.l1 + self.l2 * self.l2 + self.l3 * self.l3).sqrt()
    }

    fn to_array(self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self { l1: a[0], l2: a[1], l3: a[2] }
    }
}

/// Control Hamiltonian
/// `H_c = 2g(-l1 sqrt(1+|q|^2) + l1 q3 - l3 q1) + 2(l2 q3 - l3 q2)`.
pub fn control_hamiltonian(s: &ReducedState, c: &Costate, g: f64) -> f64 {
    let root = s.root_term();
    2.0 * g * (-c.l1 * root + c.l1 * s.q3 - c.l3 * s.q1) + 2.0 * (c.l2 * s.q3 - c.l3 * s.q2)
}

/// Adjoint equations `dl_i = -dH_c/dq_i`.
pub fn costate_rhs(s: &ReducedState, c: &Costate, g: f64) -> (f64, f64, f64) {
    let root = s.root_term();
    (
        2.0 * g * (c.l1 * s.q1 / root + c.l3),
        2.0 * (g * c.l1 * s.q2 / root + c.l3),
        2.0 * (g * (c.l1 * s.q3 / root - c.l1) - c.l2),
    )
}

/// Switching function `Phi = -l1 (sqrt(1+|q|^2) - q3) - l3 q1`;
/// `dH_c/dg = 2 Phi` identically.
pub fn switching_function(s: &ReducedState, c: &Costate) -> f64 {
    let root = s.root_term();
    -c.l1 * (root - s.q3) - c.l3 * s.q1
}

/// Analytic time derivative of the switching function along a joint
/// state/costate solution: `dPhi/dt = 2 (-q2 l1 + q1 l2)`. Its zero set is
/// the second singular-arc condition.
pub fn switching_function_rate(s: &ReducedState, c: &Costate) -> f64 {
    2.0 * (-s.q2 * c.l1 + s.q1 * c.l2)
}

/// Decision of the pointwise minimum principle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlDecision {
    Bang(f64),
    Singular,
}

/// Optimal control from the sign of the switching function with a dead zone
/// of half-width `eps_phi` around zero.
pub fn pmp_control(phi: f64, g_max: f64, eps_phi: f64) -> ControlDecision {
    if phi < -eps_phi {
        ControlDecision::Bang(g_max)
    } else if phi > eps_phi {
        ControlDecision::Bang(-g_max)
    } else {
        ControlDecision::Singular
    }
}

/// Left-hand side of the generalized Legendre-Clebsch condition,
/// `l2 (q3 - sqrt(1+|q|^2)) - l3 q2`; must be `<= 0` on singular arcs.
pub fn legendre_clebsch_lhs(s: &ReducedState, c: &Costate) -> f64 {
    c.l2 * (s.q3 - s.root_term()) - c.l3 * s.q2
}

/// Residuals of the three singular-arc conditions
/// (`Phi = 0`, `dPhi/dt = 0`, `d2Phi/dt2 = 0`, stated without their positive
/// prefactors). On a genuine singular arc all three vanish; the homogeneous
/// system then forces `q1 = 0` and `g = 0`.
pub fn singular_conditions(s: &ReducedState, c: &Costate, g: f64) -> [f64; 3] {
    let root = s.root_term();
    [
        (root - s.q3) * c.l1 + s.q1 * c.l3,
        -s.q2 * c.l1 + s.q1 * c.l2,
        -s.q3 * c.l1 + g * (s.q3 - root) * c.l2 + (s.q1 - g * s.q2) * c.l3,
    ]
}

/// Joint forward integration of state and costate (used by conservation and
/// derivative-consistency checks).
pub fn integrate_joint(
    profile: &ControlProfile,
    s0: ReducedState,
    c0: Costate,
    step: f64,
) -> Result<Vec<(f64, ReducedState, Costate)>> {
    let plan = crate::dynamics::plan_steps(profile, step, &[]);
    let mut out = Vec::with_capacity(plan.len() + 1);
    out.push((0.0, s0, c0));
    let mut x = [s0.q1, s0.q2, s0.q3, c0.l1, c0.l2, c0.l3];
    for ps in &plan {
        let g = ps.g;
        let f = |y: &[f64; 6]| -> [f64; 6] {
            let s = ReducedState::new(y[0], y[1], y[2]);
            let c = Costate::new(y[3], y[4], y[5]);
            let (d1, d2, d3) = reduced_rhs(&s, g);
            let (e1, e2, e3) = costate_rhs(&s, &c, g);
            [d1, d2, d3, e1, e2, e3]
        };
        x = rk4_step(&f, &x, ps.h());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OptomechError::Diverged { t: ps.t1 });
        }
        out.push((
            ps.t1,
            ReducedState::new(x[0], x[1], x[2]),
            Costate::new(x[3], x[4], x[5]),
        ));
    }
    Ok(out)
}

/// Verification tolerances. `eps_phi_scale` sets the scale-aware dead zone
/// `eps = eps_phi_scale * (1 + |lambda|)` used for bang-sign checks.
#[derive(Debug, Clone, Copy)]
pub struct VerifyTolerances {
    pub tol_phi: f64,
    pub tol_lc: f64,
    pub eps_phi_scale: f64,
    pub feasibility: f64,
    pub step: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        Self {
            tol_phi: 1e-5,
            tol_lc: 1e-9,
            eps_phi_scale: 1e-6,
            feasibility: 1e-6,
            step: crate::dynamics::DEFAULT_STEP,
        }
    }
}

/// Outcome of certifying a candidate control against the minimum principle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmpReport {
    pub mu2: f64,
    pub mu3: f64,
    pub switch_phi_residuals: Vec<f64>,
    pub bang_sign_ok: Vec<bool>,
    pub max_abs_phi_singular: Option<f64>,
    pub max_lc_singular: Option<f64>,
    pub pass: bool,
    /// "verified" when the multiplier recovery was determined,
    /// "underdetermined" when fewer than two switch conditions exist.
    pub status: String,
    pub min_costate_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SegmentKind {
    Bang(f64),
    Singular,
}

fn classify_segment(g: f64, bound: f64) -> SegmentKind {
    if g.abs() > 0.5 * bound {
        SegmentKind::Bang(g.signum())
    } else {
        SegmentKind::Singular
    }
}

/// Certify a candidate profile against the first-order necessary conditions.
///
/// Re-simulates from the origin, fixes `l1(T) = 1`, recovers the free
/// terminal multipliers `(mu2, mu3)` by least squares over the conditions
/// `Phi(t_k) = 0` at the interior switch instants, then checks bang-sign
/// consistency, `|Phi|` and the Legendre-Clebsch sign on singular arcs, and
/// that the costate stays away from zero.
///
/// The backward costate pass reuses the forward trajectory through linear
/// interpolation between its dense samples.
pub fn verify_candidate(profile: &ControlProfile, tols: &VerifyTolerances) -> Result<PmpReport> {
    let traj = integrate_reduced(profile, ReducedState::ORIGIN, tols.step)?;
    let fs = traj.final_state();
    if fs.q2.abs() > tols.feasibility || fs.q3.abs() > tols.feasibility {
        return Err(OptomechError::InfeasibleEndpoint {
            q2: fs.q2.abs(),
            q3: fs.q3.abs(),
            tol: tols.feasibility,
        });
    }
    verify_on_trajectory(profile, &traj, tols)
}

/// As [`verify_candidate`] but reusing an existing trajectory of the
/// profile (must start at the origin and use compatible stepping).
pub fn verify_on_trajectory(
    profile: &ControlProfile,
    traj: &Trajectory,
    tols: &VerifyTolerances,
) -> Result<PmpReport> {
    let n = traj.times.len();
    // Three backward fundamental solutions of the linear costate system,
    // from terminal conditions e1, e2, e3. basis[i][k] = solution k at sample i.
    let mut basis: Vec<[Costate; 3]> = vec![[Costate::new(0.0, 0.0, 0.0); 3]; n];
    basis[n - 1] = [
        Costate::new(1.0, 0.0, 0.0),
        Costate::new(0.0, 1.0, 0.0),
        Costate::new(0.0, 0.0, 1.0),
    ];
    for i in (0..n - 1).rev() {
        let h = traj.times[i] - traj.times[i + 1];
        let g = traj.controls[i];
        let s_hi = traj.states[i + 1];
        let s_lo = traj.states[i];
        let s_mid = ReducedState::new(
            0.5 * (s_hi.q1 + s_lo.q1),
            0.5 * (s_hi.q2 + s_lo.q2),
            0.5 * (s_hi.q3 + s_lo.q3),
        );
        for k in 0..3 {
            let l = basis[i + 1][k].to_array();
            let f1 = costate_arr(&s_hi, &l, g);
            let l2 = axpy(&l, &f1, 0.5 * h);
            let f2 = costate_arr(&s_mid, &l2, g);
            let l3 = axpy(&l, &f2, 0.5 * h);
            let f3 = costate_arr(&s_mid, &l3, g);
            let l4 = axpy(&l, &f3, h);
            let f4 = costate_arr(&s_lo, &l4, g);
            let mut out = l;
            for j in 0..3 {
                out[j] += h / 6.0 * (f1[j] + 2.0 * f2[j] + 2.0 * f3[j] + f4[j]);
            }
            basis[i][k] = Costate::from_array(out);
        }
    }

    // Switching-function components: Phi(t; mu) = phi0 + mu2 phi2 + mu3 phi3.
    let phi_parts = |i: usize| -> [f64; 3] {
        let s = &traj.states[i];
        [
            switching_function(s, &basis[i][0]),
            switching_function(s, &basis[i][1]),
            switching_function(s, &basis[i][2]),
        ]
    };

    let switch_times = profile.switch_times();
    let switch_idx: Vec<usize> = switch_times
        .iter()
        .map(|&t| {
            traj.index_of_time(t)
                .expect("switch instants are exact sample times by construction")
        })
        .collect();

    let underdetermined = switch_idx.len() < 2;
    let (mu2, mu3) = if underdetermined {
        (0.0, 0.0)
    } else {
        // Least squares over Phi(t_k) = 0: rows [phi2 phi3] mu = -phi0.
        let m = switch_idx.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, 2);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for (row, &i) in switch_idx.iter().enumerate() {
            let p = phi_parts(i);
            a[(row, 0)] = p[1];
            a[(row, 1)] = p[2];
            b[row] = -p[0];
        }
        let svd = a.svd(true, true);
        let mu = svd.solve(&b, 1e-14).map_err(|e| {
            OptomechError::InvalidArgument(format!("multiplier least squares failed: {e}"))
        })?;
        (mu[0], mu[1])
    };

    let lambda_at = |i: usize| -> Costate {
        let b = &basis[i];
        Costate::new(
            b[0].l1 + mu2 * b[1].l1 + mu3 * b[2].l1,
            b[0].l2 + mu2 * b[1].l2 + mu3 * b[2].l2,
            b[0].l3 + mu2 * b[1].l3 + mu3 * b[2].l3,
        )
    };
    let phi_at = |i: usize| -> f64 {
        let p = phi_parts(i);
        p[0] + mu2 * p[1] + mu3 * p[2]
    };

    let switch_phi_residuals: Vec<f64> = switch_idx.iter().map(|&i| phi_at(i)).collect();

    // Per-segment checks over the sample ranges between switch indices.
    let mut seg_bounds = Vec::with_capacity(switch_idx.len() + 2);
    seg_bounds.push(0usize);
    seg_bounds.extend_from_slice(&switch_idx);
    seg_bounds.push(n - 1);

    let mut bang_sign_ok = Vec::new();
    let mut max_abs_phi_singular: Option<f64> = None;
    let mut max_lc_singular: Option<f64> = None;
    let mut min_costate_norm = f64::INFINITY;

    for i in 0..n {
        let nm = lambda_at(i).norm();
        if nm < min_costate_norm {
            min_costate_norm = nm;
        }
    }

    for (seg, w) in profile.segments().iter().zip(seg_bounds.windows(2)) {
        let (lo, hi) = (w[0], w[1]);
        match classify_segment(seg.g, profile.bound()) {
            SegmentKind::Bang(sign) => {
                let mut ok = true;
                for i in lo..=hi {
                    let lam = lambda_at(i);
                    let eps = tols.eps_phi_scale * (1.0 + lam.norm());
                    let phi = phi_at(i);
                    // g = +G requires Phi <= eps; g = -G requires Phi >= -eps.
                    if sign > 0.0 && phi > eps {
                        ok = false;
                        break;
                    }
                    if sign < 0.0 && phi < -eps {
                        ok = false;
                        break;
                    }
                }
                bang_sign_ok.push(ok);
            }
            SegmentKind::Singular => {
                let mut phi_max = 0.0f64;
                let mut lc_max = f64::NEG_INFINITY;
                for i in lo..=hi {
                    phi_max = phi_max.max(phi_at(i).abs());
                    lc_max = lc_max.max(legendre_clebsch_lhs(&traj.states[i], &lambda_at(i)));
                }
                max_abs_phi_singular =
                    Some(max_abs_phi_singular.map_or(phi_max, |v: f64| v.max(phi_max)));
                max_lc_singular = Some(max_lc_singular.map_or(lc_max, |v: f64| v.max(lc_max)));
            }
        }
    }

    let pass = if underdetermined {
        // Nothing to certify; vacuous.
        true
    } else {
        bang_sign_ok.iter().all(|&b| b)
            && switch_phi_residuals.iter().all(|r| r.abs() <= tols.tol_phi)
            && max_abs_phi_singular.map_or(true, |v| v <= tols.tol_phi)
            && max_lc_singular.map_or(true, |v| v <= tols.tol_lc)
            && min_costate_norm >= 1e-12
    };

    Ok(PmpReport {
        mu2,
        mu3,
        switch_phi_residuals,
        bang_sign_ok,
        max_abs_phi_singular,
        max_lc_singular,
        pass,
        status: if underdetermined { "underdetermined".into() } else { "verified".into() },
        min_costate_norm,
    })
}

fn costate_arr(s: &ReducedState, l: &[f64; 3], g: f64) -> [f64; 3] {
    let (d1, d2, d3) = costate_rhs(s, &Costate::new(l[0], l[1], l[2]), g);
    [d1, d2, d3]
}

fn axpy(x: &[f64; 3], d: &[f64; 3], a: f64) -> [f64; 3] {
    [x[0] + a * d[0], x[1] + a * d[1], x[2] + a * d[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlProfile;
    use approx::assert_relative_eq;

    #[test]
    fn control_hamiltonian_examples() {
        let c = Costate::new(1.0, 0.0, 0.0);
        for g in [-1.0, 0.5, 2.0] {
            assert_relative_eq!(
                control_hamiltonian(&ReducedState::ORIGIN, &c, g),
                -2.0 * g,
                max_relative = 1e-15
            );
        }
        let s = ReducedState::new(0.3, -1.1, 0.8);
        let c = Costate::new(0.4, -0.2, 0.9);
        assert_relative_eq!(
            control_hamiltonian(&s, &c, 0.0),
            2.0 * (c.l2 * s.q3 - c.l3 * s.q2),
            max_relative = 1e-15
        );
    }

    #[test]
    fn control_hamiltonian_is_affine_in_g() {
        let cases = [
            (ReducedState::new(0.5, -0.3, 1.2), Costate::new(0.7, 0.2, -0.9)),
            (ReducedState::new(-2.0, 0.8, 0.1), Costate::new(1.0, -1.4, 0.3)),
        ];
        for (s, c) in cases {
            let h0 = control_hamiltonian(&s, &c, 0.0);
            let h1 = control_hamiltonian(&s, &c, 1.0);
            for g in [-3.0, -0.25, 0.7, 5.0] {
                let hg = control_hamiltonian(&s, &c, g);
                assert_relative_eq!(hg - h0, g * (h1 - h0), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn dh_dg_equals_twice_switching_function() {
        let cases = [
            (ReducedState::new(0.5, -0.3, 1.2), Costate::new(0.7, 0.2, -0.9)),
            (ReducedState::new(-2.0, 0.8, 0.1), Costate::new(1.0, -1.4, 0.3)),
            (ReducedState::ORIGIN, Costate::new(1.0, 0.0, 0.0)),
        ];
        for (s, c) in cases {
            let dh = control_hamiltonian(&s, &c, 1.0) - control_hamiltonian(&s, &c, 0.0);
            assert!((dh - 2.0 * switching_function(&s, &c)).abs() <= 1e-14);
        }
    }

    #[test]
    fn costate_rhs_examples() {
        let c = Costate::new(1.0, 0.0, 0.0);
        for g in [0.3, -2.0] {
            let d = costate_rhs(&ReducedState::ORIGIN, &c, g);
            assert_eq!(d, (0.0, 0.0, -2.0 * g));
        }
        let s = ReducedState::new(0.4, -0.8, 1.3);
        let d = costate_rhs(&s, &Costate::new(0.0, 0.0, 0.0), 1.7);
        assert_eq!(d, (0.0, 0.0, 0.0));
    }

    #[test]
    fn costate_rhs_is_linear_in_costate() {
        let s = ReducedState::new(0.6, -0.2, 0.9);
        let c = Costate::new(0.3, 1.1, -0.5);
        let g = 1.2;
        let (a1, a2, a3) = costate_rhs(&s, &c, g);
        for alpha in [-2.0, 0.0, 0.5, 7.0] {
            let scaled = Costate::new(alpha * c.l1, alpha * c.l2, alpha * c.l3);
            let (b1, b2, b3) = costate_rhs(&s, &scaled, g);
            assert_relative_eq!(b1, alpha * a1, epsilon = 1e-13);
            assert_relative_eq!(b2, alpha * a2, epsilon = 1e-13);
            assert_relative_eq!(b3, alpha * a3, epsilon = 1e-13);
        }
    }

    #[test]
    fn hamiltonian_constant_along_joint_flow() {
        let profile = ControlProfile::constant(1.4, 1.1, 2.0).unwrap();
        let samples = integrate_joint(
            &profile,
            ReducedState::new(0.2, -0.4, 0.1),
            Costate::new(1.0, 0.3, -0.7),
            1e-4,
        )
        .unwrap();
        let h0 = control_hamiltonian(&samples[0].1, &samples[0].2, 1.4);
        for (t, s, c) in samples.iter().skip(1).step_by(371) {
            let h = control_hamiltonian(s, c, 1.4);
            assert!(
                (h - h0).abs() <= 1e-8 * h0.abs().max(1.0),
                "t = {t}: H_c drifted from {h0} to {h}"
            );
        }
    }

    #[test]
    fn switching_function_examples() {
        let c = Costate::new(1.0, 0.0, 0.0);
        assert_eq!(switching_function(&ReducedState::ORIGIN, &c), -1.0);
        let s = ReducedState::new(0.0, 0.7, -1.1);
        let c = Costate::new(0.0, 0.4, -0.8);
        assert_eq!(switching_function(&s, &c), 0.0);
    }

    #[test]
    fn pmp_control_law() {
        assert_eq!(pmp_control(-0.5, 2.0, 1e-6), ControlDecision::Bang(2.0));
        assert_eq!(pmp_control(0.5, 2.0, 1e-6), ControlDecision::Bang(-2.0));
        assert_eq!(pmp_control(5e-7, 2.0, 1e-6), ControlDecision::Singular);
        assert_eq!(pmp_control(-1e-6, 2.0, 1e-6), ControlDecision::Singular);
    }

    #[test]
    fn legendre_clebsch_examples() {
        let c = Costate::new(0.0, 1.0, 0.0);
        assert_eq!(legendre_clebsch_lhs(&ReducedState::ORIGIN, &c), -1.0);
        let s = ReducedState::new(0.9, -0.4, 1.6);
        for l1 in [-3.0, 0.0, 2.0] {
            assert_eq!(legendre_clebsch_lhs(&s, &Costate::new(l1, 0.0, 0.0)), 0.0);
        }
    }

    #[test]
    fn singular_conditions_examples() {
        // On the singular surface with l1 = 0 and g = 0, the first two
        // residuals vanish.
        let s = ReducedState::new(0.0, 0.5, -0.8);
        let c = Costate::new(0.0, 0.7, 0.3);
        let r = singular_conditions(&s, &c, 0.0);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[1], 0.0);

        // At the origin a generic costate does not solve the homogeneous
        // system.
        let r = singular_conditions(&ReducedState::ORIGIN, &Costate::new(1.0, 1.0, 1.0), 1.0);
        assert!(r.iter().any(|v| v.abs() > 0.5));
    }

    #[test]
    fn verify_zero_control_is_underdetermined() {
        let profile = ControlProfile::constant(0.0, 1.0, 1.0).unwrap();
        let report = verify_candidate(&profile, &VerifyTolerances::default()).unwrap();
        assert_eq!(report.status, "underdetermined");
        assert!(report.pass);
        assert!(report.switch_phi_residuals.is_empty());
    }

    #[test]
    fn verify_rejects_infeasible_endpoint() {
        // A single positive bang leaves q2, q3 far from zero.
        let profile = ControlProfile::constant(1.0, 1.0, 1.0).unwrap();
        let err = verify_candidate(&profile, &VerifyTolerances::default());
        assert!(matches!(err, Err(OptomechError::InfeasibleEndpoint { .. })));
    }
}
