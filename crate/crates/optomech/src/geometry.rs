//! Hyperboloid geometry and entanglement measures.
//!
//! The reduced state `(q1, q2, q3)` lifts onto the upper sheet of
//! `q1^2 + q2^2 + q3^2 - j0^2 = -1` via `j0 = sqrt(1 + |q|^2)`. Geodesic
//! distance in this model is `arccosh(-a.b)` under the Minkowski product
//! with signature `(+, +, +, -)`; the distance from the vacuum to the target
//! point `(-sinh 2r, 0, 0, cosh 2r)` is exactly `2r`.

use serde::{Deserialize, Serialize};

use crate::error::{OptomechError, Result};

/// Tolerance for accepting a point as a member of the hyperboloid in
/// operation preconditions. Looser than the conservation target so that
/// accumulated integrator drift on long horizons still validates.
pub const H3_MEMBERSHIP_TOL: f64 = 1e-8;

/// Normalized expectation values of the three reduced moments. Unconstrained
/// in R^3; the hyperboloid constraint lives in the lifted four-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl ReducedState {
    pub const ORIGIN: Self = Self { q1: 0.0, q2: 0.0, q3: 0.0 };

    pub fn new(q1: f64, q2: f64, q3: f64) -> Self {
        Self { q1, q2, q3 }
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.q3.is_finite()
    }

    /// `sqrt(1 + q1^2 + q2^2 + q3^2)`, the value of `j0` on the upper sheet.
    pub fn root_term(&self) -> f64 {
        (1.0 + self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.q1, self.q2, self.q3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { q1: a[0], q2: a[1], q3: a[2] }
    }
}

/// Contravariant four-vector `(q1, q2, q3, j0)` on the upper hyperboloid
/// sheet (`j0 >= 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperboloidPoint {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub j0: f64,
}

impl HyperboloidPoint {
    /// The lifted vacuum `(0, 0, 0, 1)`.
    pub const VACUUM: Self = Self { q1: 0.0, q2: 0.0, q3: 0.0, j0: 1.0 };

    /// Validating constructor: accepts four components that satisfy the
    /// constraint within [`H3_MEMBERSHIP_TOL`] and lie on the upper sheet.
    pub fn from_components(q1: f64, q2: f64, q3: f64, j0: f64) -> Result<Self> {
        let p = Self { q1, q2, q3, j0 };
        p.validate(H3_MEMBERSHIP_TOL)?;
        Ok(p)
    }

    /// Target point `(-sinh 2r, 0, 0, cosh 2r)` for squeezing parameter `r`.
    pub fn target(r: f64) -> Self {
        Self { q1: -(2.0 * r).sinh(), q2: 0.0, q3: 0.0, j0: (2.0 * r).cosh() }
    }

    pub fn reduced(&self) -> ReducedState {
        ReducedState::new(self.q1, self.q2, self.q3)
    }

    /// Signed constraint defect `q1^2 + q2^2 + q3^2 - j0^2 + 1`.
    pub fn constraint_defect(&self) -> f64 {
        self.q1 * self.q1 + self.q2 * self.q2 + self.q3 * self.q3 - self.j0 * self.j0 + 1.0
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let defect = self.constraint_defect();
        // Relative scaling: the defect is a difference of O(j0^2) terms.
        let scale = 1.0 + self.j0 * self.j0;
        if !defect.is_finite() || defect.abs() > tol * scale {
            return Err(OptomechError::OffHyperboloid { defect: defect.abs(), tol: tol * scale });
        }
        if self.j0 < 1.0 - tol {
            return Err(OptomechError::OffHyperboloid { defect: 1.0 - self.j0, tol });
        }
        Ok(())
    }
}

/// Lift a reduced state onto the upper hyperboloid sheet.
pub fn lift(state: ReducedState) -> HyperboloidPoint {
    HyperboloidPoint {
        q1: state.q1,
        q2: state.q2,
        q3: state.q3,
        j0: state.root_term(),
    }
}

/// Minkowski product `a.b = a1 b1 + a2 b2 + a3 b3 - a0 b0`.
///
/// Both arguments must satisfy the hyperboloid constraint; for such points
/// the product is always `<= -1`.
pub fn minkowski_dot(a: &HyperboloidPoint, b: &HyperboloidPoint) -> Result<f64> {
    a.validate(H3_MEMBERSHIP_TOL)?;
    b.validate(H3_MEMBERSHIP_TOL)?;
    Ok(a.q1 * b.q1 + a.q2 * b.q2 + a.q3 * b.q3 - a.j0 * b.j0)
}

/// Geodesic distance `arccosh(-a.b)`, stabilized near coincident points.
///
/// Uses the identity `-a.b - 1 = |a - b|_M^2 / 2` (valid on the constraint
/// surface), which avoids the catastrophic cancellation of forming the dot
/// product directly and is exactly zero for identical points.
pub fn geodesic_distance(a: &HyperboloidPoint, b: &HyperboloidPoint) -> Result<f64> {
    a.validate(H3_MEMBERSHIP_TOL)?;
    b.validate(H3_MEMBERSHIP_TOL)?;
    let (d1, d2, d3, d0) = (a.q1 - b.q1, a.q2 - b.q2, a.q3 - b.q3, a.j0 - b.j0);
    let u = (0.5 * (d1 * d1 + d2 * d2 + d3 * d3 - d0 * d0)).max(0.0);
    Ok(stable_arccosh_1p(u))
}

/// `arccosh(1 + u)` for `u >= 0`. Near `u = 0` the naive form loses half the
/// significant digits; switch to the series `sqrt(2u) (1 - u/12)`.
fn stable_arccosh_1p(u: f64) -> f64 {
    if u < 1e-8 {
        (2.0 * u).sqrt() * (1.0 - u / 12.0)
    } else {
        let x = 1.0 + u;
        (x + (x * x - 1.0).sqrt()).ln()
    }
}

/// Squared Minkowski speed of the moment flow at `p` under coupling `g`:
/// `4 { g^2 (q3 - j0)^2 + 2 g q1 q2 + q2^2 + q3^2 }`. Nonnegative on the
/// hyperboloid.
pub fn speed_sq(p: &HyperboloidPoint, g: f64) -> f64 {
    let d = p.q3 - p.j0;
    4.0 * (g * g * d * d + 2.0 * g * p.q1 * p.q2 + p.q2 * p.q2 + p.q3 * p.q3)
}

/// `x ln x`, continuous at zero.
fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entanglement entropy (nats) of a two-mode squeezed vacuum with squeezing
/// parameter `r >= 0`:
/// `S = cosh^2 r ln(cosh^2 r) - sinh^2 r ln(sinh^2 r)`.
pub fn entropy_of_squeezing(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(OptomechError::NegativeArgument(r));
    }
    let sh2 = r.sinh().powi(2);
    let ch2 = 1.0 + sh2;
    Ok(xlnx(ch2) - xlnx(sh2))
}

/// Entanglement entropy of the reduced single mode at a trajectory point
/// reached from the vacuum (the six auxiliary moments must be zero, which
/// holds along every vacuum-seeded trajectory).
///
/// The reduced covariance has symplectic eigenvalue `nu = sqrt(1 + q1^2)/2`,
/// independent of `q2, q3` by the hyperboloid constraint, so
/// `S = (nu + 1/2) ln(nu + 1/2) - (nu - 1/2) ln(nu - 1/2)`.
/// At `q2 = q3 = 0`, `q1 = -sinh 2r` this equals [`entropy_of_squeezing`].
pub fn entanglement_entropy(p: &HyperboloidPoint) -> f64 {
    let nu = (1.0 + p.q1 * p.q1).sqrt() / 2.0;
    xlnx(nu + 0.5) - xlnx(nu - 0.5)
}

/// Recover the squeezing parameter from a final point on the target
/// manifold: `r = asinh(-q1) / 2`, requiring `|q2|, |q3| <= tol` and
/// `q1 <= tol`. Values `0 < q1 <= tol` round down to `r = 0`.
pub fn r_from_final(p: &HyperboloidPoint, tol: f64) -> Result<f64> {
    if p.q2.abs() > tol || p.q3.abs() > tol {
        return Err(OptomechError::NotOnTargetManifold { q2: p.q2.abs(), q3: p.q3.abs(), tol });
    }
    if p.q1 > tol {
        return Err(OptomechError::NegativeSqueezing(p.q1));
    }
    if p.q1 > 0.0 {
        return Ok(0.0);
    }
    Ok((-p.q1).asinh() / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lift_vacuum_and_targets() {
        let v = lift(ReducedState::ORIGIN);
        assert_eq!(v, HyperboloidPoint::VACUUM);

        let r: f64 = 0.7;
        let p = lift(ReducedState::new(-(2.0 * r).sinh(), 0.0, 0.0));
        assert_relative_eq!(p.j0, (2.0 * r).cosh(), max_relative = 1e-15);

        let p = lift(ReducedState::new(3.0, 0.0, 4.0));
        assert_relative_eq!(p.j0, 26.0_f64.sqrt(), max_relative = 1e-15);
        assert!(p.validate(1e-12).is_ok());
    }

    #[test]
    fn minkowski_dot_examples() {
        let x0 = HyperboloidPoint::VACUUM;
        assert_eq!(minkowski_dot(&x0, &x0).unwrap(), -1.0);

        let r = 1.3;
        let t = HyperboloidPoint::target(r);
        assert_relative_eq!(
            minkowski_dot(&x0, &t).unwrap(),
            -(2.0 * r).cosh(),
            max_relative = 1e-14
        );

        let p = lift(ReducedState::new(0.0, 0.4, -0.9));
        assert_relative_eq!(
            minkowski_dot(&x0, &p).unwrap(),
            -(1.0 + 0.4f64.powi(2) + 0.9f64.powi(2)).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn minkowski_dot_rejects_off_sheet_points() {
        let bad = HyperboloidPoint { q1: 1.0, q2: 0.0, q3: 0.0, j0: 1.0 };
        assert!(minkowski_dot(&bad, &HyperboloidPoint::VACUUM).is_err());
        // Lower sheet is rejected even though the constraint holds.
        let lower = HyperboloidPoint { q1: 0.0, q2: 0.0, q3: 0.0, j0: -1.0 };
        assert!(minkowski_dot(&lower, &HyperboloidPoint::VACUUM).is_err());
    }

    #[test]
    fn geodesic_distance_examples() {
        let p = lift(ReducedState::new(0.3, -1.2, 0.5));
        assert_eq!(geodesic_distance(&p, &p).unwrap(), 0.0);

        for r in [0.0, 1e-6, 0.1, 0.8336, 1.899, 3.0] {
            let d = geodesic_distance(&HyperboloidPoint::VACUUM, &HyperboloidPoint::target(r))
                .unwrap();
            assert_relative_eq!(d, 2.0 * r, epsilon = 1e-12, max_relative = 1e-10);
        }

        // Isometry: rotating (q2, q3) of both arguments by a common angle
        // preserves the distance.
        let a = ReducedState::new(0.2, 0.7, -0.4);
        let b = ReducedState::new(-1.0, 0.1, 0.9);
        let th: f64 = 0.83;
        let rot = |s: ReducedState| {
            ReducedState::new(
                s.q1,
                th.cos() * s.q2 + th.sin() * s.q3,
                -th.sin() * s.q2 + th.cos() * s.q3,
            )
        };
        let d0 = geodesic_distance(&lift(a), &lift(b)).unwrap();
        let d1 = geodesic_distance(&lift(rot(a)), &lift(rot(b))).unwrap();
        assert_relative_eq!(d0, d1, max_relative = 1e-12);
    }

    #[test]
    fn stable_arccosh_matches_references() {
        // Away from 1 the library arccosh is accurate; compare directly.
        for &u in &[1e-6, 1e-4, 0.1, 2.0] {
            let exact = ((1.0 + u) as f64).acosh();
            assert_relative_eq!(stable_arccosh_1p(u), exact, max_relative = 1e-9);
        }
        // Near 1 the naive form loses half the digits; check against the
        // higher-order series sqrt(2u) (1 - u/12 + 3u^2/160 - ...).
        for &u in &[1e-12f64, 1e-10, 1e-9] {
            let series = (2.0 * u).sqrt() * (1.0 - u / 12.0 + 3.0 * u * u / 160.0);
            assert_relative_eq!(stable_arccosh_1p(u), series, max_relative = 1e-12);
        }
    }

    #[test]
    fn speed_sq_examples() {
        for g in [-2.0, 0.0, 0.5, 3.0] {
            assert_relative_eq!(
                speed_sq(&HyperboloidPoint::VACUUM, g),
                4.0 * g * g,
                max_relative = 1e-15
            );
        }
        let r = 1.1;
        let t = HyperboloidPoint::target(r);
        for g in [-1.0, 2.0] {
            assert_relative_eq!(
                speed_sq(&t, g),
                4.0 * g * g * (2.0 * r).cosh().powi(2),
                max_relative = 1e-13
            );
        }
        let p = lift(ReducedState::new(0.4, -0.6, 1.5));
        assert_relative_eq!(
            speed_sq(&p, 0.0),
            4.0 * (0.36 + 2.25),
            max_relative = 1e-14
        );
    }

    #[test]
    fn entropy_of_squeezing_examples() {
        assert_eq!(entropy_of_squeezing(0.0).unwrap(), 0.0);
        assert!(entropy_of_squeezing(-0.1).is_err());

        // Independent oracle: S = -sum p_n ln p_n with p_n = tanh^{2n} r / cosh^2 r.
        let series = |r: f64| {
            let t2 = r.tanh() * r.tanh();
            let c2 = r.cosh() * r.cosh();
            let mut s = 0.0;
            let mut p = 1.0 / c2;
            for _ in 0..20_000 {
                if p < 1e-18 {
                    break;
                }
                s -= p * p.ln();
                p *= t2;
            }
            s
        };
        // Frozen from the series oracle evaluated to converged precision.
        let s1 = entropy_of_squeezing(1.0).unwrap();
        assert_relative_eq!(s1, series(1.0), epsilon = 1e-12);
        assert_relative_eq!(s1, 1.6198220928977027, epsilon = 1e-12);

        for &(r1, r2) in &[(0.0, 0.1), (0.1, 0.5), (0.5, 1.0), (1.0, 1.8990), (1.8990, 2.5)] {
            assert!(entropy_of_squeezing(r2).unwrap() > entropy_of_squeezing(r1).unwrap());
        }
        for &r in &[0.2, 0.9, 1.7] {
            assert_relative_eq!(entropy_of_squeezing(r).unwrap(), series(r), epsilon = 1e-12);
        }
    }

    #[test]
    fn entanglement_entropy_examples() {
        assert_eq!(entanglement_entropy(&HyperboloidPoint::VACUUM), 0.0);

        // On the target manifold the reduced-mode formula reproduces the
        // squeezed-vacuum entropy exactly.
        for &r in &[0.25, 1.0, 1.899] {
            let p = HyperboloidPoint::target(r);
            let diff = (entanglement_entropy(&p) - entropy_of_squeezing(r).unwrap()).abs();
            assert!(diff <= 1e-12, "r = {r}: diff = {diff:.3e}");
        }

        // The value depends on q1 alone and is monotone in |q1|.
        let a = lift(ReducedState::new(-1.5, 0.9, -2.0));
        let b = lift(ReducedState::new(-1.5, 0.0, 0.0));
        assert_relative_eq!(entanglement_entropy(&a), entanglement_entropy(&b), epsilon = 1e-15);
        let mut last = -1.0;
        for i in 0..60 {
            let q1 = -0.1 * i as f64;
            let s = entanglement_entropy(&lift(ReducedState::new(q1, 0.3, 0.1)));
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn r_from_final_examples() {
        assert_eq!(r_from_final(&HyperboloidPoint::VACUUM, 1e-9).unwrap(), 0.0);
        let p = HyperboloidPoint::target(1.0);
        assert_relative_eq!(r_from_final(&p, 1e-9).unwrap(), 1.0, max_relative = 1e-14);

        let r = 0.8336;
        let p = HyperboloidPoint::target(r);
        assert_relative_eq!(r_from_final(&p, 1e-9).unwrap(), r, max_relative = 1e-14);

        let off = HyperboloidPoint { q1: 0.0, q2: 0.1, q3: 0.0, j0: (1.01f64).sqrt() };
        assert!(matches!(
            r_from_final(&off, 1e-6),
            Err(OptomechError::NotOnTargetManifold { .. })
        ));
        let pos = lift(ReducedState::new(0.5, 0.0, 0.0));
        assert!(matches!(
            r_from_final(&pos, 1e-6),
            Err(OptomechError::NegativeSqueezing(_))
        ));
        // q1 within tolerance of zero rounds down to r = 0.
        let tiny = lift(ReducedState::new(1e-9, 0.0, 0.0));
        assert_eq!(r_from_final(&tiny, 1e-6).unwrap(), 0.0);
    }
}
