// scratch probe: Fock-oracle cross-validation of the case-B solution
use optomech::control::ControlProfile;
use optomech::dynamics::{integrate_full_marked, MomentVector};
use optomech::fock;
use optomech::geometry::{entropy_of_squeezing, lift, entanglement_entropy, ReducedState};
use std::f64::consts::PI;

fn main() {
    let t_total = PI / 2.0;
    let sw = [0.5205577020419361, 0.8714067263450229, 1.3364485804893151];
    let profile =
        ControlProfile::from_switch_times(&[2.0, -2.0, 0.0, 2.0], &sw, t_total, 2.0).unwrap();

    let checkpoints: Vec<f64> = (1..=20).map(|k| t_total * k as f64 / 20.0).collect();
    let full = integrate_full_marked(&profile, MomentVector::VACUUM, 1e-4, &checkpoints).unwrap();

    let vac = fock::FockState::vacuum(40, 40);
    let sampled = fock::evolve_sampled(&vac, &profile, 1e-4, &checkpoints).unwrap();

    let mut max_err = 0.0f64;
    let mut max_imag = 0.0f64;
    for (t, st) in &sampled {
        let idx = full.times.iter().position(|x| (x - t).abs() < 1e-12).unwrap();
        let ode = full.moments[idx].to_array();
        let est = fock::moments(st);
        let fk = est.moments.to_array();
        for i in 0..10 {
            max_err = max_err.max((ode[i] - fk[i]).abs());
        }
        max_imag = max_imag.max(est.imag_max);
    }
    let fin = &sampled.last().unwrap().1;
    println!("max moment error over 20 checkpoints: {max_err:.3e}");
    println!("max imag part: {max_imag:.3e}");
    println!("norm drift: {:.3e}", (fin.norm_sq() - 1.0).abs());
    println!("tail mass: {:.3e}", fin.tail_mass());

    let q_ode = full.final_moments();
    let r = ((-q_ode.q1).asinh()) / 2.0;
    let s_fock = fock::reduced_entropy(fin);
    let s_formula = entropy_of_squeezing(r).unwrap();
    let s_nu = entanglement_entropy(&lift(ReducedState::new(q_ode.q1, q_ode.q2, q_ode.q3)));
    println!("r = {r:.6}");
    println!("entropy: fock {s_fock:.8}  formula {s_formula:.8}  nu-form {s_nu:.8}");
    let (vx, vp) = fock::squeezed_quadrature_variances(fin);
    let expect = (-2.0 * r).exp() / 2.0;
    println!("variances: ({vx:.8}, {vp:.8}) vs e^-2r/2 = {expect:.8}");

    // entropy cross-check along the trajectory
    let mut max_s_err = 0.0f64;
    for (t, st) in &sampled {
        let idx = full.times.iter().position(|x| (x - t).abs() < 1e-12).unwrap();
        let m = full.moments[idx];
        let s1 = entanglement_entropy(&m.point());
        let s2 = fock::reduced_entropy(st);
        max_s_err = max_s_err.max((s1 - s2).abs());
        let _ = t;
    }
    println!("max entropy error along trajectory: {max_s_err:.3e}");
}
