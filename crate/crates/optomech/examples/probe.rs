// scratch probe for paper cases
use optomech::solver::{solve_switch_times, CandidateStructure, SolveOptions};
use std::f64::consts::PI;

fn main() {
    let opts = SolveOptions::default();
    for (g, t, label) in [(1.0, PI, "case A (G=1, T=pi)"), (2.0, PI / 2.0, "case B (G=2, T=pi/2)")] {
        for first in [1.0, -1.0] {
            let bbb = solve_switch_times(g, t, CandidateStructure::Bbb { first_sign: first }, &opts);
            match &bbb {
                Ok(r) => println!("{label} BBB first={first}: r={:.6} q1T={:.6} sw={:?} resid=({:.2e},{:.2e}) pmp_pass={} status={}",
                    r.r, r.objective_q1t, r.switch_times, r.residual_q2, r.residual_q3, r.pmp.pass, r.pmp.status),
                Err(e) => println!("{label} BBB first={first}: ERR {e}"),
            }
            let bbsb = solve_switch_times(g, t, CandidateStructure::Bbsb { first_sign: first, final_sign: 1.0 }, &opts);
            match &bbsb {
                Ok(r) => println!("{label} BBSB first={first}: r={:.6} q1T={:.6} sw={:?} resid=({:.2e},{:.2e}) pmp_pass={} maxphi={:?} maxlc={:?}",
                    r.r, r.objective_q1t, r.switch_times, r.residual_q2, r.residual_q3, r.pmp.pass, r.pmp.max_abs_phi_singular, r.pmp.max_lc_singular),
                Err(e) => println!("{label} BBSB first={first}: ERR {e}"),
            }
        }
    }
}
