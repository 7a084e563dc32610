// scratch probe: direct solver on both paper cases
use optomech::solver::{direct::solve_direct, SolveOptions};
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let opts = SolveOptions::default();
    for (g, t, label) in [(1.0, PI, "case A"), (2.0, PI / 2.0, "case B")] {
        let t0 = Instant::now();
        match solve_direct(g, t, 4000, &opts) {
            Ok(res) => {
                let controls = res.grid_controls.as_ref().unwrap();
                let close = controls
                    .iter()
                    .filter(|&&u| {
                        let d = [(u - g).abs(), (u + g).abs(), u.abs()];
                        d.iter().cloned().fold(f64::INFINITY, f64::min) <= 1e-3 * g
                    })
                    .count();
                println!(
                    "{label}: r={:.6} structure={} sw={:?} resid=({:.2e},{:.2e}) iters={} rho={:.1e} pass={} status={} bang%={:.3} wall={:.1}s",
                    res.r,
                    res.structure,
                    res.switch_times.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                    res.residual_q2,
                    res.residual_q3,
                    res.stats.iterations,
                    res.stats.rho_final,
                    res.pmp.pass,
                    res.pmp.status,
                    100.0 * close as f64 / controls.len() as f64,
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("{label}: ERR {e} ({:.1}s)", t0.elapsed().as_secs_f64()),
        }
    }
}
