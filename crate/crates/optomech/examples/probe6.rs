// scratch probe: bang emergence vs grid size, case B
use optomech::solver::{direct::solve_direct, SolveOptions};
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let opts = SolveOptions::default();
    let (g, t) = (2.0, PI / 2.0);
    for n in [8000usize, 20000] {
        let t0 = Instant::now();
        match solve_direct(g, t, n, &opts) {
            Ok(res) => {
                let u = res.grid_controls.as_ref().unwrap();
                let close = u
                    .iter()
                    .filter(|&&v| {
                        [(v - g).abs(), (v + g).abs(), v.abs()]
                            .iter()
                            .cloned()
                            .fold(f64::INFINITY, f64::min)
                            <= 1e-3 * g
                    })
                    .count();
                println!(
                    "N={n}: r={:.6} resid=({:.1e},{:.1e}) bang%={:.3} wall={:.1}s",
                    res.r,
                    res.residual_q2,
                    res.residual_q3,
                    100.0 * close as f64 / u.len() as f64,
                    t0.elapsed().as_secs_f64()
                );
            }
            Err(e) => println!("N={n}: ERR {e} ({:.1}s)", t0.elapsed().as_secs_f64()),
        }
    }
}
