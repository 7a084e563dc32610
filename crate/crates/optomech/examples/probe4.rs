// scratch probe: case B direct with phase tracing
use optomech::solver::{direct::solve_direct, SolveOptions};
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let opts = SolveOptions::default();
    let t0 = Instant::now();
    let (g, t) = (2.0, PI / 2.0);
    match solve_direct(g, t, 4000, &opts) {
        Ok(res) => {
            let controls = res.grid_controls.as_ref().unwrap();
            let close = controls
                .iter()
                .filter(|&&u| {
                    [(u - g).abs(), (u + g).abs(), u.abs()]
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min)
                        <= 1e-3 * g
                })
                .count();
            // distance quantiles
            let mut d: Vec<f64> = controls
                .iter()
                .map(|&u| {
                    [(u - g).abs(), (u + g).abs(), u.abs()]
                        .iter()
                        .cloned()
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            println!(
                "r={:.6} resid=({:.2e},{:.2e}) bang%={:.2} wall={:.1}s",
                res.r,
                res.residual_q2,
                res.residual_q3,
                100.0 * close as f64 / controls.len() as f64,
                t0.elapsed().as_secs_f64()
            );
            for q in [0.90f64, 0.95, 0.97, 0.99, 0.995] {
                println!("  dist q{:.1}%: {:.2e}", q * 100.0, d[(q * (d.len() - 1) as f64) as usize]);
            }
        }
        Err(e) => println!("ERR {e} ({:.1}s)", t0.elapsed().as_secs_f64()),
    }
}
