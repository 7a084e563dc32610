// scratch probe: locate non-compliant intervals in case B
use optomech::solver::{direct::solve_direct, SolveOptions};
use std::f64::consts::PI;

fn main() {
    let opts = SolveOptions::default();
    let (g, t) = (2.0, PI / 2.0);
    let res = solve_direct(g, t, 4000, &opts).unwrap();
    let u = res.grid_controls.as_ref().unwrap();
    let n = u.len();
    let h = t / n as f64;
    let dist = |v: f64| -> f64 {
        [(v - g).abs(), (v + g).abs(), v.abs()]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    };
    println!("switch times: {:?}", res.switch_times);
    let bad: Vec<(usize, f64, f64)> = (0..n)
        .filter(|&i| dist(u[i]) > 1e-3 * g)
        .map(|i| (i, i as f64 * h, u[i]))
        .collect();
    println!("bad count: {}", bad.len());
    // Cluster consecutive indices
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &(i, _, _) in &bad {
        match runs.last_mut() {
            Some((_, e)) if i == *e + 1 => *e = i,
            _ => runs.push((i, i)),
        }
    }
    for (a, b) in &runs {
        let vals: Vec<f64> = (*a..=*b).map(|i| (u[i] * 1e4).round() / 1e4).collect();
        let show: Vec<f64> = vals.iter().cloned().take(6).collect();
        println!(
            "  run {}..{} (t={:.4}..{:.4}, len {}): {:?}{}",
            a, b,
            *a as f64 * h,
            *b as f64 * h,
            b - a + 1,
            show,
            if vals.len() > 6 { " ..." } else { "" }
        );
    }
}
