//! Runs the oracle validation suite and prints one line per check.
//!
//! `cargo run --release --example validation -- [seed]`

use goed::experiment::run_validation_suite;

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let start = std::time::Instant::now();
    let report = run_validation_suite(seed);
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("{mark} {:<36} {:>11.3e} (tol {:.1e})  {}", c.name, c.measured, c.tolerance, c.detail);
    }
    println!("{} checks in {:.1?}", report.checks.len(), start.elapsed());
    if !report.all_passed() {
        std::process::exit(1);
    }
}
