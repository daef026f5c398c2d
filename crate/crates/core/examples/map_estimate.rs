//! MAP point from noisy data for a growing set of sensors.

use goed::bip::Design;
use goed::experiment::{ExperimentConfig, Problem};

fn main() -> goed::Result<()> {
    let problem = Problem::from_config(&ExperimentConfig::example1())?;
    let inv = &problem.inverse;
    let mass = problem.mass();
    let d = inv.num_candidates();
    let y = inv.synthesize_data(&problem.m_true, problem.noise_variance, 1, true)?;
    let truth = mass.norm(&problem.m_true);
    for k in [0, d / 4, d / 2, d] {
        let step = (d as f64 / k.max(1) as f64).max(1.0);
        let idx: Vec<usize> = (0..k).map(|i| (i as f64 * step) as usize).collect();
        let design = Design::from_indices(d, &idx, problem.noise_variance)?;
        let map = inv.compute_map(&design, &y)?;
        println!(
            "{k:>3} sensors  relative error {:.3}  objective {:.3e}",
            mass.norm(&(&map - &problem.m_true)) / truth,
            inv.objective(&design, &y, &map)?
        );
    }
    Ok(())
}
