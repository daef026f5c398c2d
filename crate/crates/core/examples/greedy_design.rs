//! Greedy sensor selection under A-optimality, the linearized goal
//! criterion and the goal-oriented quadratic criterion.

use goed::experiment::{greedy_from_config, DesignMethod, ExperimentConfig};

fn main() -> goed::Result<()> {
    let cfg = ExperimentConfig::example1();
    let k = 6;
    for method in DesignMethod::ALL {
        let (search, estimate) = greedy_from_config(&cfg, method, k)?;
        println!(
            "{:<5} sensors {:?}  criterion {:.5e}  evaluations {}",
            method.name(),
            search.indices,
            estimate.value,
            search.evaluations
        );
    }
    Ok(())
}
