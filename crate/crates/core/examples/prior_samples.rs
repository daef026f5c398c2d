//! Draws samples from the elliptic prior and compares the sampled total
//! variance with a randomized trace estimate of the covariance.

use goed::experiment::{ExperimentConfig, Problem};
use goed::linop::mc_trace_with_stats;

fn main() -> goed::Result<()> {
    let problem = Problem::from_config(&ExperimentConfig::example1())?;
    let prior = &problem.inverse.prior;
    let mass = problem.mass();
    let samples = prior.sample(2000, 7)?;
    let mean = samples.iter().fold(prior.mean.clone() * 0.0, |acc, s| acc + s) / samples.len() as f64;
    let sampled: f64 = samples.iter().map(|s| mass.norm(&(s - &prior.mean)).powi(2)).sum::<f64>() / samples.len() as f64;
    let cov = prior.covariance();
    let est = mc_trace_with_stats(&cov, mass, 200, 3)?;
    println!("nodes {}", prior.dim());
    println!("sample mean range [{:.3}, {:.3}] (prior mean {})", mean.min(), mean.max(), prior.mean[0]);
    println!("E‖m − m_pr‖²_M  sampled {sampled:.4e}");
    println!("tr(C_pr)        estimate {:.4e} ± {:.1e}", est.value, est.std_error);
    Ok(())
}
