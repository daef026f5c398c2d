//! Goal-oriented criterion for one design: dense reference against the
//! randomized, spectral and SVD estimators, with Hessian application counts.
//! The last two omit the design-independent `½ tr(H̃²)`, added back here.

use std::sync::Arc;

use goed::bip::{DenseProblem, Design};
use goed::criteria::{gq_dense_oracle, gq_randomized, hz_trace_sq, gq_spectral, gq_svd, GoalDerivatives, SvdPrecompute};
use goed::experiment::{ExperimentConfig, Problem};
use goed::linop::{CountingMap, LanczosOptions, RsvdOptions};

fn main() -> goed::Result<()> {
    let problem = Problem::from_config(&ExperimentConfig::example1().rescaled(12, 5))?;
    let inv = &problem.inverse;
    let m = inv.prior.mean.clone();
    let base = GoalDerivatives::new(problem.goal.as_ref(), &m, &m, problem.mass().clone())?;
    let hessian = Arc::new(CountingMap::new(base.hessian.clone()));
    let gd = GoalDerivatives::from_parts(
        base.expansion.clone(),
        base.prior_mean.clone(),
        base.gradient.clone(),
        hessian.clone(),
        problem.mass().clone(),
    )?;
    let d = inv.num_candidates();
    let design = Design::from_indices(d, &[2, 6, 12, 16, 18, 22], problem.noise_variance)?;

    let dense = DenseProblem::new(inv)?;
    let constant = 0.5 * hz_trace_sq(&inv.prior, &gd)?;
    println!("dense reference        {:.6e}", gq_dense_oracle(&dense, &design, &gd)?);
    for p in [10, 50, 200] {
        hessian.reset();
        let e = gq_randomized(inv, &design, &gd, p, 1)?;
        println!("randomized p = {p:<4}    {:.6e} ± {:.1e}  ({} H)", e.value, e.std_error.unwrap_or(0.0), hessian.applies());
    }
    for k in [2, 4, 6] {
        hessian.reset();
        let e = gq_spectral(inv, &design, &gd, k, LanczosOptions::default())?;
        println!("spectral k = {k:<4}      {:.6e}  ({} H)", e.value + constant, hessian.applies());
    }
    hessian.reset();
    let pre = SvdPrecompute::new(inv, &gd, d, RsvdOptions::default())?;
    let setup = hessian.applies();
    println!("svd r = {d:<4}           {:.6e}  ({setup} H once, 0 per design)", gq_svd(&pre, &design)?.value + constant);
    Ok(())
}
