//! Nonlinear tracer goal: value, adjoint gradient checked by finite
//! differences, Hessian action, and PDE solve counts.

use goed::experiment::{ExperimentConfig, Problem};
use goed::goal::GoalFunctional;
use goed::linop::LinearMap;
use goed::rng;

fn main() -> goed::Result<()> {
    let problem = Problem::from_config(&ExperimentConfig::example2())?;
    let tracer = problem.tracer.clone().expect("example 2 carries the tracer goal");
    let mass = problem.mass();
    let m_pr = problem.inverse.prior.mean.clone();
    println!("goal at prior mean {:.6e}", tracer.value(&m_pr)?);
    println!("goal at true field {:.6e}", tracer.value(&problem.m_true)?);

    tracer.reset_count();
    let g = tracer.gradient(&m_pr)?;
    println!("gradient: {} solves", tracer.solve_count());
    let mut r = rng::substream(5, 0);
    let dir = rng::standard_normal(&mut r, m_pr.len());
    let h = 1e-4 * mass.norm(&m_pr) / mass.norm(&dir);
    let fd = (tracer.value(&(&m_pr + &dir * h))? - tracer.value(&(&m_pr - &dir * h))?) / (2.0 * h);
    println!("directional derivative {:.6e}, finite difference {fd:.6e}", mass.inner(&g, &dir));

    let hess = tracer.hessian(&m_pr)?;
    tracer.reset_count();
    let hd = hess.apply(&dir)?;
    println!("Hessian action: {} solves, ⟨H d, d⟩_M = {:.6e}", tracer.solve_count(), mass.inner(&hd, &dir));
    Ok(())
}
