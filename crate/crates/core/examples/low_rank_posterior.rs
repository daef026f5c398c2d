//! Spectrum of the prior-preconditioned misfit Hessian by Lanczos and by
//! randomized SVD of the preconditioned forward map, and the posterior
//! covariance trace recovered from it.

use goed::bip::Design;
use goed::experiment::{ExperimentConfig, Problem};
use goed::linop::{lanczos_eigs, randomized_svd, to_dense, LanczosOptions, RsvdOptions};

fn main() -> goed::Result<()> {
    let problem = Problem::from_config(&ExperimentConfig::example1())?;
    let inv = &problem.inverse;
    let mass = problem.mass();
    let d = inv.num_candidates();
    let design = Design::full(d, problem.noise_variance)?;

    let k = d;
    let eig = lanczos_eigs(&inv.prior_preconditioned_misfit(&design)?, mass, k, LanczosOptions::default())?;
    let svd = randomized_svd(&inv.prior_preconditioned_forward(), mass, k, RsvdOptions::default())?;
    println!("  i   lanczos λ_i   σ_i²/σ²");
    for i in (0..20).step_by(4) {
        println!("{i:>3}   {:.4e}   {:.4e}", eig.eigenvalues[i], svd.s[i].powi(2) / problem.noise_variance);
    }

    // tr(Γ_po) = tr(Γ_pr) − Σ λ/(1+λ) ‖E v‖²
    let prior_trace = to_dense(&inv.prior.covariance())?.trace();
    let mut reduction = 0.0;
    for (l, v) in eig.eigenvalues.iter().zip(&eig.eigenvectors) {
        let ev = inv.prior.op.apply_sqrt(v)?;
        reduction += l / (1.0 + l) * mass.norm(&ev).powi(2);
    }
    let post = to_dense(&inv.posterior_covariance(&design)?)?.trace();
    println!("tr(Γ_pr) = {prior_trace:.6e}");
    println!("tr(Γ_po) = {:.6e} from {k} eigenpairs", prior_trace - reduction);
    println!("tr(Γ_po) = {post:.6e} directly");
    Ok(())
}
