use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{GoalDerivatives, QuadraticForm, DENSE_TRACE_LIMIT};
use crate::bip::{DenseProblem, Design, InverseProblem};
use crate::error::{check_dim, Error, Result};
use crate::linop::{lanczos_eigs, probe_vector, summarize, to_dense, DenseOperator, Field, LanczosOptions, LinearMap, Which};
use crate::prior::GaussianMeasure;
use crate::rng;

/// Variance of `Z(m) = ½⟨Am, m⟩ + ⟨b, m⟩ + c` under `N(m₀, C)`:
/// `‖A m₀ + b‖²_C + ½ tr((C A)²)`.
///
/// The trace is exact up to [`DENSE_TRACE_LIMIT`]; above it the measure must
/// carry a square root `S` and the trace is summed from the leading
/// eigenvalues of `S* A S`.
pub fn quad_variance(measure: &GaussianMeasure, q: &QuadraticForm) -> Result<f64> {
    let n = measure.dim();
    check_dim(n, q.b.len())?;
    let mass = &measure.mass;
    let c = &measure.covariance;
    for j in 0..4 {
        let xi = probe_vector(mass, 0x0c0f, j);
        let cxx = mass.inner(&c.apply(&xi)?, &xi);
        if cxx < -1e-12 * mass.inner(&xi, &xi) {
            return Err(Error::IndefiniteCovariance(format!("⟨Cξ, ξ⟩ = {cxx:e} on a probe")));
        }
    }
    let r = q.a.apply(&measure.mean)? + &q.b;
    let mean_term = mass.inner(&c.apply(&r)?, &r);
    let trace = if n <= DENSE_TRACE_LIMIT {
        let ca = to_dense(c.as_ref())? * to_dense(q.a.as_ref())?;
        (&ca * &ca).trace()
    } else {
        let s = measure
            .sqrt
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("large-dimension variance needs a covariance square root".into()))?;
        let sas = Sandwich { s: s.clone(), a: q.a.clone() };
        let opts = LanczosOptions {
            which: Which::LargestMagnitude,
            ..LanczosOptions::default()
        };
        let sd = lanczos_eigs(&sas, mass, n.min(256), opts)?;
        sd.eigenvalues.iter().map(|l| l * l).sum()
    };
    Ok(mean_term + 0.5 * trace)
}

/// `S* A S`.
struct Sandwich {
    s: Arc<dyn LinearMap>,
    a: Arc<dyn LinearMap>,
}

impl LinearMap for Sandwich {
    fn in_dim(&self) -> usize {
        self.s.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.s.in_dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        self.s.apply_adjoint(&self.a.apply(&self.s.apply(v)?)?)
    }
    fn apply_adjoint(&self, v: &Field) -> Result<Field> {
        self.apply(v)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// Posterior variance of a quadratic goal for data `y`, with the posterior
/// covariance applied matrix-free.
pub fn posterior_goal_variance(problem: &InverseProblem, design: &Design, y: &Field, q: &QuadraticForm) -> Result<f64> {
    quad_variance(&problem.posterior(design, y)?, q)
}

/// Posterior of `design` for data `y` with dense covariance `Q⁻¹M`.
pub fn dense_posterior_measure(dense: &DenseProblem, design: &Design, y: &Field, mass: &Arc<crate::linop::MassMatrix>) -> Result<GaussianMeasure> {
    let post = dense.posterior(design)?;
    let mean = post.map(dense, y)?;
    let cov = DenseOperator::self_adjoint(post.gamma_po.clone(), mass.clone())?;
    GaussianMeasure::new(mean, Arc::new(cov), None, mass.clone())
}

/// [`posterior_goal_variance`] through the dense posterior.
pub fn dense_posterior_goal_variance(
    dense: &DenseProblem,
    design: &Design,
    y: &Field,
    q: &QuadraticForm,
) -> Result<f64> {
    quad_variance(&dense_posterior_measure(dense, design, y, &q.mass)?, q)
}

/// Nested Monte Carlo estimate of the data-averaged posterior variance of the
/// quadratic expansion: draw `m` from the prior, data from the likelihood,
/// and average the closed-form posterior variance. Returns mean and standard error.
pub fn nested_mc_psi(
    problem: &InverseProblem,
    dense: &DenseProblem,
    design: &Design,
    gd: &GoalDerivatives,
    n_outer: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_outer == 0 {
        return Err(Error::InvalidArgument("nested Monte Carlo needs at least one outer sample".into()));
    }
    check_dim(dense.dim(), gd.dim())?;
    let post = dense.posterior(design)?;
    let h: &DMatrix<f64> = gd.dense_hessian()?;
    let po_h = &post.gamma_po * h;
    let trace_term = 0.5 * (&po_h * &po_h).trace();
    let b = &gd.gradient - h * &gd.expansion;
    let sigma = design.noise_variance().sqrt();
    let prior = problem.prior.measure();
    let samples = (0..n_outer)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, i as u64);
            let xi = prior.mass.sample_white(&mut r);
            let m = &prior.mean + &dense.sqrt_prior * xi;
            let y = &dense.f * &m + &dense.offset + rng::standard_normal(&mut r, dense.f.nrows()) * sigma;
            let map = post.map(dense, &y)?;
            let g = h * map + &b;
            Ok(g.dot(&(&dense.mass * (&post.gamma_po * &g))) + trace_term)
        })
        .collect::<Result<Vec<f64>>>()?;
    let t = summarize(&samples);
    Ok((t.value, t.std_error))
}
