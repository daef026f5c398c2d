use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;

use super::{CriterionEstimate, GoalDerivatives, Method, DENSE_TRACE_LIMIT};
use crate::bip::{DenseProblem, Design, InverseProblem};
use crate::error::{check_dim, Error, Result};
use crate::linop::{
    lanczos_eigs, mc_trace, probe_vector, randomized_svd, summarize, Field, LanczosOptions, LinearMap, LowRankSvd,
    RsvdOptions, SpectralDecomposition,
};
use crate::prior::{Prior, PriorOperator};

/// The three terms of the dense quadratic-goal criterion:
/// `⟨Γ_po b̄, b̄⟩`, `tr(Γ_pr H Γ_po H)` and `tr((Γ_po H)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GqTerms {
    pub mean_term: f64,
    pub cross_trace: f64,
    pub square_trace: f64,
}

impl GqTerms {
    pub fn value(&self) -> f64 {
        self.mean_term + self.cross_trace - 0.5 * self.square_trace
    }
}

/// Dense evaluation of every term of the criterion.
pub fn gq_dense_terms(dense: &DenseProblem, design: &Design, gd: &GoalDerivatives) -> Result<GqTerms> {
    check_dim(dense.dim(), gd.dim())?;
    let post = dense.posterior(design)?;
    let h = gd.dense_hessian()?;
    let po = &post.gamma_po;
    let b = &gd.b_bar;
    let po_h = po * h;
    Ok(GqTerms {
        mean_term: b.dot(&(&dense.mass * (po * b))),
        cross_trace: (&dense.prior_cov * h * &po_h).trace(),
        square_trace: (&po_h * &po_h).trace(),
    })
}

/// Reference value of the quadratic-goal criterion from dense matrices.
pub fn gq_dense_oracle(dense: &DenseProblem, design: &Design, gd: &GoalDerivatives) -> Result<f64> {
    Ok(gq_dense_terms(dense, design, gd)?.value())
}

struct TildeSquared {
    prior: Arc<PriorOperator>,
    hessian: Arc<dyn LinearMap>,
}

impl TildeSquared {
    fn tilde(&self, v: &Field) -> Result<Field> {
        self.prior.apply_sqrt(&self.hessian.apply(&self.prior.apply_sqrt(v)?)?)
    }
}

impl LinearMap for TildeSquared {
    fn in_dim(&self) -> usize {
        self.prior.dim()
    }
    fn out_dim(&self) -> usize {
        self.prior.dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        self.tilde(&self.tilde(v)?)
    }
    fn apply_adjoint(&self, v: &Field) -> Result<Field> {
        self.apply(v)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `tr(H̃²)` with `H̃ = E H E`: dense up to [`DENSE_TRACE_LIMIT`], otherwise
/// a 200-probe estimate. Cached on `gd`.
pub fn hz_trace_sq(prior: &Prior, gd: &GoalDerivatives) -> Result<f64> {
    if let Some(&t) = gd.trace_sq.get() {
        return Ok(t);
    }
    check_dim(prior.dim(), gd.dim())?;
    let t = if prior.dim() <= DENSE_TRACE_LIMIT {
        let e = prior.op.dense_sqrt();
        let x = &e * gd.dense_hessian()? * &e;
        (&x * &x).trace()
    } else {
        let op = TildeSquared {
            prior: prior.op.clone(),
            hessian: gd.hessian.clone(),
        };
        mc_trace(&op, prior.mass(), 200, 0x7472)?
    };
    Ok(*gd.trace_sq.get_or_init(|| t))
}

/// Randomized estimate: `⟨Γ_po b̄, b̄⟩ + (1/p) Σ ⟨Γ_pr ξ − ½Γ_po ξ, H Γ_po H ξ⟩`.
/// Costs `2p + 1` Hessian applications.
pub fn gq_randomized(
    problem: &InverseProblem,
    design: &Design,
    gd: &GoalDerivatives,
    probes: usize,
    seed: u64,
) -> Result<CriterionEstimate> {
    if probes == 0 {
        return Err(Error::InvalidArgument("randomized estimator needs p ≥ 1 probes".into()));
    }
    check_dim(problem.dim(), gd.dim())?;
    let mass = problem.mass();
    let gamma_po = problem.posterior_covariance(design)?;
    let prior = &problem.prior.op;
    let b = gd.compute_b_bar()?;
    let mean_term = mass.inner(&gamma_po.apply(&b)?, &b);
    let samples = (0..probes)
        .into_par_iter()
        .map(|j| {
            let xi = probe_vector(mass, seed, j);
            let y = gd.hessian.apply(&gamma_po.apply(&gd.hessian.apply(&xi)?)?)?;
            let z = prior.apply_cov(&xi)? - gamma_po.apply(&xi)? * 0.5;
            Ok(mass.inner(&z, &y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let t = summarize(&samples);
    Ok(CriterionEstimate {
        value: mean_term + t.value,
        method: Method::Randomized,
        rank_or_probes: probes,
        seed,
        design_hash: design.hash(),
        std_error: Some(t.std_error),
        rank_deficient: false,
    })
}

/// Leading `k` eigenpairs of `E F* W F E`; empty for the empty design.
pub fn spectral_decomposition(
    problem: &InverseProblem,
    design: &Design,
    k: usize,
    opts: LanczosOptions,
) -> Result<SpectralDecomposition> {
    if design.count() == 0 {
        check_dim(problem.num_candidates(), design.len())?;
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: Vec::new(),
            rank_deficient: false,
            applications: 0,
        });
    }
    let k = k.min(problem.dim());
    lanczos_eigs(&problem.prior_preconditioned_misfit(design)?, problem.mass(), k, opts)
}

/// `γ_i` and `ṽ_i = E v_i`.
fn low_rank_update(problem: &InverseProblem, sd: &SpectralDecomposition) -> Result<(Vec<f64>, Vec<Field>)> {
    let tv = sd
        .eigenvectors
        .iter()
        .map(|v| problem.prior.op.apply_sqrt(v))
        .collect::<Result<Vec<_>>>()?;
    Ok((sd.ratios(), tv))
}

fn spectral_estimate(value: f64, method: Method, design: &Design, sd: &SpectralDecomposition, seed: u64) -> CriterionEstimate {
    CriterionEstimate {
        value,
        method,
        rank_or_probes: sd.len(),
        seed,
        design_hash: design.hash(),
        std_error: None,
        rank_deficient: sd.rank_deficient,
    }
}

/// Design-dependent part of the criterion from `k` eigenpairs of the
/// prior-preconditioned misfit Hessian. Adding `½tr(H̃²)` gives the full value.
/// Costs `k + 1` Hessian applications.
pub fn gq_spectral(
    problem: &InverseProblem,
    design: &Design,
    gd: &GoalDerivatives,
    k: usize,
    opts: LanczosOptions,
) -> Result<CriterionEstimate> {
    check_dim(problem.dim(), gd.dim())?;
    let mass = problem.mass();
    let b = gd.compute_b_bar()?;
    let sd = spectral_decomposition(problem, design, k, opts)?;
    let (gam, tv) = low_rank_update(problem, &sd)?;
    let mut s = problem.prior.op.apply_cov(&b)?;
    for (g, v) in gam.iter().zip(&tv) {
        s.axpy(-g * mass.inner(&b, v), v, 1.0);
    }
    let hv = tv.iter().map(|v| gd.hessian.apply(v)).collect::<Result<Vec<_>>>()?;
    let mut pair_sum = 0.0;
    for (i, q) in hv.iter().enumerate() {
        for (j, v) in tv.iter().enumerate() {
            pair_sum += gam[i] * gam[j] * mass.inner(q, v).powi(2);
        }
    }
    let value = mass.inner(&s, &b) - 0.5 * pair_sum;
    Ok(spectral_estimate(value, Method::Spectral, design, &sd, opts.seed))
}

/// `−tr(E V D V* E)`; adding `tr(Γ_pr)` gives `tr(Γ_po)`.
pub fn a_opt(problem: &InverseProblem, design: &Design, k: usize, opts: LanczosOptions) -> Result<CriterionEstimate> {
    let sd = spectral_decomposition(problem, design, k, opts)?;
    let (gam, tv) = low_rank_update(problem, &sd)?;
    let mass = problem.mass();
    let value = -gam.iter().zip(&tv).map(|(g, v)| g * mass.inner(v, v)).sum::<f64>();
    Ok(spectral_estimate(value, Method::AOpt, design, &sd, opts.seed))
}

/// `−Σ γ_i ⟨ṽ_i, ḡ⟩²`; adding `⟨Γ_pr ḡ, ḡ⟩` gives the variance of the
/// linearized goal.
pub fn gl_crit(
    problem: &InverseProblem,
    design: &Design,
    gd: &GoalDerivatives,
    k: usize,
    opts: LanczosOptions,
) -> Result<CriterionEstimate> {
    check_dim(problem.dim(), gd.dim())?;
    let sd = spectral_decomposition(problem, design, k, opts)?;
    let (gam, tv) = low_rank_update(problem, &sd)?;
    let mass = problem.mass();
    let value = -gam
        .iter()
        .zip(&tv)
        .map(|(g, v)| g * mass.inner(v, &gd.gradient).powi(2))
        .sum::<f64>();
    Ok(spectral_estimate(value, Method::GEll, design, &sd, opts.seed))
}

/// Design-independent data for the SVD-based estimator: a rank-`r` SVD of
/// `F̃ = F E`, `s = E b̄`, `F̃ s`, and `F̃ H̃ F̃*` as a `d × d` matrix.
pub struct SvdPrecompute {
    pub svd: LowRankSvd,
    s_norm_sq: f64,
    fs: Field,
    q_full: DMatrix<f64>,
    seed: u64,
    /// Hessian applications spent.
    pub hessian_applications: usize,
}

impl SvdPrecompute {
    pub fn new(problem: &InverseProblem, gd: &GoalDerivatives, r: usize, opts: RsvdOptions) -> Result<Self> {
        check_dim(problem.dim(), gd.dim())?;
        let mass = problem.mass();
        let op = &problem.prior.op;
        let svd = randomized_svd(&problem.prior_preconditioned_forward(), mass, r, opts)?;
        let tv = (0..svd.rank())
            .map(|j| op.apply_sqrt(&svd.v.column(j).into_owned()))
            .collect::<Result<Vec<_>>>()?;
        let hv = tv.iter().map(|v| gd.hessian.apply(v)).collect::<Result<Vec<_>>>()?;
        let r = svd.rank();
        let mut g = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in 0..r {
                g[(i, j)] = 0.5 * (mass.inner(&tv[i], &hv[j]) + mass.inner(&tv[j], &hv[i]));
            }
        }
        let mut us = svd.u.clone();
        for (j, s) in svd.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        let q_full = &us * g * us.transpose();
        let s = op.apply_sqrt(&gd.b_bar)?;
        let fs = svd.apply(&s)?;
        Ok(Self {
            s_norm_sq: mass.inner(&s, &s),
            fs,
            q_full,
            seed: opts.seed,
            hessian_applications: r,
            svd,
        })
    }

    pub fn rank(&self) -> usize {
        self.svd.rank()
    }

    pub fn num_candidates(&self) -> usize {
        self.svd.u.nrows()
    }
}

/// Design-dependent part of the criterion from a precomputed SVD; no PDE
/// solves or Hessian applications. Adding `½tr(H̃²)` gives the full value.
pub fn gq_svd(pre: &SvdPrecompute, design: &Design) -> Result<CriterionEstimate> {
    check_dim(pre.num_candidates(), design.len())?;
    let active = design.active_indices();
    let ka = active.len();
    let scale = 1.0 / design.noise_variance().sqrt();
    let r = pre.rank();
    // Rows of F̃_w restricted to active sensors: ω U S.
    let mut us = DMatrix::zeros(ka, r);
    for (a, &i) in active.iter().enumerate() {
        for j in 0..r {
            us[(a, j)] = scale * pre.svd.u[(i, j)] * pre.svd.s[j];
        }
    }
    let k = DMatrix::identity(ka, ka) + &us * us.transpose();
    let chol = Cholesky::new(k).ok_or_else(|| Error::SingularSystem {
        context: "I + F̃_w F̃_w*".into(),
        row: 0,
    })?;
    let d = chol.inverse();
    let fws = Field::from_iterator(ka, active.iter().map(|&i| scale * pre.fs[i]));
    let first = pre.s_norm_sq - fws.dot(&(&d * &fws));
    let q = DMatrix::from_fn(ka, ka, |a, b| scale * scale * pre.q_full[(active[a], active[b])]);
    let dq = &d * &q;
    let qd = &q * &d;
    let trace: f64 = (0..ka).map(|i| dq.column(i).dot(&qd.column(i))).sum();
    Ok(CriterionEstimate {
        value: first - 0.5 * trace,
        method: Method::Svd,
        rank_or_probes: r,
        seed: pre.seed,
        design_hash: design.hash(),
        std_error: None,
        rank_deficient: false,
    })
}
