//! Bayesian linear inverse problem `y = F m + d + η`, `η ~ N(0, σ² I)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::fem::AssembledSystem;
use crate::linop::{pcg, CgOptions, DenseObservationMap, Field, LinearMap, MassMatrix};
use crate::prior::{GaussianMeasure, Prior};
use crate::rng;
use crate::sparse::SparseMatrix;

/// Largest dimension for which dense operators are materialized.
pub const DENSE_LIMIT: usize = 1500;

/// Binary sensor activation over the candidate grid plus the noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    w: Vec<bool>,
    noise_variance: f64,
}

impl Design {
    pub fn new(w: Vec<bool>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self { w, noise_variance })
    }

    pub fn empty(d: usize, noise_variance: f64) -> Result<Self> {
        Self::new(vec![false; d], noise_variance)
    }

    pub fn full(d: usize, noise_variance: f64) -> Result<Self> {
        Self::new(vec![true; d], noise_variance)
    }

    pub fn from_indices(d: usize, active: &[usize], noise_variance: f64) -> Result<Self> {
        let mut w = vec![false; d];
        for &i in active {
            if i >= d {
                return Err(Error::InvalidArgument(format!("sensor index {i} out of range 0..{d}")));
            }
            w[i] = true;
        }
        Self::new(w, noise_variance)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weights(&self) -> &[bool] {
        &self.w
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.w[i]
    }

    /// `‖w‖₁`.
    pub fn count(&self) -> usize {
        self.w.iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.w.len()).filter(|&i| self.w[i]).collect()
    }

    /// Copy with sensor `i` switched on.
    pub fn with_sensor(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.w[i] = true;
        out
    }

    /// Diagonal of `W_σ = σ⁻² diag(w)`.
    pub fn precision_weights(&self) -> Field {
        Field::from_iterator(
            self.w.len(),
            self.w.iter().map(|&a| if a { 1.0 / self.noise_variance } else { 0.0 }),
        )
    }

    /// Weights as 0/1 integers.
    pub fn to_binary(&self) -> Vec<u8> {
        self.w.iter().map(|&a| a as u8).collect()
    }

    /// Short content hash of the weights and noise variance.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_binary());
        h.update(self.noise_variance.to_le_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

/// PDE-backed parameter-to-observable map `F = B S`, with `S m` the solution
/// for load `M m` under homogeneous Dirichlet data, and the affine offset
/// `d = B S(0)` carrying the boundary data.
pub struct ForwardMap {
    system: Arc<AssembledSystem>,
    observation: SparseMatrix,
    mass: Arc<MassMatrix>,
    offset: Field,
}

impl ForwardMap {
    pub fn new(system: Arc<AssembledSystem>, observation: SparseMatrix, mass: Arc<MassMatrix>) -> Result<Self> {
        check_dim(mass.dim(), observation.ncols())?;
        check_dim(mass.dim(), system.matrix().nrows())?;
        let lift = system.solve(&Field::zeros(mass.dim()))?;
        let offset = observation.mul_vec(&lift);
        Ok(Self {
            system,
            observation,
            mass,
            offset,
        })
    }

    pub fn offset(&self) -> &Field {
        &self.offset
    }

    pub fn observation(&self) -> &SparseMatrix {
        &self.observation
    }

    pub fn system(&self) -> &Arc<AssembledSystem> {
        &self.system
    }

    /// PDE solves performed so far.
    pub fn solve_count(&self) -> usize {
        self.system.solve_count()
    }

    /// Full state `S(m)` including boundary data.
    pub fn state(&self, m: &Field) -> Result<Field> {
        check_dim(self.mass.dim(), m.len())?;
        self.system.solve(&self.mass.apply(m))
    }

    /// Materializes `F` row by row from `d` adjoint solves.
    pub fn to_dense(&self) -> Result<DenseObservationMap> {
        let (d, n) = (self.observation.nrows(), self.mass.dim());
        if n > DENSE_LIMIT {
            return Err(Error::MemoryGuard { dim: n, limit: DENSE_LIMIT });
        }
        let mut f = DMatrix::zeros(d, n);
        for i in 0..d {
            let mut e = Field::zeros(d);
            e[i] = 1.0;
            let row = self.mass.apply(&self.apply_adjoint(&e)?);
            f.set_row(i, &row.transpose());
        }
        DenseObservationMap::new(f, self.mass.clone())
    }
}

impl LinearMap for ForwardMap {
    fn in_dim(&self) -> usize {
        self.mass.dim()
    }
    fn out_dim(&self) -> usize {
        self.observation.nrows()
    }
    fn apply(&self, m: &Field) -> Result<Field> {
        check_dim(self.in_dim(), m.len())?;
        let u = self.system.solve_homogeneous(&self.mass.apply(m))?;
        Ok(self.observation.mul_vec(&u))
    }
    fn apply_adjoint(&self, z: &Field) -> Result<Field> {
        check_dim(self.out_dim(), z.len())?;
        self.system.solve_transpose_homogeneous(&self.observation.tr_mul_vec(z))
    }
}

/// Prior, forward map and affine offset.
#[derive(Clone)]
pub struct InverseProblem {
    pub forward: Arc<dyn LinearMap>,
    pub offset: Field,
    pub prior: Arc<Prior>,
    pub cg: CgOptions,
}

impl InverseProblem {
    pub fn new(forward: Arc<dyn LinearMap>, offset: Field, prior: Arc<Prior>) -> Result<Self> {
        check_dim(prior.dim(), forward.in_dim())?;
        check_dim(forward.out_dim(), offset.len())?;
        Ok(Self {
            forward,
            offset,
            prior,
            cg: CgOptions::default(),
        })
    }

    /// Parameter dimension `N`.
    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Number of candidate sensors `d`.
    pub fn num_candidates(&self) -> usize {
        self.forward.out_dim()
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        self.prior.mass()
    }

    fn check_design(&self, design: &Design) -> Result<()> {
        check_dim(self.num_candidates(), design.len())
    }

    /// `F m`.
    pub fn apply_f(&self, m: &Field) -> Result<Field> {
        self.forward.apply(m)
    }

    /// `F* z`.
    pub fn apply_fadj(&self, z: &Field) -> Result<Field> {
        self.forward.apply_adjoint(z)
    }

    /// `H_mis = F* W_σ F`.
    pub fn misfit_hessian(&self, design: &Design) -> Result<MisfitHessian> {
        self.check_design(design)?;
        Ok(MisfitHessian {
            forward: self.forward.clone(),
            weights: design.precision_weights(),
        })
    }

    /// `H̃_mis = E F* W_σ F E`.
    pub fn prior_preconditioned_misfit(&self, design: &Design) -> Result<PreconditionedMisfit> {
        Ok(PreconditionedMisfit {
            misfit: self.misfit_hessian(design)?,
            prior: self.prior.clone(),
        })
    }

    /// `F̃ = F E`.
    pub fn prior_preconditioned_forward(&self) -> PreconditionedForward {
        PreconditionedForward {
            forward: self.forward.clone(),
            prior: self.prior.clone(),
        }
    }

    /// `Γ_po(w)` applied matrix-free by preconditioned CG.
    pub fn posterior_covariance(&self, design: &Design) -> Result<PosteriorCovariance> {
        Ok(PosteriorCovariance {
            misfit: self.misfit_hessian(design)?,
            prior: self.prior.clone(),
            cg: self.cg,
        })
    }

    /// `Γ_po(w) v`.
    pub fn apply_gamma_po(&self, design: &Design, v: &Field) -> Result<Field> {
        self.posterior_covariance(design)?.apply(v)
    }

    /// MAP point for data `y` (length `d`; inactive entries are ignored).
    pub fn compute_map(&self, design: &Design, y: &Field) -> Result<Field> {
        self.check_design(design)?;
        check_dim(self.num_candidates(), y.len())?;
        let m_pr = &self.prior.mean;
        let w = design.precision_weights();
        let residual = y - &self.offset - self.forward.apply(m_pr)?;
        let rhs = self.forward.apply_adjoint(&residual.component_mul(&w))?;
        let delta = self.posterior_covariance(design)?.solve(&rhs)?;
        Ok(m_pr + delta)
    }

    /// `J(m) = ½‖F m + d − y‖²_W + ½‖m − m_pr‖²_{C_pr⁻¹}`.
    pub fn objective(&self, design: &Design, y: &Field, m: &Field) -> Result<f64> {
        let r = self.forward.apply(m)? + &self.offset - y;
        let misfit = 0.5 * r.component_mul(&r).dot(&design.precision_weights());
        let dm = m - &self.prior.mean;
        let half = self.prior.op.apply_inv_sqrt(&dm)?;
        Ok(misfit + 0.5 * self.mass().inner(&half, &half))
    }

    /// M-Riesz gradient of [`Self::objective`].
    pub fn objective_gradient(&self, design: &Design, y: &Field, m: &Field) -> Result<Field> {
        let r = self.forward.apply(m)? + &self.offset - y;
        let g = self.forward.apply_adjoint(&r.component_mul(&design.precision_weights()))?;
        Ok(g + self.prior.op.apply_inv_cov(&(m - &self.prior.mean))?)
    }

    /// `y = F m_true + d + σ z` on every candidate; `noise = false` gives exact data.
    pub fn synthesize_data(&self, m_true: &Field, noise_variance: f64, seed: u64, noise: bool) -> Result<Field> {
        let mut y = self.forward.apply(m_true)? + &self.offset;
        if noise {
            let mut r = rng::substream(seed, 0);
            y += rng::standard_normal(&mut r, y.len()) * noise_variance.sqrt();
        }
        Ok(y)
    }

    /// Posterior `N(m_MAP, Γ_po)` as a measure (no sampler attached).
    pub fn posterior(&self, design: &Design, y: &Field) -> Result<GaussianMeasure> {
        let map = self.compute_map(design, y)?;
        GaussianMeasure::new(
            map,
            Arc::new(self.posterior_covariance(design)?),
            None,
            self.mass().clone(),
        )
    }

    /// Same problem with `F` replaced by its dense matrix.
    pub fn densified(&self) -> Result<Self> {
        let (d, n) = (self.num_candidates(), self.dim());
        if n > DENSE_LIMIT {
            return Err(Error::MemoryGuard { dim: n, limit: DENSE_LIMIT });
        }
        let mut f = DMatrix::zeros(d, n);
        for i in 0..d {
            let mut e = Field::zeros(d);
            e[i] = 1.0;
            let row = self.mass().apply(&self.forward.apply_adjoint(&e)?);
            f.set_row(i, &row.transpose());
        }
        Ok(Self {
            forward: Arc::new(DenseObservationMap::new(f, self.mass().clone())?),
            offset: self.offset.clone(),
            prior: self.prior.clone(),
            cg: self.cg,
        })
    }
}

/// `F* W_σ F`.
pub struct MisfitHessian {
    forward: Arc<dyn LinearMap>,
    weights: Field,
}

impl LinearMap for MisfitHessian {
    fn in_dim(&self) -> usize {
        self.forward.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.forward.in_dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        if self.weights.iter().all(|&w| w == 0.0) {
            check_dim(self.in_dim(), v.len())?;
            return Ok(Field::zeros(v.len()));
        }
        let fv = self.forward.apply(v)?;
        self.forward.apply_adjoint(&fv.component_mul(&self.weights))
    }
    fn apply_adjoint(&self, v: &Field) -> Result<Field> {
        self.apply(v)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `E F* W_σ F E`.
pub struct PreconditionedMisfit {
    misfit: MisfitHessian,
    prior: Arc<Prior>,
}

impl LinearMap for PreconditionedMisfit {
    fn in_dim(&self) -> usize {
        self.misfit.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.misfit.in_dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        let e = &self.prior.op;
        e.apply_sqrt(&self.misfit.apply(&e.apply_sqrt(v)?)?)
    }
    fn apply_adjoint(&self, v: &Field) -> Result<Field> {
        self.apply(v)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `F̃ = F E`.
pub struct PreconditionedForward {
    forward: Arc<dyn LinearMap>,
    prior: Arc<Prior>,
}

impl LinearMap for PreconditionedForward {
    fn in_dim(&self) -> usize {
        self.forward.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.forward.out_dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        self.forward.apply(&self.prior.op.apply_sqrt(v)?)
    }
    fn apply_adjoint(&self, z: &Field) -> Result<Field> {
        self.prior.op.apply_sqrt(&self.forward.apply_adjoint(z)?)
    }
}

/// `Γ_po = (H_mis + C_pr⁻¹)⁻¹`, applied by CG in the M-inner product with
/// the prior covariance as preconditioner.
pub struct PosteriorCovariance {
    misfit: MisfitHessian,
    prior: Arc<Prior>,
    cg: CgOptions,
}

impl PosteriorCovariance {
    /// Solves `(H_mis + C_pr⁻¹) x = b`.
    pub fn solve(&self, b: &Field) -> Result<Field> {
        check_dim(self.in_dim(), b.len())?;
        let op = &self.prior.op;
        let mass = op.mass();
        if self.misfit.weights.iter().all(|&w| w == 0.0) {
            return op.apply_cov(b);
        }
        let out = pcg(
            |x| Ok(self.misfit.apply(x)? + op.apply_inv_cov(x)?),
            |r| op.apply_cov(r),
            |u, v| mass.inner(u, v),
            b,
            self.cg,
        )?;
        Ok(out.x)
    }
}

impl LinearMap for PosteriorCovariance {
    fn in_dim(&self) -> usize {
        self.misfit.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.misfit.in_dim()
    }
    fn apply(&self, v: &Field) -> Result<Field> {
        self.solve(v)
    }
    fn apply_adjoint(&self, v: &Field) -> Result<Field> {
        self.solve(v)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// Dense coefficient matrices of an inverse problem (`N ≤ DENSE_LIMIT`).
///
/// An operator `T` is stored as the matrix `X` with `T v = X v`.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    pub f: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// `E`.
    pub sqrt_prior: DMatrix<f64>,
    /// `C_pr = E²`.
    pub prior_cov: DMatrix<f64>,
    /// `A M⁻¹ A` with `A = a₁(M + a₂K)`, so that `M C_pr⁻¹ = A M⁻¹ A`.
    pub prior_precision: DMatrix<f64>,
    pub prior_mean: Field,
    pub offset: Field,
}

impl DenseProblem {
    pub fn new(problem: &InverseProblem) -> Result<Self> {
        let n = problem.dim();
        if n > DENSE_LIMIT {
            return Err(Error::MemoryGuard { dim: n, limit: DENSE_LIMIT });
        }
        let d = problem.num_candidates();
        let mass = problem.mass().matrix().to_dense();
        let mut f = DMatrix::zeros(d, n);
        for i in 0..d {
            let mut e = Field::zeros(d);
            e[i] = 1.0;
            let row = &mass * problem.forward.apply_adjoint(&e)?;
            f.set_row(i, &row.transpose());
        }
        let op = &problem.prior.op;
        let sqrt_prior = op.dense_sqrt();
        let prior_cov = &sqrt_prior * &sqrt_prior;
        let prior_precision = op.operator_matrix().to_dense() * op.dense_inv_sqrt();
        let prior_precision = 0.5 * (&prior_precision + prior_precision.transpose());
        Ok(Self {
            f,
            mass,
            sqrt_prior,
            prior_cov,
            prior_precision,
            prior_mean: problem.prior.mean.clone(),
            offset: problem.offset.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Posterior for `design`.
    pub fn posterior(&self, design: &Design) -> Result<DensePosterior> {
        check_dim(self.f.nrows(), design.len())?;
        let w = design.precision_weights();
        let mut wf = self.f.clone();
        for (i, mut row) in wf.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let q = self.f.tr_mul(&wf) + &self.prior_precision;
        let q = 0.5 * (&q + q.transpose());
        let chol = Cholesky::new(q).ok_or_else(|| {
            Error::IndefiniteCovariance("posterior precision is not positive definite".into())
        })?;
        let cov_matrix = chol.inverse();
        let gamma_po = &cov_matrix * &self.mass;
        Ok(DensePosterior {
            weights: w,
            chol,
            cov_matrix,
            gamma_po,
        })
    }
}

/// Dense Gaussian posterior. The coefficient vector has covariance `Q⁻¹`
/// with `Q = Fᵀ W F + A M⁻¹ A`; the covariance operator is `Γ_po = Q⁻¹ M`.
#[derive(Debug, Clone)]
pub struct DensePosterior {
    weights: Field,
    chol: Cholesky<f64, Dyn>,
    pub cov_matrix: DMatrix<f64>,
    pub gamma_po: DMatrix<f64>,
}

impl DensePosterior {
    /// MAP point by a dense solve.
    pub fn map(&self, dense: &DenseProblem, y: &Field) -> Result<Field> {
        check_dim(dense.f.nrows(), y.len())?;
        let r = y - &dense.offset - &dense.f * &dense.prior_mean;
        let rhs = dense.f.tr_mul(&r.component_mul(&self.weights));
        Ok(&dense.prior_mean + self.chol.solve(&rhs))
    }

    /// `count` draws `mean + L⁻ᵀ z` (`Q = L Lᵀ`), one substream per draw.
    pub fn sample(&self, mean: &Field, count: usize, seed: u64) -> Result<Vec<Field>> {
        check_dim(self.cov_matrix.nrows(), mean.len())?;
        let lt = self.chol.l().transpose();
        (0..count)
            .map(|i| {
                let mut r = rng::substream(seed, i as u64);
                let z = rng::standard_normal(&mut r, mean.len());
                let x = lt
                    .solve_upper_triangular(&z)
                    .ok_or_else(|| Error::IndefiniteCovariance("singular posterior factor".into()))?;
                Ok(mean + x)
            })
            .collect()
    }
}
