//! Symmetric Lanczos in the M-inner product with full reorthogonalization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{require_self_adjoint, Field, LinearMap, MassMatrix};
use crate::error::{check_dim, Error, Result};

/// Which end of the spectrum to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    /// Algebraically largest eigenvalues.
    Largest,
    /// Eigenvalues of largest magnitude (indefinite operators).
    LargestMagnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance relative to `max(|λ₁|, 1)`.
    pub tol: f64,
    /// Krylov dimension cap; `None` allows the full space.
    pub max_iter: Option<usize>,
    pub seed: u64,
    pub which: Which,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            seed: 0,
            which: Which::Largest,
        }
    }
}

/// Leading eigenpairs `T v_i = λ_i v_i` with M-orthonormal `v_i`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Field>,
    /// Set when the Krylov space became invariant before `k` pairs were found.
    pub rank_deficient: bool,
    /// Operator applications spent.
    pub applications: usize,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `γ_i = λ_i / (1 + λ_i)`, with tiny negative round-off clamped to zero.
    pub fn ratios(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let l = l.max(0.0);
                l / (1.0 + l)
            })
            .collect()
    }
}

/// Computes `k` leading eigenpairs of a self-adjoint operator on `R^N_M`.
pub fn lanczos_eigs(
    t: &dyn LinearMap,
    mass: &MassMatrix,
    k: usize,
    opts: LanczosOptions,
) -> Result<SpectralDecomposition> {
    require_self_adjoint(t, "lanczos_eigs")?;
    let n = t.in_dim();
    check_dim(mass.dim(), n)?;
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "Lanczos rank k = {k} must lie in 1..={n}"
        )));
    }
    let max_iter = opts.max_iter.unwrap_or(n).clamp(k, n);

    let mut q = super::probe_vector(mass, opts.seed, 0);
    let nrm = mass.norm(&q);
    q /= nrm;
    let mut basis: Vec<Field> = Vec::with_capacity(max_iter);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut betas: Vec<f64> = Vec::with_capacity(max_iter);
    let mut applications = 0;
    let mut scale = 0.0f64;

    loop {
        let mut w = t.apply(&q)?;
        applications += 1;
        let a = mass.inner(&w, &q);
        w.axpy(-a, &q, 1.0);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            w.axpy(-b, prev, 1.0);
        }
        basis.push(q.clone());
        alphas.push(a);
        for _ in 0..2 {
            for v in &basis {
                let c = mass.inner(&w, v);
                w.axpy(-c, v, 1.0);
            }
        }
        let b = mass.norm(&w);
        scale = scale.max(a.abs()).max(b);
        let m = basis.len();
        let breakdown = b <= 1e-11 * scale.max(f64::MIN_POSITIVE);

        if m >= k || breakdown || m == max_iter {
            let (theta, s) = tridiagonal_eigen(&alphas, &betas);
            let order = select(&theta, opts.which);
            let take = order.len().min(k);
            let lead = theta[order[0]].abs().max(1.0);
            let converged = order[..take]
                .iter()
                .all(|&i| (b * s[(m - 1, i)]).abs() <= opts.tol * lead);
            if (converged && take == k) || breakdown || m == max_iter {
                if !breakdown && !converged && m < n {
                    return Err(Error::ContractViolation(format!(
                        "Lanczos did not converge within {max_iter} iterations"
                    )));
                }
                let mut eigenvalues = Vec::with_capacity(take);
                let mut eigenvectors = Vec::with_capacity(take);
                for &i in &order[..take] {
                    eigenvalues.push(theta[i]);
                    let mut v = Field::zeros(n);
                    for (j, qj) in basis.iter().enumerate() {
                        v.axpy(s[(j, i)], qj, 1.0);
                    }
                    eigenvectors.push(v);
                }
                return Ok(SpectralDecomposition {
                    eigenvalues,
                    eigenvectors,
                    rank_deficient: take < k,
                    applications,
                });
            }
        }
        betas.push(b);
        q = w / b;
    }
}

fn tridiagonal_eigen(alphas: &[f64], betas: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let m = alphas.len();
    let mut tri = DMatrix::zeros(m, m);
    for i in 0..m {
        tri[(i, i)] = alphas[i];
        if i + 1 < m {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(tri);
    (eig.eigenvalues, eig.eigenvectors)
}

fn select(theta: &DVector<f64>, which: Which) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    match which {
        Which::Largest => idx.sort_by(|&a, &b| theta[b].total_cmp(&theta[a])),
        Which::LargestMagnitude => idx.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs())),
    }
    idx
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linop::DenseOperator;

    #[test]
    fn diagonal_operator_leading_pairs() {
        let mass = Arc::new(MassMatrix::identity(4));
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0]));
        let op = DenseOperator::self_adjoint(a, mass.clone()).unwrap();
        let sd = lanczos_eigs(&op, &mass, 2, LanczosOptions::default()).unwrap();
        assert!((sd.eigenvalues[0] - 4.0).abs() < 1e-10);
        assert!((sd.eigenvalues[1] - 3.0).abs() < 1e-10);
        assert!((sd.eigenvectors[0][0].abs() - 1.0).abs() < 1e-8);
        assert!((sd.eigenvectors[1][1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rank_one_operator_breaks_down() {
        let mass = Arc::new(MassMatrix::identity(6));
        let u = DVector::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0]);
        let op = DenseOperator::self_adjoint(&u * u.transpose(), mass.clone()).unwrap();
        let sd = lanczos_eigs(&op, &mass, 3, LanczosOptions::default()).unwrap();
        assert!((sd.eigenvalues[0] - u.norm_squared()).abs() < 1e-10);
        assert!(sd.eigenvalues[1..].iter().all(|l| l.abs() <= 1e-8));
        assert!(sd.rank_deficient);
        assert!(sd.len() < 3);
    }

    #[test]
    fn rejects_bad_rank() {
        let mass = Arc::new(MassMatrix::identity(3));
        let op = crate::linop::IdentityMap(3);
        assert!(lanczos_eigs(&op, &mass, 0, LanczosOptions::default()).is_err());
        assert!(lanczos_eigs(&op, &mass, 4, LanczosOptions::default()).is_err());
    }
}
