use nalgebra::DMatrix;
use rand::Rng;

use super::Field;
use crate::error::{check_dim, Error, Result};
use crate::sparse::{BandedCholesky, SparseMatrix};

/// Finite element mass matrix `M_ij = ∫ φ_i φ_j` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    matrix: SparseMatrix,
    chol: BandedCholesky,
}

impl MassMatrix {
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        let chol = BandedCholesky::factor(&matrix)?;
        let asym = (0..matrix.nrows())
            .flat_map(|i| matrix.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - matrix.get(j, i)).abs())
            .fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mass matrix is not symmetric (asymmetry {asym:.3e})"
            )));
        }
        Ok(Self { matrix, chol })
    }

    /// Euclidean coefficient space (`M = I`).
    pub fn identity(n: usize) -> Self {
        Self::new(SparseMatrix::identity(n)).expect("identity is SPD")
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(SparseMatrix::from_dense(m))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn apply(&self, v: &Field) -> Field {
        self.matrix.mul_vec(v)
    }

    /// `M⁻¹ v`.
    pub fn solve(&self, v: &Field) -> Field {
        self.chol.solve(v)
    }

    pub fn inner(&self, u: &Field, v: &Field) -> f64 {
        u.dot(&self.matrix.mul_vec(v))
    }

    pub fn norm(&self, u: &Field) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// Total of all entries (the domain area for a finite element mass matrix).
    pub fn total(&self) -> f64 {
        (0..self.dim()).flat_map(|i| self.matrix.row(i)).map(|(_, v)| v).sum()
    }

    /// Draw `ξ ~ N(0, M⁻¹)`: `ξ = L⁻ᵀ z` with `M = L Lᵀ`, `z` standard normal.
    pub fn sample_white<R: Rng + ?Sized>(&self, rng: &mut R) -> Field {
        let z = crate::rng::standard_normal(rng, self.dim());
        self.chol.solve_upper(&z)
    }

    /// `Lᵀ x` where `M = L Lᵀ`; `‖Lᵀ x‖₂ = ‖x‖_M`.
    pub fn half_transpose_apply(&self, x: &Field) -> Field {
        self.chol.mul_upper(x)
    }

    /// Maps a standard normal vector to `N(0, M⁻¹)`.
    pub fn whiten(&self, z: &Field) -> Field {
        self.chol.solve_upper(z)
    }
}

/// `uᵀ M v`.
pub fn m_inner(u: &Field, v: &Field, mass: &MassMatrix) -> Result<f64> {
    check_dim(mass.dim(), u.len())?;
    check_dim(mass.dim(), v.len())?;
    Ok(mass.inner(u, v))
}
