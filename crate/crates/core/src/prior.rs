//! Gaussian prior with covariance `E²`, where `E` inverts the elliptic operator
//! `a₁(I − a₂Δ)` under homogeneous Neumann conditions.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, Coefficient, Mesh};
use crate::linop::{Field, LinearMap, MassMatrix};
use crate::rng;
use crate::sparse::{BandedCholesky, SparseMatrix};

/// The operator `E = (a₁(M + a₂K))⁻¹ M` and its powers.
#[derive(Debug)]
pub struct PriorOperator {
    a1: f64,
    a2: f64,
    mass: Arc<MassMatrix>,
    operator: SparseMatrix,
    chol: BandedCholesky,
}

impl PriorOperator {
    pub fn new(mesh: &Mesh, mass: Arc<MassMatrix>, a1: f64, a2: f64) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0 && a1.is_finite() && a2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior coefficients must be positive, got a1={a1}, a2={a2}"
            )));
        }
        check_dim(mesh.num_nodes(), mass.dim())?;
        let k = assemble_stiffness(mesh, &Coefficient::Constant(1.0))?;
        let operator = assemble_mass(mesh).add_scaled(a2, &k).scaled(a1);
        let chol = BandedCholesky::factor(&operator)?;
        Ok(Self {
            a1,
            a2,
            mass,
            operator,
            chol,
        })
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        &self.mass
    }

    /// Assembled `a₁(M + a₂K)`.
    pub fn operator_matrix(&self) -> &SparseMatrix {
        &self.operator
    }

    /// `E v` (one elliptic solve); this is `C_pr^{1/2}`.
    pub fn apply_sqrt(&self, v: &Field) -> Result<Field> {
        check_dim(self.dim(), v.len())?;
        Ok(self.chol.solve(&self.mass.apply(v)))
    }

    /// `C_pr v = E² v`.
    pub fn apply_cov(&self, v: &Field) -> Result<Field> {
        self.apply_sqrt(&self.apply_sqrt(v)?)
    }

    /// `E⁻¹ v = M⁻¹ a₁(M + a₂K) v`.
    pub fn apply_inv_sqrt(&self, v: &Field) -> Result<Field> {
        check_dim(self.dim(), v.len())?;
        Ok(self.mass.solve(&self.operator.mul_vec(v)))
    }

    /// `C_pr⁻¹ v = E⁻² v`.
    pub fn apply_inv_cov(&self, v: &Field) -> Result<Field> {
        self.apply_inv_sqrt(&self.apply_inv_sqrt(v)?)
    }

    /// Coefficient matrix of `E`.
    pub fn dense_sqrt(&self) -> DMatrix<f64> {
        let m = self.mass.matrix().to_dense();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for j in 0..self.dim() {
            out.set_column(j, &self.chol.solve(&m.column(j).into_owned()));
        }
        out
    }

    /// `E⁻¹ = M⁻¹ A` as a coefficient matrix.
    pub fn dense_inv_sqrt(&self) -> DMatrix<f64> {
        let a = self.operator.to_dense();
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        for j in 0..self.dim() {
            out.set_column(j, &self.mass.solve(&a.column(j).into_owned()));
        }
        out
    }
}

/// `C_pr` as a self-adjoint [`LinearMap`].
pub struct PriorCovariance(pub Arc<PriorOperator>);

/// `C_pr^{1/2} = E` as a self-adjoint [`LinearMap`].
pub struct PriorSqrt(pub Arc<PriorOperator>);

macro_rules! self_adjoint_map {
    ($t:ty, $method:ident) => {
        impl LinearMap for $t {
            fn in_dim(&self) -> usize {
                self.0.dim()
            }
            fn out_dim(&self) -> usize {
                self.0.dim()
            }
            fn apply(&self, x: &Field) -> Result<Field> {
                self.0.$method(x)
            }
            fn apply_adjoint(&self, y: &Field) -> Result<Field> {
                self.0.$method(y)
            }
            fn is_self_adjoint(&self) -> bool {
                true
            }
        }
    };
}

self_adjoint_map!(PriorCovariance, apply_cov);
self_adjoint_map!(PriorSqrt, apply_sqrt);

/// Gaussian measure `N(mean, C)` on `R^N_M`.
#[derive(Clone)]
pub struct GaussianMeasure {
    pub mean: Field,
    pub covariance: Arc<dyn LinearMap>,
    /// Any `S` with `S S* = C`, used for sampling.
    pub sqrt: Option<Arc<dyn LinearMap>>,
    pub mass: Arc<MassMatrix>,
}

impl GaussianMeasure {
    pub fn new(
        mean: Field,
        covariance: Arc<dyn LinearMap>,
        sqrt: Option<Arc<dyn LinearMap>>,
        mass: Arc<MassMatrix>,
    ) -> Result<Self> {
        check_dim(mass.dim(), mean.len())?;
        check_dim(mass.dim(), covariance.in_dim())?;
        if !covariance.is_self_adjoint() {
            return Err(Error::IndefiniteCovariance(
                "covariance is not flagged self-adjoint".into(),
            ));
        }
        Ok(Self {
            mean,
            covariance,
            sqrt,
            mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + S ξ` with `ξ ~ N(0, M⁻¹)`, one substream per sample.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Field>> {
        let sqrt = self
            .sqrt
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("measure has no square root for sampling".into()))?;
        (0..count)
            .map(|i| {
                let mut r = rng::substream(seed, i as u64);
                let xi = self.mass.sample_white(&mut r);
                Ok(&self.mean + sqrt.apply(&xi)?)
            })
            .collect()
    }
}

/// The prior `N(m_pr, E²)`.
pub struct Prior {
    pub op: Arc<PriorOperator>,
    pub mean: Field,
}

impl Prior {
    pub fn new(op: Arc<PriorOperator>, mean: Field) -> Result<Self> {
        check_dim(op.dim(), mean.len())?;
        Ok(Self { op, mean })
    }

    /// Prior with constant mean `value`.
    pub fn with_constant_mean(op: Arc<PriorOperator>, value: f64) -> Self {
        let mean = Field::from_element(op.dim(), value);
        Self { op, mean }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        self.op.mass()
    }

    pub fn covariance(&self) -> PriorCovariance {
        PriorCovariance(self.op.clone())
    }

    pub fn measure(&self) -> GaussianMeasure {
        GaussianMeasure {
            mean: self.mean.clone(),
            covariance: Arc::new(PriorCovariance(self.op.clone())),
            sqrt: Some(Arc::new(PriorSqrt(self.op.clone()))),
            mass: self.op.mass().clone(),
        }
    }

    /// `count` draws `m_pr + E ξ`, deterministic per seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<Field>> {
        self.measure().sample(count, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, a1: f64, a2: f64) -> (Mesh, Arc<PriorOperator>) {
        let mesh = Mesh::new(n).unwrap();
        let mass = Arc::new(MassMatrix::new(assemble_mass(&mesh)).unwrap());
        let op = Arc::new(PriorOperator::new(&mesh, mass, a1, a2).unwrap());
        (mesh, op)
    }

    #[test]
    fn constant_mode() {
        let (mesh, op) = setup(7, 0.8, 1.0 / 16.0);
        let one = Field::from_element(mesh.num_nodes(), 1.0);
        let c = op.apply_cov(&one).unwrap();
        assert!(c.iter().all(|v| (v - 1.5625).abs() < 1e-10));
        let s = op.apply_sqrt(&one).unwrap();
        assert!(s.iter().all(|v| (v - 1.25).abs() < 1e-10));
        assert_eq!(op.apply_cov(&Field::zeros(49)).unwrap().amax(), 0.0);
    }

    #[test]
    fn inverse_and_symmetry() {
        let (_, op) = setup(6, 0.8, 0.04);
        let mut r = rng::substream(3, 0);
        let u = rng::standard_normal(&mut r, 36);
        let v = rng::standard_normal(&mut r, 36);
        let back = op.apply_inv_cov(&op.apply_cov(&u).unwrap()).unwrap();
        assert!((back - &u).amax() < 1e-8 * u.amax());
        let m = op.mass();
        let cu = op.apply_cov(&u).unwrap();
        let cv = op.apply_cov(&v).unwrap();
        assert!((m.inner(&cu, &v) - m.inner(&u, &cv)).abs() < 1e-10);
        assert!(m.inner(&cu, &u) > 0.0);
        assert!(PriorOperator::new(&Mesh::new(3).unwrap(), Arc::new(MassMatrix::identity(9)), -1.0, 1.0).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let (_, op) = setup(5, 0.8, 0.04);
        let prior = Prior::with_constant_mean(op, 4.0);
        assert!(prior.sample(0, 1).unwrap().is_empty());
        let a = prior.sample(3, 9).unwrap();
        let b = prior.sample(3, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
