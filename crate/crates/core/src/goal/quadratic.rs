use std::sync::Arc;

use super::GoalFunctional;
use crate::error::{check_dim, Result};
use crate::fem::AssembledSystem;
use crate::linop::{Field, LinearMap, MassMatrix};
use crate::sparse::SparseMatrix;

/// `A = S* R* R S`: solve, restrict to the subdomain, solve the adjoint.
///
/// With `S m` the state for load `M m` and `M_Ω` the subdomain mass matrix,
/// `⟨A m, m⟩_M = (S m)ᵀ M_Ω (S m)`.
pub struct RestrictionOperator {
    system: Arc<AssembledSystem>,
    mass: Arc<MassMatrix>,
    region_mass: SparseMatrix,
}

impl RestrictionOperator {
    pub fn new(system: Arc<AssembledSystem>, mass: Arc<MassMatrix>, region_mass: SparseMatrix) -> Result<Self> {
        check_dim(mass.dim(), region_mass.nrows())?;
        check_dim(mass.dim(), system.matrix().nrows())?;
        Ok(Self {
            system,
            mass,
            region_mass,
        })
    }

    /// `S m`.
    pub fn state(&self, m: &Field) -> Result<Field> {
        check_dim(self.mass.dim(), m.len())?;
        self.system.solve_homogeneous(&self.mass.apply(m))
    }
}

impl LinearMap for RestrictionOperator {
    fn in_dim(&self) -> usize {
        self.mass.dim()
    }
    fn out_dim(&self) -> usize {
        self.mass.dim()
    }
    fn apply(&self, m: &Field) -> Result<Field> {
        let u = self.state(m)?;
        self.system.solve_transpose_homogeneous(&self.region_mass.mul_vec(&u))
    }
    fn apply_adjoint(&self, m: &Field) -> Result<Field> {
        self.apply(m)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `Z(m) = ½ ∫_{Ω*} u(m)²` for the linear state `u = S m`.
pub struct QuadraticGoal {
    op: Arc<RestrictionOperator>,
}

impl QuadraticGoal {
    pub fn new(op: RestrictionOperator) -> Self {
        Self { op: Arc::new(op) }
    }

    pub fn operator(&self) -> &Arc<RestrictionOperator> {
        &self.op
    }
}

impl GoalFunctional for QuadraticGoal {
    fn dim(&self) -> usize {
        self.op.in_dim()
    }
    fn value(&self, m: &Field) -> Result<f64> {
        let u = self.op.state(m)?;
        Ok(0.5 * u.dot(&self.op.region_mass.mul_vec(&u)))
    }
    fn gradient(&self, m: &Field) -> Result<Field> {
        self.op.apply(m)
    }
    fn hessian(&self, _m: &Field) -> Result<Arc<dyn LinearMap>> {
        Ok(self.op.clone())
    }
}
