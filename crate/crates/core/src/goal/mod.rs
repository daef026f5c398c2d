//! Goal functionals `Z(m)` with gradients and Hessian actions in the
//! M-inner product.

mod quadratic;
mod tracer;

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linop::{Field, LinearMap, MassMatrix};

pub use quadratic::{QuadraticGoal, RestrictionOperator};
pub use tracer::{TracerGoal, TracerHessian};

/// Scalar functional of the parameter with derivative information.
pub trait GoalFunctional: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, m: &Field) -> Result<f64>;

    /// M-Riesz representative of the derivative at `m`.
    fn gradient(&self, m: &Field) -> Result<Field>;

    /// Hessian at `m` as a self-adjoint operator; solves that only depend on
    /// `m` are done once and cached inside the returned operator.
    fn hessian(&self, m: &Field) -> Result<Arc<dyn LinearMap>>;

    fn hess_action(&self, m: &Field, m_hat: &Field) -> Result<Field> {
        self.hessian(m)?.apply(m_hat)
    }
}

/// `Z(m) = ½⟨A m, m⟩_M + ⟨b, m⟩_M + c` with `A` self-adjoint.
#[derive(Clone)]
pub struct QuadraticForm {
    pub a: Arc<dyn LinearMap>,
    pub b: Field,
    pub c: f64,
    pub mass: Arc<MassMatrix>,
}

impl QuadraticForm {
    pub fn new(a: Arc<dyn LinearMap>, b: Field, c: f64, mass: Arc<MassMatrix>) -> Result<Self> {
        if !a.is_self_adjoint() {
            return Err(Error::ContractViolation("quadratic part must be self-adjoint".into()));
        }
        check_dim(mass.dim(), a.in_dim())?;
        check_dim(mass.dim(), b.len())?;
        Ok(Self { a, b, c, mass })
    }

    /// Second-order Taylor expansion of `goal` at `m_bar`:
    /// `A = H̄`, `b = ḡ − H̄ m̄`, `c = Z(m̄) − ⟨ḡ, m̄⟩ + ½⟨H̄ m̄, m̄⟩`.
    pub fn taylor(goal: &dyn GoalFunctional, m_bar: &Field, mass: Arc<MassMatrix>) -> Result<Self> {
        let z = goal.value(m_bar)?;
        let g = goal.gradient(m_bar)?;
        let h = goal.hessian(m_bar)?;
        let hm = h.apply(m_bar)?;
        let c = z - mass.inner(&g, m_bar) + 0.5 * mass.inner(&hm, m_bar);
        Self::new(h, g - hm, c, mass)
    }
}

impl GoalFunctional for QuadraticForm {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn value(&self, m: &Field) -> Result<f64> {
        check_dim(self.dim(), m.len())?;
        let am = self.a.apply(m)?;
        Ok(0.5 * self.mass.inner(&am, m) + self.mass.inner(&self.b, m) + self.c)
    }
    fn gradient(&self, m: &Field) -> Result<Field> {
        Ok(self.a.apply(m)? + &self.b)
    }
    fn hessian(&self, _m: &Field) -> Result<Arc<dyn LinearMap>> {
        Ok(self.a.clone())
    }
}
