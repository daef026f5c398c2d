use super::Field;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Relative residual tolerance `‖r‖ / ‖b‖`.
    pub rel_tol: f64,
    /// Iteration cap; `None` means `5 N`.
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Field,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Preconditioned conjugate gradients for an operator that is self-adjoint
/// and positive definite in the inner product `inner`.
///
/// `precond` must be self-adjoint positive definite in the same inner product.
pub fn pcg<A, P, I>(apply: A, precond: P, inner: I, b: &Field, opts: CgOptions) -> Result<CgOutcome>
where
    A: Fn(&Field) -> Result<Field>,
    P: Fn(&Field) -> Result<Field>,
    I: Fn(&Field, &Field) -> f64,
{
    let n = b.len();
    let max_iter = opts.max_iter.unwrap_or(5 * n.max(1));
    let bnorm = inner(b, b).max(0.0).sqrt();
    let mut x = Field::zeros(n);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let mut r = b.clone();
    let mut z = precond(&r)?;
    let mut p = z.clone();
    let mut rz = inner(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = inner(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::ContractViolation(format!(
                "CG operator is not positive definite (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        rel = inner(&r, &r).max(0.0).sqrt() / bnorm;
        if rel <= opts.rel_tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }
        z = precond(&r)?;
        let rz_new = inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + beta * &p;
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rel,
    })
}
