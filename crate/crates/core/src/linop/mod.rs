//! Operators on the mass-weighted coefficient space.
//!
//! Parameter fields are finite element coefficient vectors in `R^N` with the
//! inner product `⟨u, v⟩_M = uᵀ M v`; observations live in Euclidean `R^d`.
//! Every operator in the crate (forward map, covariances, goal Hessians) is a
//! [`LinearMap`] whose adjoint is taken with respect to those inner products.

mod cg;
mod lanczos;
mod mass;
mod rsvd;
mod trace;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

pub use cg::{pcg, CgOptions, CgOutcome};
pub use lanczos::{lanczos_eigs, LanczosOptions, SpectralDecomposition, Which};
pub use mass::{m_inner, MassMatrix};
pub use rsvd::{randomized_svd, LowRankSvd, RsvdOptions};
pub use trace::{mc_trace, mc_trace_with_stats, probe_vector, TraceEstimate};
pub(crate) use trace::summarize;

/// Coefficient vector of a nodal field or an observation vector.
pub type Field = DVector<f64>;

/// A linear operator with an adjoint.
///
/// Adjointness is with respect to the M-weighted inner product on the
/// parameter side and the Euclidean inner product on the observation side.
pub trait LinearMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &Field) -> Result<Field>;
    fn apply_adjoint(&self, y: &Field) -> Result<Field>;

    /// Whether the map is self-adjoint in the M-inner product.
    fn is_self_adjoint(&self) -> bool {
        false
    }
}

impl<T: LinearMap + ?Sized> LinearMap for Arc<T> {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        (**self).apply_adjoint(y)
    }
    fn is_self_adjoint(&self) -> bool {
        (**self).is_self_adjoint()
    }
}

impl<T: LinearMap + ?Sized> LinearMap for &T {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        (**self).apply(x)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        (**self).apply_adjoint(y)
    }
    fn is_self_adjoint(&self) -> bool {
        (**self).is_self_adjoint()
    }
}

pub(crate) fn require_self_adjoint(t: &dyn LinearMap, what: &str) -> Result<()> {
    if !t.is_self_adjoint() || t.in_dim() != t.out_dim() {
        return Err(Error::ContractViolation(format!(
            "{what} requires a self-adjoint operator"
        )));
    }
    Ok(())
}

/// Matrix of `T` in the coefficient basis: column `j` is `T e_j`.
pub fn to_dense(t: &dyn LinearMap) -> Result<DMatrix<f64>> {
    let n = t.in_dim();
    let mut out = DMatrix::zeros(t.out_dim(), n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        out.set_column(j, &t.apply(&e)?);
    }
    Ok(out)
}

/// Self-adjoint operator on `R^N_M` given by a coefficient matrix `A`.
///
/// The adjoint is `M⁻¹ Aᵀ M`, which equals `A` whenever `M A` is symmetric.
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    mass: Arc<MassMatrix>,
    self_adjoint: bool,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>, mass: Arc<MassMatrix>) -> Result<Self> {
        check_dim(mass.dim(), matrix.nrows())?;
        check_dim(mass.dim(), matrix.ncols())?;
        Ok(Self {
            matrix,
            mass,
            self_adjoint: false,
        })
    }

    /// Marks the operator self-adjoint after checking `M A` is symmetric.
    pub fn self_adjoint(matrix: DMatrix<f64>, mass: Arc<MassMatrix>) -> Result<Self> {
        let mut op = Self::new(matrix, mass)?;
        let ma = op.mass.matrix().to_dense() * &op.matrix;
        let asym = (&ma - ma.transpose()).amax();
        if asym > 1e-8 * ma.amax().max(1e-300) {
            return Err(Error::ContractViolation(format!(
                "M A is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        op.self_adjoint = true;
        Ok(op)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearMap for DenseOperator {
    fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        check_dim(self.in_dim(), x.len())?;
        Ok(&self.matrix * x)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        check_dim(self.out_dim(), y.len())?;
        if self.self_adjoint {
            return Ok(&self.matrix * y);
        }
        let my = self.mass.apply(y);
        Ok(self.mass.solve(&(self.matrix.transpose() * my)))
    }
    fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }
}

/// Map `R^N_M → R^d` given by a `d × N` matrix; its adjoint is `M⁻¹ Gᵀ`.
pub struct DenseObservationMap {
    matrix: DMatrix<f64>,
    mass: Arc<MassMatrix>,
}

impl DenseObservationMap {
    pub fn new(matrix: DMatrix<f64>, mass: Arc<MassMatrix>) -> Result<Self> {
        check_dim(mass.dim(), matrix.ncols())?;
        Ok(Self { matrix, mass })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearMap for DenseObservationMap {
    fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        check_dim(self.in_dim(), x.len())?;
        Ok(&self.matrix * x)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        check_dim(self.out_dim(), y.len())?;
        Ok(self.mass.solve(&self.matrix.tr_mul(y)))
    }
}

/// The zero map on `R^N`.
pub struct ZeroMap(pub usize);

impl LinearMap for ZeroMap {
    fn in_dim(&self) -> usize {
        self.0
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        check_dim(self.0, x.len())?;
        Ok(DVector::zeros(self.0))
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        self.apply(y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// The identity on `R^N`.
pub struct IdentityMap(pub usize);

impl LinearMap for IdentityMap {
    fn in_dim(&self) -> usize {
        self.0
    }
    fn out_dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        check_dim(self.0, x.len())?;
        Ok(x.clone())
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        self.apply(y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

/// `outer ∘ inner` (apply `inner` first).
pub struct Composed<A, B> {
    pub outer: A,
    pub inner: B,
    pub self_adjoint: bool,
}

impl<A: LinearMap, B: LinearMap> LinearMap for Composed<A, B> {
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.outer.out_dim()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        self.outer.apply(&self.inner.apply(x)?)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        self.inner.apply_adjoint(&self.outer.apply_adjoint(y)?)
    }
    fn is_self_adjoint(&self) -> bool {
        self.self_adjoint
    }
}

/// Counts forward and adjoint applications of the wrapped map.
pub struct CountingMap<T> {
    inner: T,
    applies: AtomicUsize,
    adjoint_applies: AtomicUsize,
}

impl<T: LinearMap> CountingMap<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            applies: AtomicUsize::new(0),
            adjoint_applies: AtomicUsize::new(0),
        }
    }

    pub fn applies(&self) -> usize {
        self.applies.load(Ordering::SeqCst)
    }

    pub fn adjoint_applies(&self) -> usize {
        self.adjoint_applies.load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        self.applies() + self.adjoint_applies()
    }

    pub fn reset(&self) {
        self.applies.store(0, Ordering::SeqCst);
        self.adjoint_applies.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: LinearMap> LinearMap for CountingMap<T> {
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        self.applies.fetch_add(1, Ordering::SeqCst);
        self.inner.apply(x)
    }
    fn apply_adjoint(&self, y: &Field) -> Result<Field> {
        self.adjoint_applies.fetch_add(1, Ordering::SeqCst);
        self.inner.apply_adjoint(y)
    }
    fn is_self_adjoint(&self) -> bool {
        self.inner.is_self_adjoint()
    }
}

/// Largest value of `|⟨T u, z⟩_out − ⟨u, T* z⟩_in| / (‖u‖‖z‖)` over `pairs`
/// random pairs. `in_mass`/`out_mass` select M-weighted (Some) or Euclidean
/// (None) inner products.
pub fn adjoint_mismatch(
    t: &dyn LinearMap,
    in_mass: Option<&MassMatrix>,
    out_mass: Option<&MassMatrix>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let ip = |m: Option<&MassMatrix>, a: &Field, b: &Field| match m {
        Some(mass) => mass.inner(a, b),
        None => a.dot(b),
    };
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let mut rng = crate::rng::substream(seed, k as u64);
        let u = crate::rng::standard_normal(&mut rng, t.in_dim());
        let z = crate::rng::standard_normal(&mut rng, t.out_dim());
        let lhs = ip(out_mass, &t.apply(&u)?, &z);
        let rhs = ip(in_mass, &u, &t.apply_adjoint(&z)?);
        let scale = ip(in_mass, &u, &u).sqrt() * ip(out_mass, &z, &z).sqrt();
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    Ok(worst)
}
