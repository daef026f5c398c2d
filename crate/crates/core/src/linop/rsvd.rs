//! Randomized range finder and SVD for maps `R^N_M → R^d`.

use nalgebra::{DMatrix, SVD};

use super::{Field, LinearMap, MassMatrix};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RsvdOptions {
    pub oversample: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdOptions {
    fn default() -> Self {
        Self {
            oversample: 8,
            power_iters: 2,
            seed: 0,
        }
    }
}

/// `F ≈ U diag(s) V*` with Euclidean-orthonormal `U` and M-orthonormal `V`,
/// so that `F u = Σ s_i U_i ⟨V_i, u⟩_M`.
#[derive(Debug, Clone)]
pub struct LowRankSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
    /// `M V`, cached so that `V* x = (M V)ᵀ x`.
    mv: DMatrix<f64>,
    /// Next singular value of the sketch, when the sketch was wider than `r`.
    pub tail_estimate: Option<f64>,
}

impl LowRankSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Coefficients `⟨V_i, x⟩_M`.
    pub fn project(&self, x: &Field) -> Field {
        self.mv.tr_mul(x)
    }

    /// `M V`.
    pub fn mass_weighted_v(&self) -> &DMatrix<f64> {
        &self.mv
    }
}

impl LinearMap for LowRankSvd {
    fn in_dim(&self) -> usize {
        self.v.nrows()
    }
    fn out_dim(&self) -> usize {
        self.u.nrows()
    }
    fn apply(&self, x: &Field) -> Result<Field> {
        check_dim(self.in_dim(), x.len())?;
        let c = self.project(x).component_mul(&Field::from_column_slice(&self.s));
        Ok(&self.u * c)
    }
    fn apply_adjoint(&self, z: &Field) -> Result<Field> {
        check_dim(self.out_dim(), z.len())?;
        let c = self.u.tr_mul(z).component_mul(&Field::from_column_slice(&self.s));
        Ok(&self.v * c)
    }
}

/// M-orthonormal basis of the columns of `z` (`V = L⁻ᵀ Q` from a QR of `Lᵀ Z`).
fn m_orthonormalize(z: &DMatrix<f64>, mass: &MassMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut x = DMatrix::zeros(z.nrows(), z.ncols());
    for j in 0..z.ncols() {
        x.set_column(j, &mass.half_transpose_apply(&z.column(j).into_owned()));
    }
    let qr = x.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut v = DMatrix::zeros(z.nrows(), q.ncols());
    for j in 0..q.ncols() {
        v.set_column(j, &mass.whiten(&q.column(j).into_owned()));
    }
    (v, r)
}

fn apply_columns(f: &dyn LinearMap, x: &DMatrix<f64>, adjoint: bool) -> Result<DMatrix<f64>> {
    let rows = if adjoint { f.in_dim() } else { f.out_dim() };
    let mut out = DMatrix::zeros(rows, x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let y = if adjoint {
            f.apply_adjoint(&col)?
        } else {
            f.apply(&col)?
        };
        out.set_column(j, &y);
    }
    Ok(out)
}

/// Rank-`r` randomized SVD of `f` with M-weighted right inner product.
pub fn randomized_svd(
    f: &dyn LinearMap,
    mass: &MassMatrix,
    r: usize,
    opts: RsvdOptions,
) -> Result<LowRankSvd> {
    let (d, n) = (f.out_dim(), f.in_dim());
    check_dim(mass.dim(), n)?;
    let max_rank = d.min(n);
    if r == 0 || r > max_rank {
        return Err(Error::InvalidArgument(format!(
            "SVD rank r = {r} must lie in 1..={max_rank}"
        )));
    }
    let l = (r + opts.oversample).min(max_rank);

    let mut omega = DMatrix::zeros(n, l);
    for j in 0..l {
        omega.set_column(j, &super::probe_vector(mass, opts.seed, j));
    }
    let mut q = apply_columns(f, &omega, false)?.qr().q();
    for _ in 0..opts.power_iters {
        let z = apply_columns(f, &q, true)?;
        let (zv, _) = m_orthonormalize(&z, mass);
        q = apply_columns(f, &zv, false)?.qr().q();
    }

    // B u = Qᵀ F u = Gᵀ M u with G = F* Q; factor G = L⁻ᵀ Qx R.
    let g = apply_columns(f, &q, true)?;
    let (vx, rx) = m_orthonormalize(&g, mass);
    let svd = SVD::new(rx.transpose(), true, true);
    let (uh, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut u = DMatrix::zeros(d, r);
    let mut v = DMatrix::zeros(n, r);
    let mut s = Vec::with_capacity(r);
    for (k, &i) in order.iter().take(r).enumerate() {
        s.push(svd.singular_values[i]);
        u.set_column(k, &(&q * uh.column(i)));
        v.set_column(k, &(&vx * vt.row(i).transpose()));
    }
    let tail_estimate = order.get(r).map(|&i| svd.singular_values[i]);
    let mut mv = DMatrix::zeros(n, r);
    for k in 0..r {
        mv.set_column(k, &mass.apply(&v.column(k).into_owned()));
    }
    Ok(LowRankSvd {
        u,
        s,
        v,
        mv,
        tail_estimate,
    })
}
