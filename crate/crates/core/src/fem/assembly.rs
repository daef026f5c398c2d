use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{check_dim, Error, Result};
use crate::linop::Field;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Scalar coefficient: constant or piecewise linear (nodal).
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    Nodal(Field),
}

impl Coefficient {
    fn local(&self, el: &[usize; 3]) -> [f64; 3] {
        match self {
            Coefficient::Constant(c) => [*c; 3],
            Coefficient::Nodal(f) => el.map(|v| f[v]),
        }
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        match self {
            Coefficient::Constant(c) if !c.is_finite() => {
                Err(Error::InvalidArgument(format!("coefficient {c} is not finite")))
            }
            Coefficient::Nodal(f) => check_dim(mesh.num_nodes(), f.len()),
            _ => Ok(()),
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Nodal(f) => f.min(),
        }
    }
}

/// Advection velocity: none, constant, or nodal.
#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    Zero,
    Constant([f64; 2]),
    Nodal(Vec<[f64; 2]>),
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.x0 && self.x0 < self.x1 && self.x1 <= 1.0 && 0.0 <= self.y0 && self.y0 < self.y1 && self.y1 <= 1.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "rectangle {self:?} is empty or leaves the unit square"
            )));
        }
        Ok(())
    }
}

/// Union of rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rects: Vec<Rect>,
}

impl Region {
    pub fn new(rects: Vec<Rect>) -> Result<Self> {
        for r in &rects {
            r.validate()?;
        }
        Ok(Self { rects })
    }

    pub fn whole_domain() -> Self {
        Self {
            rects: vec![Rect::new(0.0, 1.0, 0.0, 1.0)],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.rects.iter().any(|r| r.contains(x, y))
    }
}

fn local_mass(area: f64, a: usize, b: usize) -> f64 {
    if a == b {
        area / 6.0
    } else {
        area / 12.0
    }
}

/// `M_ij = ∫ φ_i φ_j`, integrated exactly.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::new(n, n);
    for (e, el) in mesh.elements().iter().enumerate() {
        let area = mesh.geometry(e).area;
        for a in 0..3 {
            for b in 0..3 {
                tb.add(el[a], el[b], local_mass(area, a, b));
            }
        }
    }
    tb.build()
}

/// `K_ij = ∫ κ ∇φ_i·∇φ_j` with κ averaged per element.
pub fn assemble_stiffness(mesh: &Mesh, kappa: &Coefficient) -> Result<SparseMatrix> {
    kappa.check(mesh)?;
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::new(n, n);
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let k = kappa.local(el).iter().sum::<f64>() / 3.0;
        for a in 0..3 {
            for b in 0..3 {
                tb.add(el[a], el[b], k * g.area * g.grad_dot(a, b));
            }
        }
    }
    Ok(tb.build())
}

/// Convective form `C_ij = ∫ (v·∇φ_j) φ_i`.
pub fn assemble_advection(mesh: &Mesh, velocity: &Velocity) -> Result<SparseMatrix> {
    let n = mesh.num_nodes();
    if let Velocity::Nodal(v) = velocity {
        check_dim(n, v.len())?;
    }
    let mut tb = TripletBuilder::new(n, n);
    if *velocity == Velocity::Zero {
        return Ok(tb.build());
    }
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let vl: [[f64; 2]; 3] = match velocity {
            Velocity::Constant(c) => [*c; 3],
            Velocity::Nodal(v) => el.map(|k| v[k]),
            Velocity::Zero => unreachable!(),
        };
        let sum = [vl[0][0] + vl[1][0] + vl[2][0], vl[0][1] + vl[1][1] + vl[2][1]];
        for a in 0..3 {
            // ∫_T v φ_a
            let w = [
                g.area / 12.0 * (sum[0] + vl[a][0]),
                g.area / 12.0 * (sum[1] + vl[a][1]),
            ];
            for b in 0..3 {
                tb.add(el[a], el[b], w[0] * g.grads[b][0] + w[1] * g.grads[b][1]);
            }
        }
    }
    Ok(tb.build())
}

/// `∫_T c κ` for piecewise linear `c` and `κ`.
fn product_integral(area: f64, c: [f64; 3], k: [f64; 3]) -> f64 {
    let cross: f64 = (0..3).map(|a| c[a] * k[a]).sum();
    area / 12.0 * (cross + c.iter().sum::<f64>() * k.iter().sum::<f64>())
}

/// Conservative flux form `C(p)_ij = ∫ φ_j κ ∇p·∇φ_i`, so that
/// `ζᵀ C(p) c = ∫ c κ ∇p·∇ζ`.
pub fn assemble_flux_advection(mesh: &Mesh, kappa: &Coefficient, p: &Field) -> Result<SparseMatrix> {
    kappa.check(mesh)?;
    check_dim(mesh.num_nodes(), p.len())?;
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::new(n, n);
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let k = kappa.local(el);
        let ksum: f64 = k.iter().sum();
        let gp = g.field_gradient(el.map(|v| p[v]));
        for a in 0..3 {
            let flux = gp[0] * g.grads[a][0] + gp[1] * g.grads[a][1];
            for b in 0..3 {
                tb.add(el[a], el[b], flux * g.area / 12.0 * (ksum + k[b]));
            }
        }
    }
    Ok(tb.build())
}

/// Gradient in `p` of the trilinear form `t(c, p, ζ) = ∫ c κ ∇p·∇ζ`:
/// entry `k` is `t(c, φ_k, ζ)`.
pub fn flux_form_gradient(mesh: &Mesh, kappa: &Coefficient, c: &Field, zeta: &Field) -> Result<Field> {
    kappa.check(mesh)?;
    check_dim(mesh.num_nodes(), c.len())?;
    check_dim(mesh.num_nodes(), zeta.len())?;
    let mut out = Field::zeros(mesh.num_nodes());
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let w = product_integral(g.area, el.map(|v| c[v]), kappa.local(el));
        let gz = g.field_gradient(el.map(|v| zeta[v]));
        for a in 0..3 {
            out[el[a]] += w * (gz[0] * g.grads[a][0] + gz[1] * g.grads[a][1]);
        }
    }
    Ok(out)
}

/// `C(p) c` without assembling `C(p)`.
pub fn flux_form_apply(mesh: &Mesh, kappa: &Coefficient, p: &Field, c: &Field) -> Result<Field> {
    kappa.check(mesh)?;
    check_dim(mesh.num_nodes(), p.len())?;
    check_dim(mesh.num_nodes(), c.len())?;
    let mut out = Field::zeros(mesh.num_nodes());
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let w = product_integral(g.area, el.map(|v| c[v]), kappa.local(el));
        let gp = g.field_gradient(el.map(|v| p[v]));
        for a in 0..3 {
            out[el[a]] += w * (gp[0] * g.grads[a][0] + gp[1] * g.grads[a][1]);
        }
    }
    Ok(out)
}

/// `C(p)ᵀ ζ` without assembling `C(p)`.
pub fn flux_form_apply_transpose(mesh: &Mesh, kappa: &Coefficient, p: &Field, zeta: &Field) -> Result<Field> {
    kappa.check(mesh)?;
    check_dim(mesh.num_nodes(), p.len())?;
    check_dim(mesh.num_nodes(), zeta.len())?;
    let mut out = Field::zeros(mesh.num_nodes());
    for (e, el) in mesh.elements().iter().enumerate() {
        let g = mesh.geometry(e);
        let k = kappa.local(el);
        let ksum: f64 = k.iter().sum();
        let gp = g.field_gradient(el.map(|v| p[v]));
        let gz = g.field_gradient(el.map(|v| zeta[v]));
        let flux = gp[0] * gz[0] + gp[1] * gz[1];
        for b in 0..3 {
            out[el[b]] += flux * g.area / 12.0 * (ksum + k[b]);
        }
    }
    Ok(out)
}

/// `∫_{region} φ_i φ_j`, by exact integration on a uniform sub-triangulation
/// of each element with the indicator sampled at sub-triangle centroids.
pub fn assemble_region_mass(mesh: &Mesh, region: &Region, subdivisions: usize) -> SparseMatrix {
    let s = subdivisions.max(1);
    let n = mesh.num_nodes();
    let mut tb = TripletBuilder::new(n, n);
    let sf = s as f64;
    for (e, el) in mesh.elements().iter().enumerate() {
        let area = mesh.geometry(e).area;
        let p = el.map(|v| mesh.nodes()[v]);
        let point = |l: [f64; 3]| {
            [
                l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
                l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
            ]
        };
        let lattice = |i: usize, j: usize| [1.0 - (i + j) as f64 / sf, i as f64 / sf, j as f64 / sf];
        let sub_area = area / (sf * sf);
        let mut local = [[0.0; 3]; 3];
        for i in 0..s {
            for j in 0..s - i {
                let mut tris = vec![[lattice(i, j), lattice(i + 1, j), lattice(i, j + 1)]];
                if i + j + 1 < s {
                    tris.push([lattice(i + 1, j), lattice(i + 1, j + 1), lattice(i, j + 1)]);
                }
                for t in tris {
                    let cen = [
                        (t[0][0] + t[1][0] + t[2][0]) / 3.0,
                        (t[0][1] + t[1][1] + t[2][1]) / 3.0,
                        (t[0][2] + t[1][2] + t[2][2]) / 3.0,
                    ];
                    let x = point(cen);
                    if !region.contains(x[0], x[1]) {
                        continue;
                    }
                    for a in 0..3 {
                        for b in 0..3 {
                            let cross: f64 = (0..3).map(|k| t[k][a] * t[k][b]).sum();
                            let sa: f64 = (0..3).map(|k| t[k][a]).sum();
                            let sb: f64 = (0..3).map(|k| t[k][b]).sum();
                            local[a][b] += sub_area / 12.0 * (cross + sa * sb);
                        }
                    }
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                if local[a][b] != 0.0 {
                    tb.add(el[a], el[b], local[a][b]);
                }
            }
        }
    }
    tb.build()
}
