use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::GoalFunctional;
use crate::error::{check_dim, Result};
use crate::fem::{
    assemble_flux_advection, assemble_mass, assemble_region_mass, assemble_stiffness, flux_form_apply,
    flux_form_apply_transpose, flux_form_gradient, AssembledSystem, BoundarySpec, Coefficient, EllipticOperator,
    Mesh, Region,
};
use crate::linop::{Field, LinearMap, MassMatrix};
use crate::sparse::SparseMatrix;

/// Tracer mass in a subdomain, `Z(m) = ∫_{Ω*} c`, where the pressure solves
/// `−∇·(κ∇p) = m` and the concentration solves
/// `−αΔc − ∇·(c κ∇p) = f`.
pub struct TracerGoal {
    shared: Arc<Shared>,
}

struct Shared {
    mesh: Mesh,
    mass: Arc<MassMatrix>,
    kappa: Coefficient,
    pressure: AssembledSystem,
    diffusion: SparseMatrix,
    transport_bcs: BoundarySpec,
    source_load: Field,
    indicator_load: Field,
    solves: AtomicUsize,
}

/// States and adjoints at one parameter.
struct TracerState {
    c: Field,
    zeta: Field,
    transport: AssembledSystem,
}

impl Shared {
    fn count(&self) {
        self.solves.fetch_add(1, Ordering::SeqCst);
    }

    fn pressure(&self, m: &Field) -> Result<Field> {
        check_dim(self.mass.dim(), m.len())?;
        self.count();
        self.pressure.solve(&self.mass.apply(m))
    }

    fn transport(&self, p: &Field) -> Result<AssembledSystem> {
        let t = self.diffusion.add_scaled(1.0, &assemble_flux_advection(&self.mesh, &self.kappa, p)?);
        AssembledSystem::new(&self.mesh, t, &self.transport_bcs)
    }

    fn forward(&self, m: &Field) -> Result<(Field, Field, AssembledSystem)> {
        let p = self.pressure(m)?;
        let transport = self.transport(&p)?;
        self.count();
        let c = transport.solve(&self.source_load)?;
        Ok((p, c, transport))
    }

    fn state(&self, m: &Field) -> Result<TracerState> {
        let (_, c, transport) = self.forward(m)?;
        self.count();
        let zeta = transport.solve_transpose_homogeneous(&(-&self.indicator_load))?;
        Ok(TracerState { c, zeta, transport })
    }

    /// `−λ` with `K_p λ = −g`, `g_k = ∫ c κ ∇φ_k·∇ζ`.
    fn gradient_from(&self, c: &Field, zeta: &Field) -> Result<Field> {
        let g = flux_form_gradient(&self.mesh, &self.kappa, c, zeta)?;
        self.count();
        let lambda = self.pressure.solve_transpose_homogeneous(&(-g))?;
        Ok(-lambda)
    }
}

impl TracerGoal {
    /// `pressure_bcs` and `transport_bcs` hold the Dirichlet data of the two
    /// equations; `f` is the nodal tracer source.
    pub fn new(
        mesh: Mesh,
        kappa: Coefficient,
        alpha: f64,
        f: &Field,
        region: &Region,
        pressure_bcs: &BoundarySpec,
        transport_bcs: &BoundarySpec,
    ) -> Result<Self> {
        let m = assemble_mass(&mesh);
        let mass = Arc::new(MassMatrix::new(m.clone())?);
        check_dim(mesh.num_nodes(), f.len())?;
        let pressure = AssembledSystem::new(&mesh, EllipticOperator::diffusion(kappa.clone()).assemble(&mesh)?, pressure_bcs)?;
        let diffusion = assemble_stiffness(&mesh, &Coefficient::Constant(alpha))?;
        let ones = Field::from_element(mesh.num_nodes(), 1.0);
        let indicator_load = assemble_region_mass(&mesh, region, 8).mul_vec(&ones);
        Ok(Self {
            shared: Arc::new(Shared {
                mass,
                kappa,
                pressure,
                diffusion,
                transport_bcs: transport_bcs.clone(),
                source_load: m.mul_vec(f),
                indicator_load,
                solves: AtomicUsize::new(0),
                mesh,
            }),
        })
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        &self.shared.mass
    }

    pub fn mesh(&self) -> &Mesh {
        &self.shared.mesh
    }

    /// PDE solves performed since construction or the last reset.
    pub fn solve_count(&self) -> usize {
        self.shared.solves.load(Ordering::SeqCst)
    }

    pub fn reset_count(&self) {
        self.shared.solves.store(0, Ordering::SeqCst);
    }

    /// Pressure and concentration at `m`.
    pub fn states(&self, m: &Field) -> Result<(Field, Field)> {
        let (p, c, _) = self.shared.forward(m)?;
        Ok((p, c))
    }

    /// Gradient and Hessian at `m` from one set of state and adjoint solves.
    pub fn derivatives(&self, m: &Field) -> Result<(Field, TracerHessian)> {
        let st = self.shared.state(m)?;
        let g = self.shared.gradient_from(&st.c, &st.zeta)?;
        Ok((
            g,
            TracerHessian {
                shared: self.shared.clone(),
                state: st,
            },
        ))
    }
}

impl GoalFunctional for TracerGoal {
    fn dim(&self) -> usize {
        self.shared.mass.dim()
    }

    fn value(&self, m: &Field) -> Result<f64> {
        let (_, c, _) = self.shared.forward(m)?;
        Ok(self.shared.indicator_load.dot(&c))
    }

    fn gradient(&self, m: &Field) -> Result<Field> {
        let st = self.shared.state(m)?;
        self.shared.gradient_from(&st.c, &st.zeta)
    }

    /// Caches the state and the tracer adjoint (three solves); each
    /// application then costs four incremental solves.
    fn hessian(&self, m: &Field) -> Result<Arc<dyn LinearMap>> {
        let state = self.shared.state(m)?;
        Ok(Arc::new(TracerHessian {
            shared: self.shared.clone(),
            state,
        }))
    }
}

/// Hessian of the tracer goal at a fixed parameter.
pub struct TracerHessian {
    shared: Arc<Shared>,
    state: TracerState,
}

impl LinearMap for TracerHessian {
    fn in_dim(&self) -> usize {
        self.shared.mass.dim()
    }
    fn out_dim(&self) -> usize {
        self.shared.mass.dim()
    }
    fn apply(&self, m_hat: &Field) -> Result<Field> {
        let sh = &self.shared;
        let st = &self.state;
        check_dim(sh.mass.dim(), m_hat.len())?;
        // incremental state
        sh.count();
        let p_hat = sh.pressure.solve_homogeneous(&sh.mass.apply(m_hat))?;
        sh.count();
        let c_hat = st
            .transport
            .solve_homogeneous(&(-flux_form_apply(&sh.mesh, &sh.kappa, &p_hat, &st.c)?))?;
        // incremental adjoint
        sh.count();
        let zeta_hat = st
            .transport
            .solve_transpose_homogeneous(&(-flux_form_apply_transpose(&sh.mesh, &sh.kappa, &p_hat, &st.zeta)?))?;
        let g_hat = flux_form_gradient(&sh.mesh, &sh.kappa, &c_hat, &st.zeta)?
            + flux_form_gradient(&sh.mesh, &sh.kappa, &st.c, &zeta_hat)?;
        sh.count();
        let lambda_hat = sh.pressure.solve_transpose_homogeneous(&(-g_hat))?;
        Ok(-lambda_hat)
    }
    fn apply_adjoint(&self, m_hat: &Field) -> Result<Field> {
        self.apply(m_hat)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{Edge, Rect};
    use crate::rng;

    fn goal(n: usize, f_amp: f64) -> TracerGoal {
        let mesh = Mesh::new(n).unwrap();
        let kappa = Coefficient::Nodal(mesh.interpolate(|_, y| 0.1 + 0.9 * (-((y - 0.5) / 0.15).powi(2)).exp()));
        let f = mesh.interpolate(|x, y| f_amp * (-((x - 0.3).powi(2) + (y - 0.5).powi(2)) / 0.01).exp());
        let region = Region::new(vec![Rect::new(0.18, 0.32, 0.46, 0.68), Rect::new(0.54, 0.75, 0.39, 0.75)]).unwrap();
        let pbc = BoundarySpec::neumann()
            .with_dirichlet(&[Edge::Left], 0.5)
            .with_dirichlet(&[Edge::Right], 0.0);
        let cbc = BoundarySpec::neumann().with_dirichlet(&[Edge::Top, Edge::Bottom, Edge::Right], 0.0);
        TracerGoal::new(mesh, kappa, 0.12, &f, &region, &pbc, &cbc).unwrap()
    }

    #[test]
    fn zero_source_gives_zero_goal() {
        let g = goal(8, 0.0);
        let m = Field::from_element(64, 4.0);
        assert_eq!(g.value(&m).unwrap(), 0.0);
        assert_eq!(g.gradient(&m).unwrap().amax(), 0.0);
    }

    #[test]
    fn solve_counts() {
        let g = goal(8, 1.0);
        let m = Field::from_element(64, 4.0);
        g.reset_count();
        g.value(&m).unwrap();
        assert_eq!(g.solve_count(), 2);
        g.reset_count();
        g.gradient(&m).unwrap();
        assert_eq!(g.solve_count(), 4);
        let (_, h) = g.derivatives(&m).unwrap();
        g.reset_count();
        h.apply(&Field::from_element(64, 1.0)).unwrap();
        assert_eq!(g.solve_count(), 4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = goal(10, 1.0);
        let mass = g.mass().clone();
        let mut r = rng::substream(11, 0);
        let m = Field::from_element(100, 4.0) + rng::standard_normal(&mut r, 100);
        let grad = g.gradient(&m).unwrap();
        let dir = rng::standard_normal(&mut r, 100);
        let h = 1e-4 * mass.norm(&m) / mass.norm(&dir);
        let fd = (g.value(&(&m + &dir * h)).unwrap() - g.value(&(&m - &dir * h)).unwrap()) / (2.0 * h);
        let an = mass.inner(&grad, &dir);
        assert!((fd - an).abs() < 1e-5 * an.abs(), "{fd} vs {an}");
    }
}
