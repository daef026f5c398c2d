use std::sync::Arc;

use super::config::{ExpansionPolicy, ExperimentConfig, ProblemSpec};
use crate::bip::{ForwardMap, InverseProblem};
use crate::error::Result;
use crate::fem::{
    assemble_mass, assemble_region_mass, observation_matrix, sensor_grid, AssembledSystem, BoundarySpec, Coefficient,
    Edge, EllipticOperator, Mesh, Velocity,
};
use crate::goal::{GoalFunctional, QuadraticGoal, RestrictionOperator, TracerGoal};
use crate::linop::{Field, MassMatrix};
use crate::prior::{Prior, PriorOperator};

/// A fully assembled study: inverse problem, goal and truth.
pub struct Problem {
    pub mesh: Mesh,
    pub sensors: Vec<[f64; 2]>,
    pub inverse: InverseProblem,
    pub forward: Arc<ForwardMap>,
    pub goal: Arc<dyn GoalFunctional>,
    /// Set for the quadratic goal, whose Hessian is constant.
    pub quadratic: Option<Arc<QuadraticGoal>>,
    pub tracer: Option<Arc<TracerGoal>>,
    pub noise_variance: f64,
    pub m_true: Field,
}

impl Problem {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = Mesh::new(cfg.n)?;
        let mass = Arc::new(MassMatrix::new(assemble_mass(&mesh))?);
        let sensors = sensor_grid(cfg.sensors);
        let b = observation_matrix(&mesh, &sensors)?;
        let prior_op = Arc::new(PriorOperator::new(&mesh, mass.clone(), cfg.prior.a1, cfg.prior.a2)?);
        let prior = Arc::new(Prior::with_constant_mean(prior_op, cfg.prior.mean));
        let region = cfg.region()?;
        let m_true = mesh.interpolate(|x, y| cfg.m_true.eval(x, y));

        let (forward, goal, quadratic, tracer): (Arc<ForwardMap>, Arc<dyn GoalFunctional>, _, _) = match &cfg.problem {
            ProblemSpec::Example1 { alpha, velocity, .. } => {
                let op = EllipticOperator {
                    diffusion: Coefficient::Constant(*alpha),
                    velocity: Velocity::Constant(*velocity),
                    reaction: 0.0,
                };
                let bcs = BoundarySpec::neumann().with_dirichlet(&[Edge::Left, Edge::Top], 0.0);
                let sys = Arc::new(AssembledSystem::new(&mesh, op.assemble(&mesh)?, &bcs)?);
                let forward = Arc::new(ForwardMap::new(sys.clone(), b, mass.clone())?);
                let restriction = RestrictionOperator::new(sys, mass.clone(), assemble_region_mass(&mesh, &region, 8))?;
                let goal = Arc::new(QuadraticGoal::new(restriction));
                (forward, goal.clone(), Some(goal), None)
            }
            ProblemSpec::Example2 {
                alpha,
                kappa,
                source,
                pressure_left,
                ..
            } => {
                let kappa = Coefficient::Nodal(mesh.interpolate(|_, y| kappa.eval(y)));
                let pbc = BoundarySpec::neumann()
                    .with_dirichlet(&[Edge::Left], *pressure_left)
                    .with_dirichlet(&[Edge::Right], 0.0);
                let cbc = BoundarySpec::neumann().with_dirichlet(&[Edge::Top, Edge::Bottom, Edge::Right], 0.0);
                let sys = Arc::new(AssembledSystem::new(
                    &mesh,
                    EllipticOperator::diffusion(kappa.clone()).assemble(&mesh)?,
                    &pbc,
                )?);
                let forward = Arc::new(ForwardMap::new(sys, b, mass.clone())?);
                let f = mesh.interpolate(|x, y| source.eval(x, y));
                let goal = Arc::new(TracerGoal::new(mesh.clone(), kappa, *alpha, &f, &region, &pbc, &cbc)?);
                (forward, goal.clone() as Arc<dyn GoalFunctional>, None, Some(goal))
            }
        };
        let inverse = InverseProblem::new(forward.clone(), forward.offset().clone(), prior)?;
        Ok(Self {
            mesh,
            sensors,
            inverse,
            forward,
            goal,
            quadratic,
            tracer,
            noise_variance: cfg.noise_variance,
            m_true,
        })
    }

    pub fn num_candidates(&self) -> usize {
        self.sensors.len()
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        self.inverse.mass()
    }

    /// Expansion points: the prior mean, then prior samples.
    pub fn expansion_points(&self, policy: &ExpansionPolicy) -> Result<Vec<Field>> {
        let prior = &self.inverse.prior;
        let mut out = vec![prior.mean.clone()];
        if let ExpansionPolicy::PriorSamples { count, seed } = policy {
            out.extend(prior.sample(*count, *seed)?);
        }
        Ok(out)
    }
}
