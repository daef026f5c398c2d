//! Design criteria: the dense reference, the three fast estimators of the
//! quadratic-goal criterion, A-optimality, the linearized-goal criterion,
//! and the variance oracles used to validate them.

mod cv;
mod estimators;
mod variance;

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::goal::GoalFunctional;
use crate::linop::{to_dense, Field, LinearMap, MassMatrix};

pub use crate::goal::QuadraticForm;
pub use cv::cv;
pub use estimators::{
    a_opt, gl_crit, gq_dense_oracle, gq_dense_terms, gq_randomized, gq_spectral, gq_svd, hz_trace_sq,
    spectral_decomposition, GqTerms, SvdPrecompute,
};
pub use variance::{
    dense_posterior_goal_variance, dense_posterior_measure, nested_mc_psi, posterior_goal_variance, quad_variance,
};

/// Above this dimension traces of squared operators are estimated rather
/// than formed densely.
pub const DENSE_TRACE_LIMIT: usize = 512;

/// Gradient and Hessian of a goal at an expansion point `m̄`, plus
/// `b̄ = H̄(m_pr − m̄) + ḡ`.
pub struct GoalDerivatives {
    pub expansion: Field,
    pub prior_mean: Field,
    pub gradient: Field,
    pub hessian: Arc<dyn LinearMap>,
    pub b_bar: Field,
    mass: Arc<MassMatrix>,
    dense_hessian: OnceLock<DMatrix<f64>>,
    trace_sq: OnceLock<f64>,
}

impl GoalDerivatives {
    pub fn new(goal: &dyn GoalFunctional, expansion: &Field, prior_mean: &Field, mass: Arc<MassMatrix>) -> Result<Self> {
        let gradient = goal.gradient(expansion)?;
        let hessian = goal.hessian(expansion)?;
        Self::from_parts(expansion.clone(), prior_mean.clone(), gradient, hessian, mass)
    }

    pub fn from_parts(
        expansion: Field,
        prior_mean: Field,
        gradient: Field,
        hessian: Arc<dyn LinearMap>,
        mass: Arc<MassMatrix>,
    ) -> Result<Self> {
        let n = mass.dim();
        check_dim(n, expansion.len())?;
        check_dim(n, prior_mean.len())?;
        check_dim(n, gradient.len())?;
        check_dim(n, hessian.in_dim())?;
        crate::linop::require_self_adjoint(hessian.as_ref(), "goal Hessian")?;
        let b_bar = hessian.apply(&(&prior_mean - &expansion))? + &gradient;
        Ok(Self {
            expansion,
            prior_mean,
            gradient,
            hessian,
            b_bar,
            mass,
            dense_hessian: OnceLock::new(),
            trace_sq: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn mass(&self) -> &Arc<MassMatrix> {
        &self.mass
    }

    /// `H̄(m_pr − m̄) + ḡ`, recomputed (one Hessian application).
    pub fn compute_b_bar(&self) -> Result<Field> {
        Ok(self.hessian.apply(&(&self.prior_mean - &self.expansion))? + &self.gradient)
    }

    /// Coefficient matrix of `H̄`, symmetrized in the M-inner product; formed
    /// once with `N` Hessian applications.
    pub fn dense_hessian(&self) -> Result<&DMatrix<f64>> {
        if let Some(h) = self.dense_hessian.get() {
            return Ok(h);
        }
        let x = to_dense(self.hessian.as_ref())?;
        let mx = self.mass.matrix().to_dense() * x;
        let sym = 0.5 * (&mx + mx.transpose());
        let mut h = DMatrix::zeros(sym.nrows(), sym.ncols());
        for j in 0..sym.ncols() {
            h.set_column(j, &self.mass.solve(&sym.column(j).into_owned()));
        }
        Ok(self.dense_hessian.get_or_init(|| h))
    }

    /// Same derivatives with the Hessian replaced by its dense matrix, so
    /// later applications need no PDE solves.
    pub fn densified(&self) -> Result<Self> {
        let h = self.dense_hessian()?.clone();
        let op = crate::linop::DenseOperator::self_adjoint(h.clone(), self.mass.clone())?;
        let out = Self::from_parts(
            self.expansion.clone(),
            self.prior_mean.clone(),
            self.gradient.clone(),
            Arc::new(op),
            self.mass.clone(),
        )?;
        let _ = out.dense_hessian.set(h);
        if let Some(&t) = self.trace_sq.get() {
            let _ = out.trace_sq.set(t);
        }
        Ok(out)
    }

    /// Second-order Taylor expansion as a [`QuadraticForm`] (constant term zero).
    pub fn quadratic_form(&self) -> Result<QuadraticForm> {
        let hm = self.hessian.apply(&self.expansion)?;
        QuadraticForm::new(self.hessian.clone(), &self.gradient - hm, 0.0, self.mass.clone())
    }
}

/// Which criterion produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dense,
    Randomized,
    Spectral,
    Svd,
    AOpt,
    GEll,
}

/// A criterion value with the metadata needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionEstimate {
    pub value: f64,
    pub method: Method,
    /// Rank `k`/`r` or probe count `p` actually used.
    pub rank_or_probes: usize,
    pub seed: u64,
    pub design_hash: String,
    /// Monte Carlo standard error, for randomized estimates.
    pub std_error: Option<f64>,
    /// Set when fewer eigenpairs than requested were available.
    pub rank_deficient: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bip::{DenseProblem, Design};
    use crate::experiment::{ExperimentConfig, Problem};
    use crate::linop::{CountingMap, DenseOperator, LanczosOptions, RsvdOptions, ZeroMap};
    use crate::prior::GaussianMeasure;

    type Counted = Arc<CountingMap<Arc<dyn LinearMap>>>;

    fn fixture() -> (Problem, DenseProblem, Counted, GoalDerivatives) {
        let cfg = ExperimentConfig::example1().rescaled(8, 3);
        let p = Problem::from_config(&cfg).unwrap();
        let dense = DenseProblem::new(&p.inverse).unwrap();
        let m_pr = p.inverse.prior.mean.clone();
        let h: Arc<dyn LinearMap> = p.goal.hessian(&m_pr).unwrap();
        let counted = Arc::new(CountingMap::new(h));
        let gd = GoalDerivatives::from_parts(
            m_pr.clone(),
            m_pr.clone(),
            p.goal.gradient(&m_pr).unwrap(),
            counted.clone(),
            p.mass().clone(),
        )
        .unwrap();
        (p, dense, counted, gd)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn quad_variance_closed_forms() {
        let mass = Arc::new(MassMatrix::identity(3));
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let cov = Arc::new(DenseOperator::self_adjoint(c.clone(), mass.clone()).unwrap());
        let m0 = Field::from_vec(vec![1.0, -2.0, 0.5]);
        let b = Field::from_vec(vec![0.3, 0.1, -1.0]);
        let measure = GaussianMeasure::new(m0.clone(), cov, None, mass.clone()).unwrap();
        let q = QuadraticForm::new(Arc::new(ZeroMap(3)), b.clone(), 7.0, mass.clone()).unwrap();
        assert!((quad_variance(&measure, &q).unwrap() - b.dot(&(&c * &b))).abs() < 1e-14);

        let a = DMatrix::from_diagonal(&Field::from_vec(vec![1.0, 2.0, -3.0]));
        let id = GaussianMeasure::new(
            Field::zeros(3),
            Arc::new(DenseOperator::self_adjoint(DMatrix::identity(3, 3), mass.clone()).unwrap()),
            None,
            mass.clone(),
        )
        .unwrap();
        let q = QuadraticForm::new(
            Arc::new(DenseOperator::self_adjoint(a, mass.clone()).unwrap()),
            Field::zeros(3),
            0.0,
            mass.clone(),
        )
        .unwrap();
        assert!((quad_variance(&id, &q).unwrap() - 7.0).abs() < 1e-14);

        let neg = GaussianMeasure::new(
            Field::zeros(3),
            Arc::new(DenseOperator::self_adjoint(-DMatrix::identity(3, 3), mass.clone()).unwrap()),
            None,
            mass,
        )
        .unwrap();
        assert!(matches!(quad_variance(&neg, &q), Err(crate::Error::IndefiniteCovariance(_))));
    }

    #[test]
    fn dense_oracle_collapses() {
        let (p, dense, _, gd) = fixture();
        let d = p.num_candidates();
        let empty = Design::empty(d, p.noise_variance).unwrap();
        let t = gq_dense_terms(&dense, &empty, &gd).unwrap();
        assert!(rel(t.cross_trace, t.square_trace) < 1e-10);
        let b = &gd.b_bar;
        let prior_mean_term = b.dot(&(&dense.mass * (&dense.prior_cov * b)));
        assert!(rel(t.mean_term, prior_mean_term) < 1e-10);

        let zero = GoalDerivatives::from_parts(
            gd.expansion.clone(),
            gd.prior_mean.clone(),
            gd.gradient.clone(),
            Arc::new(ZeroMap(gd.dim())),
            p.mass().clone(),
        )
        .unwrap();
        let full = Design::full(d, p.noise_variance).unwrap();
        let g = &gd.gradient;
        let po = dense.posterior(&full).unwrap().gamma_po;
        let expected = g.dot(&(&dense.mass * (po * g)));
        assert!(rel(gq_dense_oracle(&dense, &full, &zero).unwrap(), expected) < 1e-10);
    }

    #[test]
    fn full_rank_estimators_match_dense() {
        let (p, dense, counted, gd) = fixture();
        let d = p.num_candidates();
        let tz = hz_trace_sq(&p.inverse.prior, &gd).unwrap();
        let pre = SvdPrecompute::new(&p.inverse, &gd, d, RsvdOptions::default()).unwrap();
        for (i, design) in [
            Design::empty(d, p.noise_variance).unwrap(),
            Design::from_indices(d, &[4], p.noise_variance).unwrap(),
            Design::from_indices(d, &[0, 2, 7], p.noise_variance).unwrap(),
            Design::full(d, p.noise_variance).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let oracle = gq_dense_oracle(&dense, design, &gd).unwrap();
            let k = design.count().max(1);
            counted.reset();
            let spec = gq_spectral(&p.inverse, design, &gd, k, LanczosOptions::default()).unwrap();
            assert_eq!(counted.applies(), spec.rank_or_probes + 1, "design {i}");
            assert!(rel(spec.value + 0.5 * tz, oracle) < 1e-8, "spectral design {i}: {} vs {oracle}", spec.value + 0.5 * tz);
            counted.reset();
            let svd = gq_svd(&pre, design).unwrap();
            assert_eq!(counted.applies(), 0);
            assert!(rel(svd.value + 0.5 * tz, oracle) < 1e-8, "svd design {i}");
        }
        assert_eq!(pre.hessian_applications, d);
    }

    #[test]
    fn randomized_estimator() {
        let (p, dense, counted, gd) = fixture();
        let d = p.num_candidates();
        let design = Design::from_indices(d, &[1, 5, 6], p.noise_variance).unwrap();
        let oracle = gq_dense_oracle(&dense, &design, &gd).unwrap();
        counted.reset();
        let est = gq_randomized(&p.inverse, &design, &gd, 200, 3).unwrap();
        assert_eq!(counted.applies(), 401);
        let se = est.std_error.unwrap();
        assert!((est.value - oracle).abs() <= 3.0 * se, "{} vs {oracle} (se {se})", est.value);
        let again = gq_randomized(&p.inverse, &design, &gd, 200, 3).unwrap();
        assert_eq!(again, est);

        let zero = GoalDerivatives::from_parts(
            gd.expansion.clone(),
            gd.prior_mean.clone(),
            gd.gradient.clone(),
            Arc::new(ZeroMap(gd.dim())),
            p.mass().clone(),
        )
        .unwrap();
        let r = gq_randomized(&p.inverse, &design, &zero, 3, 9).unwrap();
        let exact = gq_dense_oracle(&dense, &design, &zero).unwrap();
        assert!(rel(r.value, exact) < 1e-8);
    }

    #[test]
    fn a_opt_and_linearized() {
        let (p, dense, _, gd) = fixture();
        let d = p.num_candidates();
        let opts = LanczosOptions::default();
        let empty = Design::empty(d, p.noise_variance).unwrap();
        assert_eq!(a_opt(&p.inverse, &empty, 3, opts).unwrap().value, 0.0);
        assert_eq!(gl_crit(&p.inverse, &empty, &gd, 3, opts).unwrap().value, 0.0);
        let tr_pr = dense.prior_cov.trace();
        let g = &gd.gradient;
        let g_pr = g.dot(&(&dense.mass * (&dense.prior_cov * g)));
        let mut prev = 0.0;
        for k in 1..=d {
            let design = Design::from_indices(d, &(0..k).collect::<Vec<_>>(), p.noise_variance).unwrap();
            let post = dense.posterior(&design).unwrap();
            let a = a_opt(&p.inverse, &design, k, opts).unwrap().value;
            assert!(rel(tr_pr + a, post.gamma_po.trace()) < 1e-8);
            assert!(a <= prev + 1e-9);
            prev = a;
            let l = gl_crit(&p.inverse, &design, &gd, k, opts).unwrap().value;
            assert!(rel(g_pr + l, g.dot(&(&dense.mass * (&post.gamma_po * g)))) < 1e-8);
        }
    }

    #[test]
    fn data_reduces_goal_variance() {
        let (p, dense, _, _) = fixture();
        let d = p.num_candidates();
        let q = crate::goal::QuadraticForm::taylor(p.goal.as_ref(), &p.m_true, p.mass().clone()).unwrap();
        let y = p.inverse.synthesize_data(&p.m_true, 1e-8, 1, true).unwrap();
        let none = dense_posterior_goal_variance(&dense, &Design::empty(d, 1e-8).unwrap(), &y, &q).unwrap();
        let all = dense_posterior_goal_variance(&dense, &Design::full(d, 1e-8).unwrap(), &y, &q).unwrap();
        assert!(all < none);
        let mf = posterior_goal_variance(&p.inverse, &Design::full(d, 1e-8).unwrap(), &y, &q).unwrap();
        assert!(rel(mf, all) < 1e-6);
    }

    #[test]
    fn estimates_serialize() {
        let e = CriterionEstimate {
            value: 1.5,
            method: Method::AOpt,
            rank_or_probes: 3,
            seed: 0,
            design_hash: "ab".into(),
            std_error: None,
            rank_deficient: false,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"a-opt\""));
        assert_eq!(serde_json::from_str::<CriterionEstimate>(&s).unwrap(), e);
    }
}
