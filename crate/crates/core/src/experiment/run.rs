use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, GqEstimator};
use super::problems::Problem;
use crate::bip::{DenseProblem, DensePosterior, Design, InverseProblem};
use crate::criteria::{
    a_opt, cv, gl_crit, gq_randomized, gq_spectral, gq_svd, quad_variance, CriterionEstimate, GoalDerivatives,
    QuadraticForm, SvdPrecompute,
};
use crate::design::{greedy_minimize, random_design, DesignSearchResult};
use crate::error::{Error, Result};
use crate::goal::GoalFunctional;
use crate::linop::{DenseOperator, Field, LanczosOptions, RsvdOptions};
use crate::rng;

/// Criterion driving a greedy search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMethod {
    AOpt,
    GEll,
    Gq,
}

impl DesignMethod {
    pub const ALL: [DesignMethod; 3] = [DesignMethod::AOpt, DesignMethod::GEll, DesignMethod::Gq];

    pub fn name(self) -> &'static str {
        match self {
            DesignMethod::AOpt => "aopt",
            DesignMethod::GEll => "gell",
            DesignMethod::Gq => "gq",
        }
    }
}

impl FromStr for DesignMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aopt" => Ok(DesignMethod::AOpt),
            "gell" => Ok(DesignMethod::GEll),
            "gq" => Ok(DesignMethod::Gq),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?} (aopt, gell, gq)"))),
        }
    }
}

/// Criterion evaluators at one expansion point on a densified problem.
pub struct Evaluators {
    problem: InverseProblem,
    gd: GoalDerivatives,
    svd: Option<SvdPrecompute>,
    estimator: GqEstimator,
    probes: usize,
    seed: u64,
    lanczos_max_iter: Option<usize>,
}

impl Evaluators {
    /// `gd` should already be densified; `problem` likewise.
    pub fn new(problem: InverseProblem, gd: GoalDerivatives, cfg: &ExperimentConfig) -> Result<Self> {
        let c = &cfg.criterion;
        let svd = match c.gq_estimator {
            GqEstimator::Svd => {
                let r = c.rank.unwrap_or(problem.num_candidates()).min(problem.num_candidates()).min(problem.dim());
                let opts = RsvdOptions {
                    seed: c.seed,
                    ..RsvdOptions::default()
                };
                Some(SvdPrecompute::new(&problem, &gd, r, opts)?)
            }
            _ => None,
        };
        Ok(Self {
            problem,
            gd,
            svd,
            estimator: c.gq_estimator,
            probes: c.probes,
            seed: c.seed,
            lanczos_max_iter: c.lanczos_max_iter,
        })
    }

    pub fn derivatives(&self) -> &GoalDerivatives {
        &self.gd
    }

    pub fn evaluate(&self, method: DesignMethod, design: &Design) -> Result<CriterionEstimate> {
        let opts = LanczosOptions {
            seed: self.seed,
            max_iter: self.lanczos_max_iter,
            ..LanczosOptions::default()
        };
        let k = design.count().max(1);
        match method {
            DesignMethod::AOpt => a_opt(&self.problem, design, k, opts),
            DesignMethod::GEll => gl_crit(&self.problem, design, &self.gd, k, opts),
            DesignMethod::Gq => match (self.estimator, &self.svd) {
                (GqEstimator::Svd, Some(pre)) => gq_svd(pre, design),
                (GqEstimator::Randomized, _) => gq_randomized(&self.problem, design, &self.gd, self.probes, self.seed),
                _ => gq_spectral(&self.problem, design, &self.gd, k, opts),
            },
        }
    }

    pub fn greedy(&self, method: DesignMethod, k: usize, noise_variance: f64) -> Result<DesignSearchResult> {
        greedy_minimize(self.problem.num_candidates(), noise_variance, k, |d| {
            Ok(self.evaluate(method, d)?.value)
        })
    }
}

/// Goal derivatives at `m_bar` with the Hessian formed densely.
pub fn dense_derivatives(problem: &Problem, m_bar: &Field) -> Result<GoalDerivatives> {
    let gd = GoalDerivatives::new(problem.goal.as_ref(), m_bar, &problem.inverse.prior.mean, problem.mass().clone())?;
    gd.densified()
}

/// `count` draws from the dense posterior pushed through `goal`; with
/// `spread = false` every draw is the posterior mean.
pub fn sample_posterior_goal(
    goal: &dyn GoalFunctional,
    posterior: &DensePosterior,
    mean: &Field,
    count: usize,
    seed: u64,
    spread: bool,
) -> Result<Vec<f64>> {
    let draws = if spread {
        posterior.sample(mean, count, seed)?
    } else {
        vec![mean.clone(); count]
    };
    draws.par_iter().map(|m| goal.value(m)).collect()
}

/// One (method, k, expansion point) cell of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub method: String,
    pub k: usize,
    /// Expansion-point index, or replica index for random designs.
    pub expansion: usize,
    pub indices: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<CriterionEstimate>,
    #[serde(skip)]
    pub goal_samples: Vec<f64>,
    /// Closed-form posterior standard deviation of a quadratic goal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDiagnostics {
    pub goal_at_prior_mean: f64,
    pub prior_trace: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior_goal_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub files: Vec<String>,
    pub created_unix: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub sampling: u64,
    pub criterion: u64,
    pub expansion: Option<u64>,
}

pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub prior: PriorDiagnostics,
    pub cells: Vec<CellResult>,
}

impl RunArtifact {
    pub fn cells_for<'a>(&'a self, method: &'a str, k: usize) -> impl Iterator<Item = &'a CellResult> + 'a {
        self.cells.iter().filter(move |c| c.method == method && c.k == k)
    }
}

fn cell_seed(cfg: &ExperimentConfig, k: usize) -> u64 {
    rng::mix(cfg.sampling.seed, k as u64)
}

/// Runs every greedy study in `cfg` and evaluates the resulting designs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifact> {
    let problem = Problem::from_config(cfg)?;
    let dp = problem.inverse.densified()?;
    let dense = DenseProblem::new(&dp)?;
    let d = problem.num_candidates();
    let sigma2 = cfg.noise_variance;
    let m_pr = problem.inverse.prior.mean.clone();

    // quadratic goals: Z(m) = ½⟨Am, m⟩ with a constant Hessian
    let quad_form = match &problem.quadratic {
        Some(_) => {
            let gd = dense_derivatives(&problem, &m_pr)?;
            let a = Arc::new(DenseOperator::self_adjoint(gd.dense_hessian()?.clone(), problem.mass().clone())?);
            Some(QuadraticForm::new(a, Field::zeros(problem.inverse.dim()), 0.0, problem.mass().clone())?)
        }
        None => None,
    };
    let prior = PriorDiagnostics {
        goal_at_prior_mean: problem.goal.value(&m_pr)?,
        prior_trace: dense.prior_cov.trace(),
        prior_goal_std: match &quad_form {
            Some(q) => Some(quad_variance(&problem.inverse.prior.measure(), q)?.sqrt()),
            None => None,
        },
    };
    let Some(&k_max) = cfg.design_sizes.iter().max() else {
        return Ok(RunArtifact {
            config: cfg.clone(),
            prior,
            cells: Vec::new(),
        });
    };

    let points = problem.expansion_points(&cfg.expansion)?;
    let evaluators = points
        .iter()
        .map(|m| Evaluators::new(dp.clone(), dense_derivatives(&problem, m)?, cfg))
        .collect::<Result<Vec<_>>>()?;

    // Greedy searches are nested in k, so one run to k_max serves every size.
    let mut searches = Vec::new();
    for method in DesignMethod::ALL {
        let pts = if method == DesignMethod::AOpt { 1 } else { evaluators.len() };
        for (e, ev) in evaluators.iter().enumerate().take(pts) {
            searches.push((method, e, ev.greedy(method, k_max, sigma2)?));
        }
    }

    let mut designs = Vec::new();
    for (method, e, s) in &searches {
        for &k in &cfg.design_sizes {
            let design = Design::from_indices(d, &s.indices[..k], sigma2)?;
            let est = evaluators[*e].evaluate(*method, &design)?;
            designs.push((method.name().to_string(), k, *e, design, s.trace[..k].to_vec(), crate::design::greedy_budget(d, k), Some(est)));
        }
    }
    if quad_form.is_some() {
        for &k in &cfg.design_sizes {
            for i in 0..cfg.sampling.random_designs {
                let seed = rng::mix(cell_seed(cfg, k), 1 + i as u64);
                designs.push(("random".into(), k, i, random_design(d, k, sigma2, seed)?, Vec::new(), 0, None));
            }
        }
    }

    let y = problem.inverse.synthesize_data(&problem.m_true, sigma2, cfg.data_seed, true)?;
    let cells = designs
        .into_par_iter()
        .map(|(method, k, expansion, design, trace, evaluations, estimate)| {
            let post = dense.posterior(&design)?;
            let map = post.map(&dense, &y)?;
            let goal_std = match &quad_form {
                Some(q) => {
                    let cov = DenseOperator::self_adjoint(post.gamma_po.clone(), problem.mass().clone())?;
                    let measure = crate::prior::GaussianMeasure::new(map.clone(), Arc::new(cov), None, problem.mass().clone())?;
                    Some(quad_variance(&measure, q)?.sqrt())
                }
                None => None,
            };
            let goal_samples = if method == "random" {
                Vec::new()
            } else {
                sample_posterior_goal(problem.goal.as_ref(), &post, &map, cfg.sampling.posterior_samples, cell_seed(cfg, k), true)?
            };
            let cv = if goal_samples.is_empty() { None } else { Some(cv(&goal_samples)?) };
            let indices = design.active_indices();
            Ok(CellResult {
                coords: indices.iter().map(|&i| problem.sensors[i]).collect(),
                indices,
                method,
                k,
                expansion,
                trace,
                evaluations,
                estimate,
                goal_samples,
                goal_std,
                cv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunArtifact {
        config: cfg.clone(),
        prior,
        cells,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `designs.json`, `criteria.jsonl`, goal-density CSVs, `summary.csv`
/// and `manifest.json` into `dir`.
pub fn write_artifact(artifact: &RunArtifact, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let cfg = &artifact.config;
    let mut files = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        std::fs::write(dir.join(&name), body)?;
        files.push(name);
        Ok(())
    };

    #[derive(Serialize)]
    struct Designs<'a> {
        prior: &'a PriorDiagnostics,
        cells: &'a [CellResult],
    }
    put(
        "designs.json".into(),
        serde_json::to_string_pretty(&Designs {
            prior: &artifact.prior,
            cells: &artifact.cells,
        })?,
    )?;

    let mut jsonl = String::new();
    for c in &artifact.cells {
        if let Some(e) = &c.estimate {
            #[derive(Serialize)]
            struct Line<'a> {
                design_method: &'a str,
                k: usize,
                expansion: usize,
                #[serde(flatten)]
                estimate: &'a CriterionEstimate,
            }
            let line = Line {
                design_method: &c.method,
                k: c.k,
                expansion: c.expansion,
                estimate: e,
            };
            jsonl.push_str(&serde_json::to_string(&line)?);
            jsonl.push('\n');
        }
    }
    put("criteria.jsonl".into(), jsonl)?;

    let mut keys: Vec<(String, usize)> = artifact
        .cells
        .iter()
        .filter(|c| !c.goal_samples.is_empty())
        .map(|c| (c.method.clone(), c.k))
        .collect();
    keys.sort();
    keys.dedup();
    for (method, k) in keys {
        let mut body = String::from("expansion,sample,value\n");
        for c in artifact.cells_for(&method, k) {
            for (i, v) in c.goal_samples.iter().enumerate() {
                let _ = writeln!(body, "{},{i},{v}", c.expansion);
            }
        }
        put(format!("goal_density_{method}_{k}.csv"), body)?;
    }

    let mut summary = String::from("method,k,expansion,q025,q25,q50,q75,q975,mean,std,cv,goal_std,criterion\n");
    for c in &artifact.cells {
        let (q, mean, std) = if c.goal_samples.is_empty() {
            (vec![String::new(); 5], String::new(), String::new())
        } else {
            let mut s = c.goal_samples.clone();
            s.sort_by(f64::total_cmp);
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (
                [0.025, 0.25, 0.5, 0.75, 0.975].iter().map(|&p| quantile(&s, p).to_string()).collect(),
                mean.to_string(),
                var.sqrt().to_string(),
            )
        };
        let _ = writeln!(
            summary,
            "{},{},{},{},{mean},{std},{},{},{}",
            c.method,
            c.k,
            c.expansion,
            q.join(","),
            opt(c.cv),
            opt(c.goal_std),
            opt(c.estimate.as_ref().map(|e| e.value)),
        );
    }
    put("summary.csv".into(), summary)?;

    let toml = cfg.to_toml()?;
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: hex::encode(Sha256::digest(toml.as_bytes())),
        config: cfg.clone(),
        seeds: Seeds {
            data: cfg.data_seed,
            sampling: cfg.sampling.seed,
            criterion: cfg.criterion.seed,
            expansion: match cfg.expansion {
                super::config::ExpansionPolicy::PriorSamples { seed, .. } => Some(seed),
                _ => None,
            },
        },
        files: {
            let mut f = files.clone();
            f.push("manifest.json".into());
            f
        },
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Greedy design of size `k` for `method` at the first expansion point.
pub fn greedy_from_config(cfg: &ExperimentConfig, method: DesignMethod, k: usize) -> Result<(DesignSearchResult, CriterionEstimate)> {
    let problem = Problem::from_config(cfg)?;
    let dp = problem.inverse.densified()?;
    let m = problem.expansion_points(&cfg.expansion)?.remove(0);
    let ev = Evaluators::new(dp, dense_derivatives(&problem, &m)?, cfg)?;
    let result = ev.greedy(method, k, cfg.noise_variance)?;
    let est = ev.evaluate(method, &result.design)?;
    Ok((result, est))
}
