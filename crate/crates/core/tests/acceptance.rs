//! Acceptance criteria. Each prints one PASS/FAIL line; the process exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use goed::bip::{DenseProblem, Design};
use goed::criteria::{
    gq_dense_oracle, gq_randomized, gq_spectral, gq_svd, hz_trace_sq, nested_mc_psi, quad_variance, GoalDerivatives,
    SvdPrecompute,
};
use goed::experiment::{run_experiment, ExperimentConfig, Problem, RunArtifact};
use goed::goal::{GoalFunctional, QuadraticForm};
use goed::linop::{CountingMap, DenseOperator, Field, LanczosOptions, LinearMap, MassMatrix, RsvdOptions};
use goed::prior::GaussianMeasure;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn spd(r: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let b = gauss(r, n, n);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.3
}

fn sym(r: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let b = gauss(r, n, n);
    (&b + b.transpose()) * 0.5
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn small_example1(mean: f64) -> (Problem, DenseProblem, GoalDerivatives) {
    let mut cfg = ExperimentConfig::example1().rescaled(8, 3);
    cfg.prior.mean = mean;
    let p = Problem::from_config(&cfg).unwrap();
    let dense = DenseProblem::new(&p.inverse).unwrap();
    let m = p.inverse.prior.mean.clone();
    let gd = GoalDerivatives::new(p.goal.as_ref(), &m, &m, p.mass().clone()).unwrap();
    (p, dense, gd)
}

fn random_design(r: &mut ChaCha20Rng, d: usize, noise: f64) -> Design {
    let w: Vec<bool> = loop {
        let w: Vec<bool> = (0..d).map(|_| r.random_bool(0.5)).collect();
        if w.iter().any(|&b| b) {
            break w;
        }
    };
    Design::new(w, noise).unwrap()
}

fn quadratic_variance_matches_sampling() -> Outcome {
    let start = Instant::now();
    let n = 5;
    let mut r = rng(101);
    let mass = Arc::new(MassMatrix::identity(n));
    let c = spd(&mut r, n);
    let a = sym(&mut r, n);
    let b = gauss(&mut r, n, 1).column(0).into_owned();
    let m0 = gauss(&mut r, n, 1).column(0).into_owned();
    let l = Cholesky::new(c.clone()).unwrap().l();
    let measure = GaussianMeasure::new(
        m0.clone(),
        Arc::new(DenseOperator::self_adjoint(c, mass.clone()).unwrap()),
        Some(Arc::new(DenseOperator::new(l.clone(), mass.clone()).unwrap())),
        mass.clone(),
    )
    .unwrap();
    let q = QuadraticForm::new(Arc::new(DenseOperator::self_adjoint(a.clone(), mass.clone()).unwrap()), b.clone(), 0.0, mass)
        .unwrap();
    let predicted = quad_variance(&measure, &q).unwrap();
    let count = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let shift = 0.5 * m0.dot(&(&a * &m0)) + b.dot(&m0);
    for _ in 0..count {
        let z: DVector<f64> = DVector::from_fn(n, |_, _| r.sample(StandardNormal));
        let s = &m0 + &l * z;
        let v = 0.5 * s.dot(&(&a * &s)) + b.dot(&s) - shift;
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / count as f64;
    let sampled = (sum_sq - count as f64 * mean * mean) / (count - 1) as f64;
    let err = rel(sampled, predicted);
    let t = start.elapsed();
    ensure(
        err < 0.01 && t < Duration::from_secs(10),
        format!("predicted {predicted:.5e}, sampled {sampled:.5e}, rel err {err:.2e} (< 1e-2), {t:.1?} (< 10 s)"),
    )
}

fn nested_monte_carlo_matches_closed_form() -> Outcome {
    let start = Instant::now();
    let (p, dense, gd) = small_example1(4.0);
    let mut r = rng(202);
    let mut zs = Vec::new();
    for i in 0..5 {
        let design = random_design(&mut r, 9, p.noise_variance);
        let oracle = gq_dense_oracle(&dense, &design, &gd).unwrap();
        let (mc, se) = nested_mc_psi(&p.inverse, &dense, &design, &gd, 10_000, 900 + i).unwrap();
        zs.push((mc - oracle).abs() / se);
    }
    let worst = zs.iter().cloned().fold(0.0, f64::max);
    let t = start.elapsed();
    ensure(
        worst < 3.0 && t < Duration::from_secs(120),
        format!("|MC − closed form| / SE = {zs:.2?} (< 3), {t:.1?} (< 120 s)"),
    )
}

fn estimators_agree_and_counts_hold() -> Outcome {
    let (p, dense, base) = small_example1(4.0);
    let counted = Arc::new(CountingMap::new(base.hessian.clone()));
    let gd = GoalDerivatives::from_parts(
        base.expansion.clone(),
        base.prior_mean.clone(),
        base.gradient.clone(),
        counted.clone(),
        p.mass().clone(),
    )
    .unwrap();
    let d = p.inverse.num_candidates();
    let half_trace = 0.5 * hz_trace_sq(&p.inverse.prior, &gd).unwrap();
    let mut problems = Vec::new();
    counted.reset();
    let pre = SvdPrecompute::new(&p.inverse, &gd, d, RsvdOptions::default()).unwrap();
    if counted.applies() != d {
        problems.push(format!("svd precompute used {} H, expected {d}", counted.applies()));
    }
    let mut r = rng(303);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let design = random_design(&mut r, d, p.noise_variance);
        let oracle = gq_dense_oracle(&dense, &design, &gd).unwrap();
        let k = design.count();
        counted.reset();
        let s = gq_spectral(&p.inverse, &design, &gd, k, LanczosOptions::default()).unwrap();
        if counted.applies() != s.rank_or_probes + 1 {
            problems.push(format!("spectral used {} H for k = {}", counted.applies(), s.rank_or_probes));
        }
        counted.reset();
        let v = gq_svd(&pre, &design).unwrap();
        if counted.applies() != 0 {
            problems.push(format!("svd evaluation used {} H", counted.applies()));
        }
        worst = worst.max(rel(s.value + half_trace, oracle)).max(rel(v.value + half_trace, oracle));
    }
    if worst > 1e-7 {
        problems.push(format!("full-rank relative error {worst:.2e}"));
    }
    let design = Design::from_indices(d, &[0, 4, 8], p.noise_variance).unwrap();
    let oracle = gq_dense_oracle(&dense, &design, &gd).unwrap();
    counted.reset();
    let est = gq_randomized(&p.inverse, &design, &gd, 200, 17).unwrap();
    if counted.applies() != 401 {
        problems.push(format!("randomized p = 200 used {} H", counted.applies()));
    }
    let z = (est.value - oracle).abs() / est.std_error.unwrap();
    if z >= 3.0 {
        problems.push(format!("randomized off by {z:.2} SE"));
    }

    let t = Problem::from_config(&ExperimentConfig::example2().rescaled(8, 3)).unwrap();
    let tracer = t.tracer.clone().unwrap();
    let m = t.inverse.prior.mean.clone();
    tracer.reset_count();
    tracer.value(&m).unwrap();
    let value_solves = tracer.solve_count();
    tracer.reset_count();
    tracer.gradient(&m).unwrap();
    let grad_solves = tracer.solve_count();
    let h = tracer.hessian(&m).unwrap();
    tracer.reset_count();
    h.apply(&m).unwrap();
    let hess_solves = tracer.solve_count();
    if (value_solves, grad_solves, hess_solves) != (2, 4, 4) {
        problems.push(format!("tracer solves value/gradient/Hessian = {value_solves}/{grad_solves}/{hess_solves}"));
    }
    let summary = format!(
        "full-rank rel err {worst:.1e} (< 1e-7), randomized {z:.2} SE (< 3), H counts 2p+1 / k+1 / d+0, tracer solves 2/4/4"
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; violations: {}", problems.join("; ")))
    }
}

fn low_rank_and_woodbury_identities() -> Outcome {
    let mut worst_reduced = 0.0f64;
    let mut worst_woodbury = 0.0f64;
    for inst in 0..20 {
        let mut r = rng(400 + inst);
        let (n, k, d) = (6, 3, 4);
        let m = spd(&mut r, n);
        let minv = m.clone().try_inverse().unwrap();
        let e = &minv * spd(&mut r, n);
        let h = &minv * sym(&mut r, n);
        let x = gauss(&mut r, n, k);
        let l = Cholesky::new(x.transpose() * &m * &x).unwrap().l();
        let v = &x * l.transpose().try_inverse().unwrap();
        let gam: Vec<f64> = (0..k).map(|_| r.random::<f64>() * 0.9).collect();
        let b = gauss(&mut r, n, 1).column(0).into_owned();
        let g = DMatrix::from_diagonal(&DVector::from_vec(gam.clone()));
        let prior = &e * &e;
        let post = &prior - &e * &v * &g * v.transpose() * &m * &e;
        let mean = b.dot(&(&m * (&post * &b)));
        let ph = &post * &h;
        let direct = mean + (&prior * &h * &post * &h).trace() - 0.5 * (&ph * &ph).trace();
        let ht = &e * &h * &e;
        let proj = v.transpose() * &m * &ht * &v;
        let pairs: f64 = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| gam[i] * gam[j] * proj[(i, j)].powi(2)).sum();
        let reduced = mean - 0.5 * pairs + 0.5 * (&ht * &ht).trace();
        worst_reduced = worst_reduced.max(rel(reduced, direct));

        let f = gauss(&mut r, d, n);
        let fadj = &minv * f.transpose();
        let lhs = (DMatrix::identity(n, n) + &fadj * &f).try_inverse().unwrap();
        let inner = (DMatrix::identity(d, d) + &f * &fadj).try_inverse().unwrap();
        let rhs = DMatrix::identity(n, n) - &fadj * inner * &f;
        worst_woodbury = worst_woodbury.max((&lhs - &rhs).amax() / lhs.amax());
    }
    ensure(
        worst_reduced < 1e-10 && worst_woodbury < 1e-10,
        format!("eigenpair reduction {worst_reduced:.1e}, Woodbury {worst_woodbury:.1e} (< 1e-10, 20 instances)"),
    )
}

fn tracer_derivatives_match_finite_differences() -> Outcome {
    let p = Problem::from_config(&ExperimentConfig::example2().rescaled(16, 5)).unwrap();
    let goal = p.goal.clone();
    let mass = p.mass().clone();
    let n = p.inverse.dim();
    let mut r = rng(505);
    let m = &p.inverse.prior.mean + gauss(&mut r, n, 1).column(0) * 0.5;
    let grad = goal.gradient(&m).unwrap();
    let mut grad_err = 0.0f64;
    for _ in 0..10 {
        let dir: Field = gauss(&mut r, n, 1).column(0).into_owned();
        let h = 1e-4 * mass.norm(&m) / mass.norm(&dir);
        let fd = (goal.value(&(&m + &dir * h)).unwrap() - goal.value(&(&m - &dir * h)).unwrap()) / (2.0 * h);
        grad_err = grad_err.max(rel(fd, mass.inner(&grad, &dir)));
    }
    let hess = goal.hessian(&m).unwrap();
    let (mut asym, mut hess_err) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let u: Field = gauss(&mut r, n, 1).column(0).into_owned();
        let v: Field = gauss(&mut r, n, 1).column(0).into_owned();
        let hu = hess.apply(&u).unwrap();
        let hv = hess.apply(&v).unwrap();
        asym = asym.max((mass.inner(&hu, &v) - mass.inner(&u, &hv)).abs() / (mass.norm(&hu) * mass.norm(&v)));
        let h = 1e-4 * mass.norm(&m) / mass.norm(&u);
        let fd = (goal.gradient(&(&m + &u * h)).unwrap() - goal.gradient(&(&m - &u * h)).unwrap()) / (2.0 * h);
        hess_err = hess_err.max(mass.norm(&(fd - &hu)) / mass.norm(&hu));
    }
    ensure(
        grad_err < 1e-4 && asym < 1e-8 && hess_err < 1e-3,
        format!("gradient {grad_err:.1e} (< 1e-4), Hessian symmetry {asym:.1e} (< 1e-8), Hessian vs FD {hess_err:.1e} (< 1e-3)"),
    )
}

fn map_is_stationary() -> Outcome {
    let (p, dense, _) = small_example1(4.0);
    let inv = &p.inverse;
    let mass = p.mass();
    let y = inv.synthesize_data(&p.m_true, p.noise_variance, 3, true).unwrap();
    let mut r = rng(606);
    let (mut worst, mut worst_dense) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let design = random_design(&mut r, 9, p.noise_variance);
        let map = inv.compute_map(&design, &y).unwrap();
        let g0 = mass.norm(&inv.objective_gradient(&design, &y, &inv.prior.mean).unwrap());
        worst = worst.max(mass.norm(&inv.objective_gradient(&design, &y, &map).unwrap()) / g0);
        let reference = dense.posterior(&design).unwrap().map(&dense, &y).unwrap();
        worst_dense = worst_dense.max(mass.norm(&(&map - &reference)) / mass.norm(&reference));
    }
    ensure(
        worst <= 1e-7,
        format!("‖∇J(MAP)‖ / ‖∇J(m_pr)‖ = {worst:.1e} (≤ 1e-7); distance to dense MAP {worst_dense:.1e}"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn stat(a: &RunArtifact, method: &str, k: usize, f: impl Fn(&goed::experiment::CellResult) -> Option<f64>) -> Vec<f64> {
    a.cells_for(method, k).filter_map(f).collect()
}

fn goal_oriented_design_shrinks_goal_spread() -> Outcome {
    let mut cfg = ExperimentConfig::example1();
    cfg.sampling.posterior_samples = 200;
    let art = run_experiment(&cfg).unwrap();
    let (mut beats_aopt, mut beats_random) = (0, 0);
    let mut rows = Vec::new();
    for &k in &cfg.design_sizes {
        let gq = stat(&art, "gq", k, |c| c.goal_std)[0];
        let aopt = stat(&art, "aopt", k, |c| c.goal_std)[0];
        let random = stat(&art, "random", k, |c| c.goal_std);
        let rmed = median(random.clone());
        beats_aopt += (gq <= aopt) as usize;
        beats_random += (gq <= rmed) as usize;
        rows.push(format!("k={k}: {gq:.3e}/{aopt:.3e}/{rmed:.3e}"));
        if random.len() != 20 {
            return Err(format!("expected 20 random designs at k = {k}, got {}", random.len()));
        }
    }
    let total = cfg.design_sizes.len();
    ensure(
        beats_aopt as f64 >= 0.8 * total as f64 && beats_random == total,
        format!(
            "goal std gq ≤ aopt for {beats_aopt}/{total} k (≥ 80%), ≤ random median for {beats_random}/{total} (all); gq/aopt/random: {}",
            rows.join(", ")
        ),
    )
}

fn goal_oriented_design_lowers_cv_nonlinear() -> Outcome {
    let cfg = ExperimentConfig::example2();
    let art = run_experiment(&cfg).unwrap();
    let mut ok = 0;
    let mut rows = Vec::new();
    for &k in &cfg.design_sizes {
        let gq = stat(&art, "gq", k, |c| c.cv);
        let gell = stat(&art, "gell", k, |c| c.cv);
        let aopt = stat(&art, "aopt", k, |c| c.cv);
        if gq.len() != 5 || gell.len() != 5 || aopt.len() != 1 {
            return Err(format!("unexpected cell counts at k = {k}: {} {} {}", gq.len(), gell.len(), aopt.len()));
        }
        let (q, l, a) = (median(gq), median(gell), aopt[0]);
        let holds = q <= l && l <= a;
        ok += holds as usize;
        rows.push(format!("k={k}: {q:.4}/{l:.4}/{a:.4}{}", if holds { "" } else { " ✗" }));
    }
    let total = cfg.design_sizes.len();
    ensure(
        ok as f64 >= 0.7 * total as f64,
        format!("median CV gq ≤ gell ≤ aopt for {ok}/{total} k (≥ 70%); {}", rows.join(", ")),
    )
}

fn runs_are_reproducible() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_goed");
    let validate = || Command::new(bin).args(["validate", "--seed", "7"]).output().unwrap();
    let (a, b) = (validate(), validate());
    if !a.status.success() || a.stdout != b.stdout {
        return Err("validate --seed 7 reports differ or failed".into());
    }
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::example1().rescaled(10, 4);
    cfg.design_sizes = vec![2, 3];
    cfg.sampling.posterior_samples = 300;
    cfg.sampling.random_designs = 4;
    let cfg_path = dir.path().join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml().unwrap()).unwrap();
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(bin).arg("run").arg(&cfg_path).arg("--out").arg(&out).output().unwrap().status;
        if !status.success() {
            return Err(format!("run {name} failed"));
        }
        outs.push(out);
    }
    let mut csvs: Vec<_> = std::fs::read_dir(&outs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|f| f.to_string_lossy().ends_with(".csv"))
        .collect();
    csvs.sort();
    for f in &csvs {
        let x = std::fs::read(outs[0].join(f)).unwrap();
        let y = std::fs::read(outs[1].join(f)).map_err(|e| format!("{f:?}: {e}"))?;
        if x != y {
            return Err(format!("{f:?} differs between runs"));
        }
    }
    ensure(
        csvs.len() >= 2,
        format!("validate reports identical ({} bytes); {} CSV files byte-identical", a.stdout.len(), csvs.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("quadratic goal variance vs sampling", quadratic_variance_matches_sampling),
        ("nested Monte Carlo vs closed-form criterion", nested_monte_carlo_matches_closed_form),
        ("estimator consistency and operation counts", estimators_agree_and_counts_hold),
        ("eigenpair reduction and Woodbury identities", low_rank_and_woodbury_identities),
        ("tracer goal derivatives", tracer_derivatives_match_finite_differences),
        ("MAP stationarity", map_is_stationary),
        ("goal std: quadratic goal, greedy designs", goal_oriented_design_shrinks_goal_spread),
        ("goal CV: tracer goal, greedy designs", goal_oriented_design_lowers_cv_nonlinear),
        ("reproducibility", runs_are_reproducible),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} [{tag}] {name} ({:.1?}): {detail}", i + 1, start.elapsed());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
