//! Search over binary sensor designs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bip::Design;
use crate::error::{Error, Result};
use crate::rng;

/// Largest number of subsets [`exhaustive_minimize`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSearchResult {
    pub design: Design,
    /// Criterion value after each step.
    pub trace: Vec<f64>,
    /// Sensor activated at each step.
    pub indices: Vec<usize>,
    #[serde(skip)]
    pub step_seconds: Vec<f64>,
    pub evaluations: usize,
}

/// Criterion evaluations spent by a greedy search of size `k` over `d` candidates.
pub fn greedy_budget(d: usize, k: usize) -> usize {
    (0..k).map(|i| d - i).sum()
}

/// Forward greedy selection: starting from the empty design, repeatedly
/// activate the sensor that minimizes `criterion`, breaking ties by the
/// lowest index.
pub fn greedy_minimize<F>(d: usize, noise_variance: f64, k: usize, criterion: F) -> Result<DesignSearchResult>
where
    F: Fn(&Design) -> Result<f64> + Sync,
{
    if k > d {
        return Err(Error::InvalidArgument(format!("design size {k} exceeds {d} candidates")));
    }
    let mut design = Design::empty(d, noise_variance)?;
    let evaluations = AtomicUsize::new(0);
    let mut trace = Vec::with_capacity(k);
    let mut indices = Vec::with_capacity(k);
    let mut step_seconds = Vec::with_capacity(k);
    for _ in 0..k {
        let start = Instant::now();
        let candidates: Vec<usize> = (0..d).filter(|&i| !design.is_active(i)).collect();
        let scored = candidates
            .par_iter()
            .map(|&i| {
                evaluations.fetch_add(1, Ordering::Relaxed);
                criterion(&design.with_sensor(i)).map(|v| (v, i))
            })
            .collect::<Result<Vec<_>>>();
        let scored = match scored {
            Ok(s) => s,
            Err(e) => {
                return Err(Error::SearchAborted {
                    completed: indices.len(),
                    trace,
                    indices,
                    source: Box::new(e),
                })
            }
        };
        let (value, best) = scored
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("at least one candidate remains");
        design = design.with_sensor(best);
        trace.push(value);
        indices.push(best);
        step_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(DesignSearchResult {
        design,
        trace,
        indices,
        step_seconds,
        evaluations: evaluations.into_inner(),
    })
}

/// Uniformly random `k`-subset of `d` candidates.
pub fn random_design(d: usize, k: usize, noise_variance: f64, seed: u64) -> Result<Design> {
    if k > d {
        return Err(Error::InvalidArgument(format!("design size {k} exceeds {d} candidates")));
    }
    let mut r = rng::substream(seed, 0);
    let mut active = index::sample(&mut r, d, k).into_vec();
    active.sort_unstable();
    Design::from_indices(d, &active, noise_variance)
}

/// `C(d, k)`, saturating.
pub fn binomial(d: usize, k: usize) -> u128 {
    let k = k.min(d - k.min(d));
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((d - i) as u128) / (i as u128 + 1))
}

/// True minimizer over all `k`-subsets (lexicographically first on ties).
pub fn exhaustive_minimize<F>(d: usize, noise_variance: f64, k: usize, criterion: F) -> Result<(Design, f64)>
where
    F: Fn(&Design) -> Result<f64>,
{
    if k > d {
        return Err(Error::InvalidArgument(format!("design size {k} exceeds {d} candidates")));
    }
    let count = binomial(d, k);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::CombinatorialGuard(count));
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best: Option<(Design, f64)> = None;
    loop {
        let design = Design::from_indices(d, &idx, noise_variance)?;
        let v = criterion(&design)?;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((design, v));
        }
        // next combination
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < d - k + i) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(best.expect("at least one subset"))
}
