use rayon::prelude::*;

use super::{require_self_adjoint, Field, LinearMap, MassMatrix};
use crate::error::{check_dim, Error, Result};
use crate::rng;

/// Mean and standard error of a Monte Carlo trace estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEstimate {
    pub value: f64,
    pub std_error: f64,
    pub probes: usize,
}

/// Probe `j` of the stream `seed`: `ξ_j ~ N(0, M⁻¹)`.
pub fn probe_vector(mass: &MassMatrix, seed: u64, j: usize) -> Field {
    let mut r = rng::substream(seed, j as u64);
    mass.sample_white(&mut r)
}

/// `(1/p) Σ_j ⟨T ξ_j, ξ_j⟩_M` with Gaussian probes `ξ_j ~ N(0, M⁻¹)`.
pub fn mc_trace(t: &dyn LinearMap, mass: &MassMatrix, probes: usize, seed: u64) -> Result<f64> {
    Ok(mc_trace_with_stats(t, mass, probes, seed)?.value)
}

pub fn mc_trace_with_stats(
    t: &dyn LinearMap,
    mass: &MassMatrix,
    probes: usize,
    seed: u64,
) -> Result<TraceEstimate> {
    if probes == 0 {
        return Err(Error::InvalidArgument("trace estimator needs p ≥ 1 probes".into()));
    }
    require_self_adjoint(t, "mc_trace")?;
    check_dim(mass.dim(), t.in_dim())?;
    let samples = (0..probes)
        .into_par_iter()
        .map(|j| {
            let xi = probe_vector(mass, seed, j);
            Ok(mass.inner(&t.apply(&xi)?, &xi))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&samples))
}

pub(crate) fn summarize(samples: &[f64]) -> TraceEstimate {
    let p = samples.len();
    let mean = samples.iter().sum::<f64>() / p as f64;
    let std_error = if p > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (p - 1) as f64;
        (var / p as f64).sqrt()
    } else {
        f64::INFINITY
    };
    TraceEstimate {
        value: mean,
        std_error,
        probes: p,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linop::{DenseOperator, IdentityMap, ZeroMap};
    use nalgebra::DMatrix;

    #[test]
    fn zero_map_has_zero_trace() {
        let mass = MassMatrix::identity(6);
        assert_eq!(mc_trace(&ZeroMap(6), &mass, 7, 1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_zero_probes_and_non_self_adjoint() {
        let mass = Arc::new(MassMatrix::identity(3));
        assert!(matches!(
            mc_trace(&IdentityMap(3), &mass, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let op = DenseOperator::new(a, mass.clone()).unwrap();
        assert!(matches!(
            mc_trace(&op, &mass, 5, 1),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mass = MassMatrix::identity(5);
        let a = mc_trace(&IdentityMap(5), &mass, 13, 42).unwrap();
        let b = mc_trace(&IdentityMap(5), &mass, 13, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
