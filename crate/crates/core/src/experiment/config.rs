use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Rect, Region};

/// Isotropic Gaussian bump `a · exp(−|x − c|² / w²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }
}

/// `base + Σ bumps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    #[serde(default)]
    pub base: f64,
    #[serde(default)]
    pub bumps: Vec<Bump>,
}

impl FieldSpec {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.base + self.bumps.iter().map(|b| b.eval(x, y)).sum::<f64>()
    }
}

/// Horizontal channel `low + (high − low) · exp(−((y − center)/width)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub low: f64,
    pub high: f64,
    pub center: f64,
    pub width: f64,
}

impl ChannelSpec {
    pub fn eval(&self, y: f64) -> f64 {
        self.low + (self.high - self.low) * (-((y - self.center) / self.width).powi(2)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a1: f64,
    pub a2: f64,
    pub mean: f64,
}

/// Problem-specific physics and goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec {
    /// Advection–diffusion source inversion with a quadratic goal on `region`.
    Example1 {
        alpha: f64,
        velocity: [f64; 2],
        region: Vec<Rect>,
    },
    /// Darcy source inversion with the tracer-mass goal on `region`.
    Example2 {
        alpha: f64,
        kappa: ChannelSpec,
        source: Bump,
        pressure_left: f64,
        region: Vec<Rect>,
    },
}

/// Fast estimator used for the quadratic-goal criterion during greedy search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GqEstimator {
    Svd,
    Spectral,
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub gq_estimator: GqEstimator,
    /// SVD rank; `None` means full rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub probes: usize,
    pub seed: u64,
    /// Krylov dimension cap for Lanczos; `None` allows the full space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanczos_max_iter: Option<usize>,
}

/// Where goal derivatives are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ExpansionPolicy {
    PriorMean,
    /// The prior mean followed by `count` prior samples.
    PriorSamples { count: usize, seed: u64 },
}

impl ExpansionPolicy {
    pub fn num_points(&self) -> usize {
        match self {
            ExpansionPolicy::PriorMean => 1,
            ExpansionPolicy::PriorSamples { count, .. } => 1 + count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Posterior draws pushed through the goal per (method, k) cell.
    pub posterior_samples: usize,
    pub random_designs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Mesh nodes per side.
    pub n: usize,
    /// Candidate sensors per side.
    pub sensors: usize,
    pub noise_variance: f64,
    pub design_sizes: Vec<usize>,
    /// Seed of the synthetic observation noise.
    pub data_seed: u64,
    pub prior: PriorConfig,
    pub problem: ProblemSpec,
    pub criterion: CriterionConfig,
    pub expansion: ExpansionPolicy,
    pub m_true: FieldSpec,
    pub sampling: SamplingConfig,
}

impl ExperimentConfig {
    /// Advection–diffusion study at desk scale.
    pub fn example1() -> Self {
        Self {
            n: 16,
            sensors: 7,
            noise_variance: 1e-4,
            design_sizes: (3..=10).collect(),
            data_seed: 1,
            prior: PriorConfig {
                a1: 0.8,
                a2: 1.0 / 16.0,
                mean: 4.0,
            },
            problem: ProblemSpec::Example1 {
                alpha: 0.1,
                velocity: [0.1, -0.1],
                region: vec![Rect::new(0.55, 0.8, 0.2, 0.45), Rect::new(0.2, 0.4, 0.55, 0.75)],
            },
            criterion: CriterionConfig {
                gq_estimator: GqEstimator::Svd,
                rank: None,
                probes: 50,
                seed: 11,
                lanczos_max_iter: None,
            },
            expansion: ExpansionPolicy::PriorMean,
            m_true: FieldSpec {
                base: 0.0,
                bumps: vec![
                    Bump {
                        center: [0.3, 0.3],
                        width: 0.2,
                        amplitude: 8.0,
                    },
                    Bump {
                        center: [0.7, 0.7],
                        width: 0.2,
                        amplitude: 6.0,
                    },
                ],
            },
            sampling: SamplingConfig {
                posterior_samples: 10_000,
                random_designs: 20,
                seed: 5,
            },
        }
    }

    /// Darcy tracer study at desk scale.
    pub fn example2() -> Self {
        Self {
            sensors: 13,
            noise_variance: 1e-5,
            prior: PriorConfig {
                a1: 0.8,
                a2: 0.04,
                mean: 4.0,
            },
            problem: ProblemSpec::Example2 {
                alpha: 0.12,
                kappa: ChannelSpec {
                    low: 0.1,
                    high: 1.0,
                    center: 0.5,
                    width: 0.15,
                },
                source: Bump {
                    center: [0.3, 0.5],
                    width: 0.1,
                    amplitude: 1.0,
                },
                pressure_left: 0.5,
                region: vec![Rect::new(0.18, 0.32, 0.46, 0.68), Rect::new(0.54, 0.75, 0.39, 0.75)],
            },
            expansion: ExpansionPolicy::PriorSamples { count: 4, seed: 3 },
            m_true: FieldSpec {
                base: 4.0,
                bumps: vec![
                    Bump {
                        center: [0.3, 0.3],
                        width: 0.2,
                        amplitude: 2.0,
                    },
                    Bump {
                        center: [0.7, 0.7],
                        width: 0.2,
                        amplitude: -2.0,
                    },
                ],
            },
            sampling: SamplingConfig {
                posterior_samples: 2_000,
                random_designs: 0,
                seed: 5,
            },
            ..Self::example1()
        }
    }

    /// Same study on an `n`-node mesh with `sensors × sensors` candidates;
    /// design sizes beyond the new candidate count are dropped.
    pub fn rescaled(mut self, n: usize, sensors: usize) -> Self {
        self.n = n;
        self.sensors = sensors;
        self.design_sizes.retain(|&k| k <= sensors * sensors);
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn region(&self) -> Result<Region> {
        match &self.problem {
            ProblemSpec::Example1 { region, .. } | ProblemSpec::Example2 { region, .. } => Region::new(region.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("noise_variance", self.noise_variance),
            ("prior.a1", self.prior.a1),
            ("prior.a2", self.prior.a2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 2 || self.sensors == 0 {
            return Err(Error::Config("n ≥ 2 and sensors ≥ 1 required".into()));
        }
        let d = self.sensors * self.sensors;
        if let Some(&k) = self.design_sizes.iter().find(|&&k| k == 0 || k > d) {
            return Err(Error::Config(format!("design size {k} outside 1..={d}")));
        }
        if self.sampling.posterior_samples == 0 || self.criterion.probes == 0 {
            return Err(Error::Config("posterior_samples and probes must be positive".into()));
        }
        if let Some(r) = self.criterion.rank {
            if r == 0 || r > d {
                return Err(Error::Config(format!("rank {r} outside 1..={d}")));
            }
        }
        match &self.problem {
            ProblemSpec::Example1 { alpha, .. } if *alpha <= 0.0 => {
                return Err(Error::Config("alpha must be positive".into()))
            }
            ProblemSpec::Example2 { alpha, kappa, .. } if *alpha <= 0.0 || kappa.low <= 0.0 || kappa.high <= 0.0 => {
                return Err(Error::Config("alpha and permeability must be positive".into()))
            }
            _ => {}
        }
        self.region().map(|_| ()).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for cfg in [ExperimentConfig::example1(), ExperimentConfig::example2()] {
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::example1();
        cfg.noise_variance = -1.0;
        assert!(matches!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::example1();
        cfg.problem = ProblemSpec::Example1 {
            alpha: 0.1,
            velocity: [0.0; 2],
            region: vec![Rect::new(0.5, 1.2, 0.0, 1.0)],
        };
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::example1();
        cfg.design_sizes = vec![50];
        assert!(cfg.validate().is_err());
    }
}
