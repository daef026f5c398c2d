//! Configured studies: problem assembly, design runs and the validation suite.

mod config;
mod problems;
mod run;
mod validate;

pub use config::{
    Bump, ChannelSpec, CriterionConfig, ExpansionPolicy, ExperimentConfig, FieldSpec, GqEstimator, PriorConfig,
    ProblemSpec, SamplingConfig,
};
pub use problems::Problem;
pub use run::{
    dense_derivatives, greedy_from_config, run_experiment, sample_posterior_goal, write_artifact, CellResult,
    DesignMethod, Evaluators, Manifest, PriorDiagnostics, RunArtifact, Seeds,
};
pub use validate::{run_validation_suite, CheckResult, ValidationReport};
