//! Simulation engine: the data-generating process with oracle potential
//! outcomes, the two error metrics, seeded Monte Carlo orchestration, and a
//! synthetic accelerometer-style fixture for end-to-end pipeline tests.

mod dgp;
mod fixture;
mod mc;

pub use dgp::{dgp_quantile, dgp_sample, metric_bias_median, metric_rmise, observed, true_effect, Scenario, SimSubject};
pub use fixture::{fixture_nhanes_like, Fixture, FixtureConfig, FixtureSubject};
pub use mc::{
    coverage_experiment, replicate_seed, run_mc, run_replicate, Cell, CellSummary, CoverageRate, CoverageSpec,
    MCResult, MeanSe, ModelSpec, ReplicateMetrics, SimConfig,
};
