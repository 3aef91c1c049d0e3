//! Dataset ingestion, result persistence and the command implementations
//! behind the `distcausal` binary.

mod cli;
mod dataset;
mod document;
mod format;

pub use cli::{
    cmd_counterfactual, cmd_estimate, cmd_fixture, cmd_simulate, parse_reference, run, run_estimate, Cli, Command,
    CounterfactualArgs, EstimateArgs, FixtureArgs, SimulateArgs,
};
pub use dataset::{
    flat_csv_path, parse_dataset, read_reference_curve, Dataset, DatasetOptions, InputFormat, Provenance,
};
pub use document::{ResultDocument, Seeds, TestDecisions, SCHEMA_VERSION};
pub use format::{format_f64, to_json_string, write_atomic};
