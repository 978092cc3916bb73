//! Configuration, file formats and end-to-end runs.

pub mod config;
pub mod pipeline;
pub mod tables;

pub use config::{ClinicalSpec, PlatformSpec, ReplicationConfig, RunConfig};
pub use pipeline::{
    describe_run, load_dataset, run_pipeline, run_replicate, run_selection_from_fit, run_simulate, FitSummary,
};
pub use tables::{load_clinical, load_platform};
