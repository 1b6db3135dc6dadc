//! Benchmarks for dynamic algorithm configuration: episodic environments over
//! instance sets, baseline policies, a parallel experiment runner, step logs and
//! difficulty analysis.

pub mod analysis;
pub mod config;
pub mod env;
pub mod envs;
pub mod error;
pub mod instance;
pub mod logging;
pub mod policy;
pub mod runner;
pub mod seed;
pub mod space;

pub use config::{BenchmarkConfig, BenchmarkId};
pub use env::{Environment, ReferenceKind, StepResult};
pub use error::{Error, Result};
pub use policy::PolicySpec;
pub use runner::{run_suite, ExperimentPlan};
pub use space::{Action, SpaceSpec};
