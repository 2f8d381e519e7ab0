//! Benchmarks how substituting software-stack component versions changes an
//! application's energy consumption, and evaluates the measurements with
//! non-parametric statistics.
//!
//! The crate is organized along the pipeline:
//!
//! - [`matrix`]: dimensions, compatibility rules, configuration enumeration
//!   and run plans
//! - [`experiment`]: the experiment file tying everything together
//! - [`energy`]: counter reading, CPU accounting, per-process attribution
//! - [`workload`]: declarative HTTP test plans and their runner
//! - [`orchestrator`]: lifecycle driver and measurement persistence
//! - [`stats`]: cleaning, normality, omnibus/post-hoc tests, effect sizes
//! - [`report`]: decision artifacts (tables, heatmaps, boxplots, footprints)
//! - [`simulate`]: deterministic synthetic campaigns

pub mod energy;
pub mod experiment;
pub mod matrix;
pub mod orchestrator;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod workload;

pub use experiment::{load_experiment, Experiment};
pub use matrix::{
    build_run_plan, enumerate_configs, CompatibilityRule, Dimension, RunOrdering, RunPlan,
    StackConfig,
};
