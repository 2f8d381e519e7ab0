//! The experiment file: dimensions, rules, run settings, lifecycle, workload
//! reference and energy source, all in one TOML document.
//!
//! Dimension declaration order is meaningful (it fixes config ids, loop
//! nesting and report axes), so the `[dimensions]` table is parsed in file
//! order.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::energy::{EnergySourceDescriptor, SimulatedConfig};
use crate::matrix::{
    self, CompatibilityRule, Dimension, RunOrdering, RunPlan, StackConfig,
};
use crate::orchestrator::RunLifecycle;
use crate::workload::{load_test_plan, PlanError, ReadinessProbe, TestPlan};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read experiment {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("experiment parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Matrix(#[from] matrix::MatrixError),
    #[error("invalid experiment: {0}")]
    Validation(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub dimensions: Vec<Dimension>,
    pub rules: Vec<CompatibilityRule>,
    pub iterations: u32,
    pub ordering: RunOrdering,
    pub lifecycle: RunLifecycle,
    /// Test plan location, resolved relative to the experiment file.
    pub plan_path: PathBuf,
    /// Base URL the workload runs against; may reference substitution
    /// variables like `{PORT}`.
    pub base_url: Option<String>,
    pub energy: EnergySourceDescriptor,
    pub sampling_period_ms: u64,
    pub host_label: Option<String>,
}

impl Experiment {
    pub fn enumerate_configs(&self) -> Vec<StackConfig> {
        matrix::enumerate_configs(&self.dimensions, &self.rules)
    }

    pub fn build_run_plan(&self) -> Result<RunPlan, matrix::MatrixError> {
        matrix::build_run_plan(&self.enumerate_configs(), self.iterations, self.ordering)
    }

    pub fn load_plan(&self) -> Result<TestPlan, PlanError> {
        load_test_plan(&self.plan_path)
    }

    /// Base URL for the workload: the experiment's override, else the plan's.
    pub fn effective_base_url(&self, plan: &TestPlan) -> String {
        self.base_url.clone().unwrap_or_else(|| plan.base_url.clone())
    }

    pub fn dimension_names(&self) -> Vec<String> {
        self.dimensions.iter().map(|d| d.name.clone()).collect()
    }

    pub fn host(&self) -> String {
        self.host_label.clone().unwrap_or_else(detect_hostname)
    }

    pub fn simulated_config(&self) -> Option<&SimulatedConfig> {
        match &self.energy {
            EnergySourceDescriptor::Simulated(config) => Some(config),
            EnergySourceDescriptor::RaplSysfs { .. } => None,
        }
    }
}

/// Lifecycle commands may reference the `STACK_*` namespace only for
/// variables the runner actually exports: one per declared dimension plus the
/// run identity. A stale reference (renamed dimension, typo) would expand to
/// an empty string inside the shell and fail in confusing ways downstream.
fn validate_command_variables(
    lifecycle: &RunLifecycle,
    dimensions: &[Dimension],
) -> Result<(), ExperimentError> {
    let mut known: Vec<String> = dimensions
        .iter()
        .map(|d| format!("STACK_{}", d.name.to_uppercase().replace('-', "_")))
        .collect();
    known.push("STACK_CONFIG_ID".into());
    known.push("STACK_ITERATION".into());

    for command in lifecycle
        .setup_commands
        .iter()
        .chain(&lifecycle.teardown_commands)
    {
        for reference in stack_variable_references(command) {
            if !known.contains(&reference) {
                return Err(ExperimentError::Validation(format!(
                    "command {command:?} references ${reference}, but no dimension exports it \
                     (known: {})",
                    known.join(", ")
                )));
            }
        }
    }
    Ok(())
}

/// Extracts `$STACK_...` / `${STACK_...}` names from a shell command.
fn stack_variable_references(command: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = command.as_bytes();
    let mut i = 0;
    while let Some(offset) = command[i..].find('$') {
        let mut start = i + offset + 1;
        let braced = bytes.get(start) == Some(&b'{');
        if braced {
            start += 1;
        }
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
            end += 1;
        }
        let name = &command[start..end];
        if name.starts_with("STACK_") {
            out.push(name.to_string());
        }
        i = end.max(i + offset + 1);
    }
    out
}

fn detect_hostname() -> String {
    std::fs::read_to_string("/proc/sys/kernel/hostname")
        .map(|s| s.trim().to_string())
        .ok()
        .filter(|s| !s.is_empty())
        .or_else(|| std::env::var("HOSTNAME").ok())
        .unwrap_or_else(|| "unknown-host".to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    run: RawRun,
    dimensions: toml::Table,
    #[serde(default)]
    rules: Vec<RawRule>,
    #[serde(default)]
    lifecycle: RawLifecycle,
    workload: RawWorkload,
    energy: RawEnergy,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    iterations: u32,
    #[serde(default)]
    ordering: Option<String>,
    #[serde(default)]
    cooldown_s: Option<f64>,
    #[serde(default)]
    max_retries: Option<u32>,
    #[serde(default)]
    host_label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDimension {
    values: Vec<String>,
    #[serde(default)]
    substitutions:
        std::collections::BTreeMap<String, std::collections::BTreeMap<String, String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    dimension: String,
    value: String,
    other: String,
    allowed: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLifecycle {
    #[serde(default)]
    setup: Vec<String>,
    #[serde(default)]
    teardown: Vec<String>,
    #[serde(default)]
    readiness: Option<ReadinessProbe>,
    #[serde(default)]
    pidfile: Option<PathBuf>,
    #[serde(default)]
    error_rate_threshold: Option<f64>,
    #[serde(default)]
    include_startup: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    plan: PathBuf,
    #[serde(default)]
    base_url: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    kind: String,
    #[serde(default)]
    sampling_period_ms: Option<u64>,
    #[serde(default)]
    counter_paths: Option<Vec<PathBuf>>,
    #[serde(default)]
    simulated: Option<SimulatedConfig>,
}

/// Parses and fully validates an experiment file.
pub fn load_experiment(path: &Path) -> Result<Experiment, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let raw: RawExperiment = toml::from_str(&text)?;

    if raw.run.iterations < 1 {
        return Err(ExperimentError::Validation(
            "run.iterations must be at least 1".into(),
        ));
    }
    let ordering = match raw.run.ordering.as_deref() {
        None => RunOrdering::Blocked,
        Some(text) => text
            .parse()
            .map_err(ExperimentError::Validation)?,
    };

    // The dimensions table preserves file order, which becomes declaration
    // order everywhere downstream.
    let mut dimensions = Vec::with_capacity(raw.dimensions.len());
    for (name, value) in raw.dimensions {
        let raw_dim: RawDimension = value
            .try_into()
            .map_err(|e| ExperimentError::Validation(format!("dimension {name:?}: {e}")))?;
        dimensions.push(Dimension {
            name,
            values: raw_dim.values,
            substitutions: raw_dim.substitutions,
        });
    }

    let rules: Vec<CompatibilityRule> = raw
        .rules
        .into_iter()
        .map(|r| CompatibilityRule {
            dimension: r.dimension,
            value: r.value,
            other_dimension: r.other,
            allowed: r.allowed.into_iter().collect(),
        })
        .collect();
    matrix::validate(&dimensions, &rules)?;

    if let Some(probe) = &raw.lifecycle.readiness {
        probe.validate()?;
    }
    let threshold = raw.lifecycle.error_rate_threshold.unwrap_or(0.01);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(ExperimentError::Validation(format!(
            "lifecycle.error_rate_threshold {threshold} outside [0, 1]"
        )));
    }
    let cooldown_s = raw.run.cooldown_s.unwrap_or(5.0);
    if cooldown_s < 0.0 {
        return Err(ExperimentError::Validation(
            "run.cooldown_s must be >= 0".into(),
        ));
    }

    let lifecycle = RunLifecycle {
        setup_commands: raw.lifecycle.setup,
        teardown_commands: raw.lifecycle.teardown,
        readiness: raw.lifecycle.readiness,
        pidfile: raw.lifecycle.pidfile,
        cooldown_s,
        max_retries: raw.run.max_retries.unwrap_or(0),
        error_rate_threshold: threshold,
        include_startup: raw.lifecycle.include_startup.unwrap_or(false),
    };
    validate_command_variables(&lifecycle, &dimensions)?;

    let energy = match raw.energy.kind.as_str() {
        "rapl-sysfs" => {
            let counter_paths = raw.energy.counter_paths.unwrap_or_default();
            if counter_paths.is_empty() {
                return Err(ExperimentError::Validation(
                    "energy.kind = \"rapl-sysfs\" requires nonempty energy.counter_paths".into(),
                ));
            }
            EnergySourceDescriptor::RaplSysfs { counter_paths }
        }
        "simulated" => {
            let config = raw.energy.simulated.unwrap_or_default();
            config
                .validate()
                .map_err(|e| ExperimentError::Validation(e.to_string()))?;
            EnergySourceDescriptor::Simulated(config)
        }
        other => {
            return Err(ExperimentError::Validation(format!(
                "unknown energy.kind {other:?} (expected \"rapl-sysfs\" or \"simulated\")"
            )))
        }
    };

    let plan_path = if raw.workload.plan.is_absolute() {
        raw.workload.plan
    } else {
        path.parent()
            .unwrap_or_else(|| Path::new("."))
            .join(raw.workload.plan)
    };

    Ok(Experiment {
        dimensions,
        rules,
        iterations: raw.run.iterations,
        ordering,
        lifecycle,
        plan_path,
        base_url: raw.workload.base_url,
        energy,
        sampling_period_ms: raw.energy.sampling_period_ms.unwrap_or(100),
        host_label: raw.run.host_label,
    })
}
