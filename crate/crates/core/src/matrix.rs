//! Experiment dimensions, compatibility rules and run-plan enumeration.
//!
//! A benchmark experiment varies a set of named dimensions (framework
//! version, runtime version, feature flags, ...). Every valid combination of
//! dimension values is one stack configuration; the run plan repeats each
//! configuration a fixed number of times.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("dimension name {0:?} is empty or contains invalid characters")]
    InvalidDimensionName(String),
    #[error("duplicate dimension {0:?}")]
    DuplicateDimension(String),
    #[error("dimension {0:?} declares no values")]
    EmptyDimension(String),
    #[error("dimension {dimension:?} repeats value {value:?} (after sanitizing)")]
    DuplicateValue { dimension: String, value: String },
    #[error("rule references unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("rule references unknown value {value:?} of dimension {dimension:?}")]
    UnknownValue { dimension: String, value: String },
    #[error("substitutions reference unknown value {value:?} of dimension {dimension:?}")]
    UnknownSubstitutionValue { dimension: String, value: String },
    #[error("iterations must be at least 1")]
    InvalidIterations,
    #[error("config id {id:?} does not match the declared dimensions")]
    MalformedConfigId { id: String },
}

/// One independent variable of the experiment: an ordered list of values plus
/// optional per-value substitution variables consumed by lifecycle commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<String>,
    /// value label -> (variable name -> string), exported to setup commands.
    #[serde(default)]
    pub substitutions: std::collections::BTreeMap<String, std::collections::BTreeMap<String, String>>,
}

impl Dimension {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        Self {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
            substitutions: Default::default(),
        }
    }
}

/// Allow-list constraint: when `dimension` takes `value`, `other_dimension`
/// must take one of `allowed`. Absence of a rule means unrestricted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompatibilityRule {
    pub dimension: String,
    pub value: String,
    pub other_dimension: String,
    pub allowed: BTreeSet<String>,
}

/// One point of the version matrix: exactly one value per declared dimension,
/// stored in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackConfig {
    pub assignments: Vec<(String, String)>,
    pub id: String,
}

/// Replaces separators that would break filesystem or CSV usage.
pub fn sanitize_value(value: &str) -> String {
    value
        .chars()
        .map(|c| if c == '/' || c.is_whitespace() { '-' } else { c })
        .collect()
}

impl StackConfig {
    pub fn new(assignments: Vec<(String, String)>) -> Self {
        let id = assignments
            .iter()
            .map(|(name, value)| format!("{name}={}", sanitize_value(value)))
            .collect::<Vec<_>>()
            .join("_");
        Self { assignments, id }
    }

    pub fn value_of(&self, dimension: &str) -> Option<&str> {
        self.assignments
            .iter()
            .find(|(name, _)| name == dimension)
            .map(|(_, value)| value.as_str())
    }

    /// Recovers the assignments from an id, given the dimension names in
    /// declaration order. Values are returned in sanitized form.
    pub fn parse_id(id: &str, dimension_names: &[String]) -> Result<Self, MatrixError> {
        let malformed = || MatrixError::MalformedConfigId { id: id.to_string() };
        let mut assignments = Vec::with_capacity(dimension_names.len());
        let mut rest = id;
        for (i, name) in dimension_names.iter().enumerate() {
            let prefix = format!("{name}=");
            rest = rest.strip_prefix(prefix.as_str()).ok_or_else(malformed)?;
            let value = match dimension_names.get(i + 1) {
                Some(next) => {
                    let boundary = format!("_{next}=");
                    let at = rest.find(&boundary).ok_or_else(malformed)?;
                    let value = &rest[..at];
                    rest = &rest[at + 1..];
                    value
                }
                None => std::mem::take(&mut rest),
            };
            if value.is_empty() {
                return Err(malformed());
            }
            assignments.push((name.clone(), value.to_string()));
        }
        if !rest.is_empty() {
            return Err(malformed());
        }
        Ok(StackConfig::new(assignments))
    }
}

/// Iteration orderings for the run plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunOrdering {
    /// All iterations of one configuration before moving to the next;
    /// minimizes rebuild and redeploy churn.
    Blocked,
    /// Iteration k of every configuration before iteration k+1 of any;
    /// spreads slow host drift across configurations.
    RoundRobin,
}

impl std::str::FromStr for RunOrdering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blocked" => Ok(Self::Blocked),
            "round-robin" => Ok(Self::RoundRobin),
            other => Err(format!(
                "unknown ordering {other:?} (expected \"blocked\" or \"round-robin\")"
            )),
        }
    }
}

/// The full sequence of benchmark runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPlan {
    pub entries: Vec<(StackConfig, u32)>,
    pub iterations_per_config: u32,
    pub ordering: RunOrdering,
}

/// Validates dimensions and rules as a set. Called by the experiment loader
/// and by anyone assembling an experiment in code.
pub fn validate(dimensions: &[Dimension], rules: &[CompatibilityRule]) -> Result<(), MatrixError> {
    let mut seen = BTreeSet::new();
    for dim in dimensions {
        if dim.name.is_empty()
            || !dim
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(MatrixError::InvalidDimensionName(dim.name.clone()));
        }
        if !seen.insert(dim.name.clone()) {
            return Err(MatrixError::DuplicateDimension(dim.name.clone()));
        }
        if dim.values.is_empty() {
            return Err(MatrixError::EmptyDimension(dim.name.clone()));
        }
        let mut sanitized = BTreeSet::new();
        for value in &dim.values {
            if value.is_empty() || !sanitized.insert(sanitize_value(value)) {
                return Err(MatrixError::DuplicateValue {
                    dimension: dim.name.clone(),
                    value: value.clone(),
                });
            }
        }
        for value in dim.substitutions.keys() {
            if !dim.values.contains(value) {
                return Err(MatrixError::UnknownSubstitutionValue {
                    dimension: dim.name.clone(),
                    value: value.clone(),
                });
            }
        }
    }
    for rule in rules {
        let dim_a = dimensions
            .iter()
            .find(|d| d.name == rule.dimension)
            .ok_or_else(|| MatrixError::UnknownDimension(rule.dimension.clone()))?;
        if !dim_a.values.contains(&rule.value) {
            return Err(MatrixError::UnknownValue {
                dimension: rule.dimension.clone(),
                value: rule.value.clone(),
            });
        }
        let dim_b = dimensions
            .iter()
            .find(|d| d.name == rule.other_dimension)
            .ok_or_else(|| MatrixError::UnknownDimension(rule.other_dimension.clone()))?;
        for allowed in &rule.allowed {
            if !dim_b.values.contains(allowed) {
                return Err(MatrixError::UnknownValue {
                    dimension: rule.other_dimension.clone(),
                    value: allowed.clone(),
                });
            }
        }
    }
    Ok(())
}

/// True when `assignments` satisfy every applicable rule.
pub fn satisfies_rules(config: &StackConfig, rules: &[CompatibilityRule]) -> bool {
    rules.iter().all(|rule| {
        match (
            config.value_of(&rule.dimension),
            config.value_of(&rule.other_dimension),
        ) {
            (Some(a), Some(b)) if a == rule.value => rule.allowed.contains(b),
            _ => true,
        }
    })
}

/// Enumerates every rule-satisfying configuration. Deterministic order: the
/// first declared dimension is the outermost loop. An empty result is legal
/// when the rules exclude everything.
pub fn enumerate_configs(
    dimensions: &[Dimension],
    rules: &[CompatibilityRule],
) -> Vec<StackConfig> {
    let mut configs = Vec::new();
    let mut current: Vec<(String, String)> = Vec::with_capacity(dimensions.len());
    fn recurse(
        dimensions: &[Dimension],
        rules: &[CompatibilityRule],
        current: &mut Vec<(String, String)>,
        out: &mut Vec<StackConfig>,
    ) {
        match dimensions.first() {
            None => {
                let config = StackConfig::new(current.clone());
                if satisfies_rules(&config, rules) {
                    out.push(config);
                }
            }
            Some(dim) => {
                for value in &dim.values {
                    current.push((dim.name.clone(), value.clone()));
                    recurse(&dimensions[1..], rules, current, out);
                    current.pop();
                }
            }
        }
    }
    recurse(dimensions, rules, &mut current, &mut configs);
    configs
}

/// Expands configurations into the ordered run plan.
pub fn build_run_plan(
    configs: &[StackConfig],
    iterations: u32,
    ordering: RunOrdering,
) -> Result<RunPlan, MatrixError> {
    if iterations < 1 {
        return Err(MatrixError::InvalidIterations);
    }
    let mut entries = Vec::with_capacity(configs.len() * iterations as usize);
    match ordering {
        RunOrdering::Blocked => {
            for config in configs {
                for iteration in 0..iterations {
                    entries.push((config.clone(), iteration));
                }
            }
        }
        RunOrdering::RoundRobin => {
            for iteration in 0..iterations {
                for config in configs {
                    entries.push((config.clone(), iteration));
                }
            }
        }
    }
    Ok(RunPlan {
        entries,
        iterations_per_config: iterations,
        ordering,
    })
}
