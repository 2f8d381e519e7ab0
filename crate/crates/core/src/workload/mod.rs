//! Declarative HTTP workloads: operation groups run by parallel workers with
//! fixed loop counts.
//!
//! A test plan is an ordered list of groups; each group's step sequence is
//! executed `loops` times by each of `workers` concurrent workers. Steps can
//! capture fields from JSON responses into worker-local variables for
//! chaining created-resource ids.

mod runner;
mod stub;

pub use runner::{execute_plan, probe_ready, ProbeOutcome};
pub use stub::{StubOptions, StubServer};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cannot read test plan {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("test plan parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid test plan: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("transport failure on first request of group {group:?}: {message}")]
    Transport { group: String, message: String },
    #[error("unresolved placeholder {name:?} in {template:?}")]
    UnresolvedPlaceholder { name: String, template: String },
}

/// HTTP methods the runner supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        };
        f.write_str(s)
    }
}

/// Which response statuses count as success for a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StatusExpectation {
    #[default]
    #[serde(rename = "2xx")]
    Success,
    #[serde(rename = "any")]
    Any,
}

/// Capture of a JSON response field into a worker-local variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Capture {
    pub var: String,
    /// Dotted path into the response body, e.g. `id` or `owner.id`.
    pub field: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpStep {
    pub method: Method,
    pub path: String,
    #[serde(default)]
    pub body: Option<String>,
    #[serde(default)]
    pub expect: StatusExpectation,
    #[serde(default)]
    pub capture: Option<Capture>,
    /// Optional think time after the step; no pacing by default.
    #[serde(default)]
    pub delay_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationGroup {
    pub name: String,
    pub workers: u32,
    pub loops: u32,
    pub steps: Vec<HttpStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPlan {
    #[serde(default)]
    pub base_url: String,
    /// Per-request timeout.
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    pub groups: Vec<OperationGroup>,
}

fn default_timeout_s() -> f64 {
    30.0
}

/// Request totals per method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCounts {
    pub get: u64,
    pub post: u64,
    pub put: u64,
    pub delete: u64,
}

impl MethodCounts {
    pub fn total(&self) -> u64 {
        self.get + self.post + self.put + self.delete
    }

    pub fn add(&mut self, method: Method, n: u64) {
        match method {
            Method::Get => self.get += n,
            Method::Post => self.post += n,
            Method::Put => self.put += n,
            Method::Delete => self.delete += n,
        }
    }
}

/// Outcome of one plan execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub counts: MethodCounts,
    pub error_count: u64,
    pub wall_runtime_s: f64,
    pub started_at: chrono::DateTime<chrono::Utc>,
    pub ended_at: chrono::DateTime<chrono::Utc>,
}

/// Polling probe for service readiness.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadinessProbe {
    pub url: String,
    #[serde(default = "default_expected_status")]
    pub expected_status: u16,
    pub timeout_s: f64,
    pub poll_interval_s: f64,
}

fn default_expected_status() -> u16 {
    200
}

impl ReadinessProbe {
    pub fn validate(&self) -> Result<(), PlanError> {
        if !(self.poll_interval_s > 0.0 && self.timeout_s >= self.poll_interval_s) {
            return Err(PlanError::Validation(format!(
                "readiness probe needs timeout ({}) >= poll interval ({}) > 0",
                self.timeout_s, self.poll_interval_s
            )));
        }
        Ok(())
    }
}

/// Variables available to every step without a capture.
pub const BUILTIN_VARS: [&str; 3] = ["worker", "loop", "uniq"];

/// Extracts `{identifier}` placeholders from a template. JSON braces pass
/// through untouched because an identifier must follow the opening brace
/// immediately.
pub fn placeholders(template: &str) -> Vec<String> {
    let bytes = template.as_bytes();
    let mut found = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i + 1;
            let mut end = start;
            while end < bytes.len()
                && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_')
            {
                end += 1;
            }
            if end > start
                && end < bytes.len()
                && bytes[end] == b'}'
                && !bytes[start].is_ascii_digit()
            {
                found.push(template[start..end].to_string());
                i = end + 1;
                continue;
            }
        }
        i += 1;
    }
    found
}

/// Substitutes placeholders from `vars`; unknown names are an error.
pub fn resolve_template(
    template: &str,
    vars: &std::collections::BTreeMap<String, String>,
) -> Result<String, WorkloadError> {
    let mut out = template.to_string();
    for name in placeholders(template) {
        let value = vars
            .get(&name)
            .ok_or_else(|| WorkloadError::UnresolvedPlaceholder {
                name: name.clone(),
                template: template.to_string(),
            })?;
        out = out.replace(&format!("{{{name}}}"), value);
    }
    Ok(out)
}

/// Parses and validates a test plan file.
pub fn load_test_plan(path: &Path) -> Result<TestPlan, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|source| PlanError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let plan: TestPlan = toml::from_str(&text)?;
    validate_plan(&plan)?;
    Ok(plan)
}

/// Checks the structural invariants: nonempty groups, unique names, positive
/// worker/loop counts, and that every placeholder resolves from a built-in or
/// an earlier capture of the same group.
pub fn validate_plan(plan: &TestPlan) -> Result<(), PlanError> {
    if plan.groups.is_empty() {
        return Err(PlanError::Validation("plan declares no groups".into()));
    }
    if !plan.timeout_s.is_finite() || plan.timeout_s <= 0.0 {
        return Err(PlanError::Validation("timeout_s must be positive".into()));
    }
    let mut names = BTreeSet::new();
    for group in &plan.groups {
        if !names.insert(group.name.clone()) {
            return Err(PlanError::Validation(format!(
                "duplicate group name {:?}",
                group.name
            )));
        }
        if group.workers < 1 || group.loops < 1 {
            return Err(PlanError::Validation(format!(
                "group {:?} needs workers >= 1 and loops >= 1",
                group.name
            )));
        }
        if group.steps.is_empty() {
            return Err(PlanError::Validation(format!(
                "group {:?} has no steps",
                group.name
            )));
        }
        let mut available: BTreeSet<String> =
            BUILTIN_VARS.iter().map(|s| s.to_string()).collect();
        for step in &group.steps {
            let mut templates = vec![step.path.as_str()];
            if let Some(body) = &step.body {
                templates.push(body.as_str());
            }
            for template in templates {
                for name in placeholders(template) {
                    if !available.contains(&name) {
                        return Err(PlanError::Validation(format!(
                            "group {:?}: placeholder {{{name}}} in {template:?} is not a \
                             built-in and no earlier step captures it",
                            group.name
                        )));
                    }
                }
            }
            if let Some(capture) = &step.capture {
                if BUILTIN_VARS.contains(&capture.var.as_str()) {
                    return Err(PlanError::Validation(format!(
                        "group {:?}: capture shadows built-in variable {:?}",
                        group.name, capture.var
                    )));
                }
                available.insert(capture.var.clone());
            }
        }
    }
    Ok(())
}

/// Per-method totals implied by the plan: for each group,
/// `workers x loops x (steps of that method)`.
pub fn total_requests(plan: &TestPlan) -> MethodCounts {
    let mut counts = MethodCounts::default();
    for group in &plan.groups {
        let executions = group.workers as u64 * group.loops as u64;
        for step in &group.steps {
            counts.add(step.method, executions);
        }
    }
    counts
}
