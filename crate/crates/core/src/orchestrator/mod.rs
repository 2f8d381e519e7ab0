//! Drives the per-run lifecycle — setup, readiness, measured workload,
//! teardown, cooldown — for every entry of a run plan, and persists one CSV
//! row per run.
//!
//! Runs execute strictly sequentially; the only concurrency inside a run is
//! the energy sampler plus the workload workers. Parallel runs would share
//! the host's CPU accounting and corrupt attribution.

mod records;

pub use records::{load_records, MeasurementRecord, RecordWriter, RunStatus};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    integrate_session, EnergySourceDescriptor, SamplerSession, Target,
};
use crate::matrix::{Dimension, StackConfig};
use crate::workload::{
    execute_plan, probe_ready, MethodCounts, ReadinessProbe, TestPlan, WorkloadSummary,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },
    #[error("measurement file dimensions {found:?} do not match experiment {expected:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("output file {0} already has measurements; pass resume to continue it")]
    OutputExists(PathBuf),
}

/// Everything needed to bring one stack configuration up and down again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLifecycle {
    /// Shell commands run before the workload (build, start database, start
    /// application). Dimension variables are exported into their environment.
    #[serde(default)]
    pub setup_commands: Vec<String>,
    /// Shell commands run after the workload, also on failure.
    #[serde(default)]
    pub teardown_commands: Vec<String>,
    #[serde(default)]
    pub readiness: Option<ReadinessProbe>,
    /// File the setup writes the application pid into; designates the process
    /// tree measured with counter-based sources.
    #[serde(default)]
    pub pidfile: Option<PathBuf>,
    /// Idle gap after each run so thermal and frequency state relax.
    #[serde(default = "default_cooldown_s")]
    pub cooldown_s: f64,
    #[serde(default)]
    pub max_retries: u32,
    /// Runs whose workload error rate exceeds this are marked failed; energy
    /// under failure is not comparable.
    #[serde(default = "default_error_rate_threshold")]
    pub error_rate_threshold: f64,
    /// Open the energy window before the readiness wait instead of after it,
    /// charging application startup to the measurement.
    #[serde(default)]
    pub include_startup: bool,
}

fn default_cooldown_s() -> f64 {
    5.0
}

fn default_error_rate_threshold() -> f64 {
    0.01
}

impl Default for RunLifecycle {
    fn default() -> Self {
        Self {
            setup_commands: Vec::new(),
            teardown_commands: Vec::new(),
            readiness: None,
            pidfile: None,
            cooldown_s: default_cooldown_s(),
            max_retries: 0,
            error_rate_threshold: default_error_rate_threshold(),
            include_startup: false,
        }
    }
}

/// Shared, immutable context for executing runs.
pub struct RunContext<'a> {
    pub lifecycle: &'a RunLifecycle,
    pub plan: &'a TestPlan,
    pub base_url: &'a str,
    pub source: &'a EnergySourceDescriptor,
    pub sampling_period: Duration,
    pub host: String,
    pub dimensions: &'a [Dimension],
}

/// Totals reported by [`run_plan`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunPlanSummary {
    pub ok: usize,
    pub failed: usize,
    pub skipped: usize,
}

enum AttemptFailure {
    Setup { command: String, detail: String },
    ReadinessTimeout,
    Pidfile(String),
    Source(String),
    Transport(String),
    ErrorRate { rate: f64, threshold: f64 },
    Attribution(String),
}

impl AttemptFailure {
    fn reason(&self) -> String {
        match self {
            Self::Setup { command, detail } => format!("setup-command: {command}: {detail}"),
            Self::ReadinessTimeout => "readiness-timeout".into(),
            Self::Pidfile(detail) => format!("pidfile: {detail}"),
            Self::Source(detail) => format!("source: {detail}"),
            Self::Transport(detail) => format!("transport: {detail}"),
            Self::ErrorRate { rate, threshold } => {
                format!("error-rate: {rate:.4} > {threshold}")
            }
            Self::Attribution(detail) => format!("attribution: {detail}"),
        }
    }
}

struct AttemptOutcome {
    joules: f64,
    summary: WorkloadSummary,
}

/// Variables exported to lifecycle commands: `STACK_<DIMENSION>` per
/// dimension plus each substitution variable of the selected values, plus the
/// run identity.
pub fn run_environment(
    dimensions: &[Dimension],
    config: &StackConfig,
    iteration: u32,
) -> BTreeMap<String, String> {
    let mut env = BTreeMap::new();
    for (name, value) in &config.assignments {
        let key = format!("STACK_{}", name.to_uppercase().replace('-', "_"));
        env.insert(key, value.clone());
        if let Some(dim) = dimensions.iter().find(|d| &d.name == name) {
            if let Some(vars) = dim.substitutions.get(value) {
                for (k, v) in vars {
                    env.insert(k.clone(), v.clone());
                }
            }
        }
    }
    env.insert("STACK_CONFIG_ID".into(), config.id.clone());
    env.insert("STACK_ITERATION".into(), iteration.to_string());
    env
}

fn run_command(command: &str, env: &BTreeMap<String, String>) -> Result<(), String> {
    let output = std::process::Command::new("sh")
        .arg("-c")
        .arg(command)
        .envs(env)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if output.status.success() {
        Ok(())
    } else {
        let stderr = String::from_utf8_lossy(&output.stderr);
        let last_line = stderr.lines().last().unwrap_or("").trim();
        Err(format!(
            "exit {}{}{}",
            output.status.code().unwrap_or(-1),
            if last_line.is_empty() { "" } else { ": " },
            last_line
        ))
    }
}

fn read_pidfile(path: &Path) -> Result<u32, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.trim()
        .parse()
        .map_err(|e| format!("{}: unparseable pid: {e}", path.display()))
}

/// Executes exactly one benchmark run and returns its record. Teardown always
/// runs, also when the attempt failed; failed attempts are retried up to
/// `max_retries` times.
pub fn run_single(ctx: &RunContext, config: &StackConfig, iteration: u32) -> MeasurementRecord {
    let env = run_environment(ctx.dimensions, config, iteration);
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);

    let mut last_failure = None;
    for attempt in 0..=ctx.lifecycle.max_retries {
        if attempt > 0 {
            log::info!(
                "retrying {} iteration {iteration} (attempt {}/{})",
                config.id,
                attempt + 1,
                ctx.lifecycle.max_retries + 1
            );
        }
        let result = run_attempt(ctx, config, iteration, &env);
        run_teardown(ctx, &env);
        if ctx.lifecycle.cooldown_s > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(ctx.lifecycle.cooldown_s));
        }
        match result {
            Ok(outcome) => {
                return MeasurementRecord {
                    host: ctx.host.clone(),
                    config_id: config.id.clone(),
                    dimensions: config.assignments.clone(),
                    iteration,
                    status: RunStatus::Ok,
                    reason: None,
                    joules: Some(outcome.joules),
                    runtime_s: Some(outcome.summary.wall_runtime_s),
                    counts: outcome.summary.counts,
                    errors: outcome.summary.error_count,
                    started_at: started_at.clone(),
                    extra: Vec::new(),
                };
            }
            Err(failure) => {
                log::warn!(
                    "run {} iteration {iteration} failed: {}",
                    config.id,
                    failure.reason()
                );
                last_failure = Some(failure);
            }
        }
    }

    let failure = last_failure.expect("at least one attempt ran");
    MeasurementRecord {
        host: ctx.host.clone(),
        config_id: config.id.clone(),
        dimensions: config.assignments.clone(),
        iteration,
        status: RunStatus::Failed,
        reason: Some(failure.reason()),
        joules: None,
        runtime_s: None,
        counts: MethodCounts::default(),
        errors: 0,
        started_at,
        extra: Vec::new(),
    }
}

const APP_TARGET: &str = "app";

fn run_attempt(
    ctx: &RunContext,
    config: &StackConfig,
    iteration: u32,
    env: &BTreeMap<String, String>,
) -> Result<AttemptOutcome, AttemptFailure> {
    for command in &ctx.lifecycle.setup_commands {
        run_command(command, env).map_err(|detail| AttemptFailure::Setup {
            command: command.clone(),
            detail,
        })?;
    }

    let target = if ctx.source.is_simulated() {
        Target::simulated(APP_TARGET)
    } else {
        let pidfile = ctx
            .lifecycle
            .pidfile
            .as_ref()
            .ok_or_else(|| AttemptFailure::Pidfile("no pidfile configured".into()))?;
        let pid = read_pidfile(pidfile).map_err(AttemptFailure::Pidfile)?;
        Target::process(APP_TARGET, pid)
    };

    let open_sampler = || -> Result<SamplerSession, AttemptFailure> {
        let source = ctx
            .source
            .open(&config.id, iteration)
            .map_err(|e| AttemptFailure::Source(e.to_string()))?;
        SamplerSession::start(source, vec![target.clone()], ctx.sampling_period)
            .map_err(|e| AttemptFailure::Source(e.to_string()))
    };

    // Default window: readiness first, then sampling, so startup energy stays
    // out of the measurement. include_startup opens the window before the
    // readiness wait instead.
    let mut sampler = None;
    if ctx.lifecycle.include_startup {
        sampler = Some(open_sampler()?);
    }
    if let Some(probe) = &ctx.lifecycle.readiness {
        if !probe_ready(probe).is_ready() {
            if let Some(session) = sampler.take() {
                let _ = session.stop();
            }
            return Err(AttemptFailure::ReadinessTimeout);
        }
    }
    let sampler = match sampler {
        Some(session) => session,
        None => open_sampler()?,
    };

    let base_url = crate::workload::resolve_template(ctx.base_url, env)
        .map_err(|e| AttemptFailure::Transport(e.to_string()))?;
    let workload_result = execute_plan(ctx.plan, &base_url);
    let samples = sampler
        .stop()
        .map_err(|e| AttemptFailure::Source(e.to_string()))?
        .0;

    let summary = workload_result.map_err(|e| AttemptFailure::Transport(e.to_string()))?;

    let attribution =
        integrate_session(&samples).map_err(|e| AttemptFailure::Attribution(e.to_string()))?;
    let joules = attribution
        .per_target_joules
        .get(APP_TARGET)
        .copied()
        .unwrap_or(0.0);

    let total = summary.counts.total();
    let rate = if total > 0 {
        summary.error_count as f64 / total as f64
    } else {
        1.0
    };
    if rate > ctx.lifecycle.error_rate_threshold {
        return Err(AttemptFailure::ErrorRate {
            rate,
            threshold: ctx.lifecycle.error_rate_threshold,
        });
    }

    Ok(AttemptOutcome { joules, summary })
}

fn run_teardown(ctx: &RunContext, env: &BTreeMap<String, String>) {
    for command in &ctx.lifecycle.teardown_commands {
        if let Err(detail) = run_command(command, env) {
            log::warn!("teardown command {command:?} failed: {detail}");
        }
    }
}

/// Runs every entry of the plan in order, appending each record to
/// `output_csv` as soon as it exists. With `resume`, (config, iteration)
/// pairs already present in the file are skipped; without it an existing
/// non-empty file is refused rather than silently mixed into.
pub fn run_plan(
    entries: &[(StackConfig, u32)],
    ctx: &RunContext,
    output_csv: &Path,
    resume: bool,
) -> Result<RunPlanSummary, OrchestratorError> {
    let dimension_names: Vec<String> =
        ctx.dimensions.iter().map(|d| d.name.clone()).collect();
    run_plan_with(entries, &dimension_names, output_csv, resume, |config, iteration| {
        run_single(ctx, config, iteration)
    })
}

/// The append/skip loop behind [`run_plan`], generic over how a single entry
/// is executed; the synthetic campaign driver reuses it so resume semantics
/// stay identical.
pub fn run_plan_with<F>(
    entries: &[(StackConfig, u32)],
    dimension_names: &[String],
    output_csv: &Path,
    resume: bool,
    mut runner: F,
) -> Result<RunPlanSummary, OrchestratorError>
where
    F: FnMut(&StackConfig, u32) -> MeasurementRecord,
{
    let mut completed: BTreeSet<(String, u32)> = BTreeSet::new();
    if output_csv.exists() && std::fs::metadata(output_csv)?.len() > 0 {
        if !resume {
            return Err(OrchestratorError::OutputExists(output_csv.to_path_buf()));
        }
        let (existing, _) = load_records(output_csv)?;
        completed = existing
            .into_iter()
            .map(|r| (r.config_id, r.iteration))
            .collect();
    }

    let mut writer = RecordWriter::open(output_csv, dimension_names)?;
    let mut summary = RunPlanSummary::default();
    let total = entries.len();
    for (index, (config, iteration)) in entries.iter().enumerate() {
        if completed.contains(&(config.id.clone(), *iteration)) {
            summary.skipped += 1;
            continue;
        }
        log::info!(
            "run {}/{total}: {} iteration {iteration}",
            index + 1,
            config.id
        );
        let record = runner(config, *iteration);
        match record.status {
            RunStatus::Ok => summary.ok += 1,
            RunStatus::Failed => summary.failed += 1,
        }
        writer.write(&record)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::SimulatedConfig;
    use crate::matrix::Dimension;

    #[test]
    fn environment_exports_dimension_values_and_substitutions() {
        let mut dim = Dimension::new("jvm", &["17", "21"]);
        dim.substitutions.insert(
            "21".into(),
            [("JAVA_HOME".to_string(), "/opt/jdk21".to_string())]
                .into_iter()
                .collect(),
        );
        let dims = vec![Dimension::new("spring-boot", &["3.4.1"]), dim];
        let config = StackConfig::new(vec![
            ("spring-boot".into(), "3.4.1".into()),
            ("jvm".into(), "21".into()),
        ]);
        let env = run_environment(&dims, &config, 7);
        assert_eq!(env["STACK_SPRING_BOOT"], "3.4.1");
        assert_eq!(env["STACK_JVM"], "21");
        assert_eq!(env["JAVA_HOME"], "/opt/jdk21");
        assert_eq!(env["STACK_ITERATION"], "7");
        assert_eq!(env["STACK_CONFIG_ID"], config.id);
    }

    #[test]
    fn failing_setup_command_reports_detail() {
        let env = BTreeMap::new();
        let err = run_command("exit 3", &env).unwrap_err();
        assert!(err.contains("exit 3"));
        run_command("true", &env).unwrap();
    }

    #[test]
    fn pidfile_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("app.pid");
        std::fs::write(&path, "12345\n").unwrap();
        assert_eq!(read_pidfile(&path).unwrap(), 12345);
        assert!(read_pidfile(&dir.path().join("missing.pid")).is_err());
    }

    #[test]
    fn simulated_descriptor_yields_simulated_target() {
        // Covered end to end in the integration tests; here just the source
        // preflight used by the run loop.
        let descriptor =
            crate::energy::EnergySourceDescriptor::Simulated(SimulatedConfig::default());
        descriptor.check_available().unwrap();
        assert!(descriptor.is_simulated());
    }
}
