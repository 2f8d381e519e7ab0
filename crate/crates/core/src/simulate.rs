//! Synthetic campaigns: the full measurement pipeline without external
//! processes.
//!
//! Every run plan entry gets a deterministic synthetic runtime and a
//! simulated energy stream seeded by (campaign seed, config id, iteration),
//! then flows through the same attribution, persistence and resume machinery
//! as a real campaign. Fixed seed in, byte-identical CSV out; a desk-scale
//! stand-in for campaigns that otherwise run for days.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::energy::{integrate_session, mix_seed, EnergySource, SimulatedConfig, SimulatedSource, Target};
use crate::experiment::Experiment;
use crate::matrix::MatrixError;
use crate::orchestrator::{
    run_plan_with, MeasurementRecord, OrchestratorError, RunPlanSummary, RunStatus,
};
use crate::workload::{total_requests, MethodCounts, PlanError};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("experiment does not declare a simulated energy source")]
    NotSimulated,
    #[error("power offsets reference unknown config ids: {0:?}")]
    UnknownOffsetConfigs(Vec<String>),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("simulation failed: {0}")]
    Internal(String),
}

/// Virtual clock origin for synthetic timestamps. Timestamps derive from the
/// entry's position in the plan, not from execution order, so resumed and
/// uninterrupted campaigns write identical rows.
const VIRTUAL_EPOCH_S: i64 = 1_735_689_600; // 2025-01-01T00:00:00Z

/// Runs the whole plan synthetically, appending records to `output_csv`.
/// `seed_override` replaces the seed from the experiment file.
pub fn simulate_campaign(
    experiment: &Experiment,
    output_csv: &Path,
    resume: bool,
    seed_override: Option<u64>,
) -> Result<RunPlanSummary, SimulateError> {
    let mut config = experiment
        .simulated_config()
        .ok_or(SimulateError::NotSimulated)?
        .clone();
    if let Some(seed) = seed_override {
        config.seed = seed;
    }

    let configs = experiment.enumerate_configs();
    let known: std::collections::BTreeSet<&str> =
        configs.iter().map(|c| c.id.as_str()).collect();
    let unknown: Vec<String> = config
        .power_offsets_w
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(SimulateError::UnknownOffsetConfigs(unknown));
    }

    let plan = experiment.load_plan()?;
    let counts = total_requests(&plan);
    let run_plan = experiment.build_run_plan()?;

    let slot_s = (config.base_runtime_s * (1.0 + config.runtime_jitter)).ceil() as i64
        + experiment.lifecycle.cooldown_s.ceil() as i64
        + 1;
    let entry_index: BTreeMap<(String, u32), usize> = run_plan
        .entries
        .iter()
        .enumerate()
        .map(|(i, (c, iter))| ((c.id.clone(), *iter), i))
        .collect();

    let host = experiment.host();
    let period_s = experiment.sampling_period_ms.max(1) as f64 / 1000.0;
    let dimension_names = experiment.dimension_names();

    let summary = run_plan_with(
        &run_plan.entries,
        &dimension_names,
        output_csv,
        resume,
        |stack, iteration| {
            let index = entry_index[&(stack.id.clone(), iteration)];
            let started_at = chrono::DateTime::from_timestamp(
                VIRTUAL_EPOCH_S + index as i64 * slot_s,
                0,
            )
            .expect("virtual timestamp in range")
            .to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            match simulate_run(&config, stack, iteration, period_s) {
                Ok((joules, runtime_s)) => MeasurementRecord {
                    host: host.clone(),
                    config_id: stack.id.clone(),
                    dimensions: stack.assignments.clone(),
                    iteration,
                    status: RunStatus::Ok,
                    reason: None,
                    joules: Some(joules),
                    runtime_s: Some(runtime_s),
                    counts,
                    errors: 0,
                    started_at,
                    extra: Vec::new(),
                },
                Err(reason) => MeasurementRecord {
                    host: host.clone(),
                    config_id: stack.id.clone(),
                    dimensions: stack.assignments.clone(),
                    iteration,
                    status: RunStatus::Failed,
                    reason: Some(reason),
                    joules: None,
                    runtime_s: None,
                    counts: MethodCounts::default(),
                    errors: 0,
                    started_at,
                    extra: Vec::new(),
                },
            }
        },
    )?;
    Ok(summary)
}

/// One synthetic run: jittered runtime, simulated sampling at the configured
/// period, attribution through the real integration path.
fn simulate_run(
    config: &SimulatedConfig,
    stack: &crate::matrix::StackConfig,
    iteration: u32,
    period_s: f64,
) -> Result<(f64, f64), String> {
    // Runtime jitter uses its own stream so changing the sampling period
    // never changes the runtimes.
    let mut runtime_rng =
        ChaCha8Rng::seed_from_u64(mix_seed(config.seed.wrapping_add(0x5eed), &stack.id, iteration));
    let jitter: f64 = runtime_rng.random_range(-1.0..=1.0);
    let runtime_s = config.base_runtime_s * (1.0 + config.runtime_jitter * jitter);

    let mut source =
        SimulatedSource::for_run(config, &stack.id, iteration).map_err(|e| e.to_string())?;
    let targets = [Target::simulated("app")];
    let intervals = ((runtime_s / period_s).round() as u64).max(1);
    let dt = runtime_s / intervals as f64;

    let mut samples = Vec::with_capacity(intervals as usize + 1);
    samples.push(source.sample(&targets).map_err(|e| e.to_string())?);
    for _ in 0..intervals {
        source.advance(dt);
        samples.push(source.sample(&targets).map_err(|e| e.to_string())?);
    }
    let attribution = integrate_session(&samples).map_err(|e| e.to_string())?;
    let joules = attribution
        .per_target_joules
        .get("app")
        .copied()
        .unwrap_or(0.0);
    Ok((joules, runtime_s))
}
