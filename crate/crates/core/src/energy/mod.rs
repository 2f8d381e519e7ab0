//! Energy counter reading and per-process attribution.
//!
//! A source exposes a cumulative energy counter (microjoules) plus per-target
//! and host-wide CPU tick accounting. Attribution splits each interval's
//! system energy across targets in proportion to their share of the host's
//! busy CPU time:
//!
//! ```text
//! target joules = (target ticks / total ticks) * interval joules
//! ```
//!
//! Two source kinds exist: `rapl-sysfs` reads Linux powercap counters and
//! /proc accounting; `simulated` produces a deterministic stream for
//! synthetic campaigns and tests.

mod rapl;
mod sampler;
mod simulated;

pub use rapl::RaplSource;
pub use sampler::SamplerSession;
pub use simulated::{mix_seed, SimulatedConfig, SimulatedSource};

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("energy source unavailable: {path}: {reason}")]
    SourceUnavailable { path: String, reason: String },
    #[error("timestamps not strictly increasing ({prev_ns} -> {curr_ns})")]
    NonMonotonicTimestamps { prev_ns: u64, curr_ns: u64 },
    #[error("samples carry different target sets")]
    MismatchedTargets,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid simulated source config: {0}")]
    InvalidSimulatedConfig(String),
    #[error("sampler thread failed: {0}")]
    SamplerFailed(String),
}

/// Snapshot of a cumulative energy counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReading {
    pub counter_uj: u64,
    pub max_range_uj: u64,
    pub timestamp_ns: u64,
}

/// What the sampler measures: an identifier plus how to account its CPU time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub id: String,
    pub kind: TargetKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// A live process tree rooted at this pid (children included).
    Process(u32),
    /// A synthetic target whose CPU share comes from the simulated source.
    Simulated,
}

impl Target {
    pub fn process(id: impl Into<String>, pid: u32) -> Self {
        Self {
            id: id.into(),
            kind: TargetKind::Process(pid),
        }
    }

    pub fn simulated(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: TargetKind::Simulated,
        }
    }
}

/// One coherent snapshot: energy reading plus CPU accounting. Tick counters
/// are cumulative; a vanished process keeps its last value and is listed in
/// `dead_targets`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergySample {
    pub reading: EnergyReading,
    pub target_cpu_ticks: BTreeMap<String, u64>,
    pub total_cpu_ticks: u64,
    #[serde(default)]
    pub dead_targets: BTreeSet<String>,
}

/// Integrated outcome of a sampling session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributionResult {
    pub per_target_joules: BTreeMap<String, f64>,
    pub system_joules: f64,
    /// Attributed / system energy, in [0, 1].
    pub coverage: f64,
    pub duration_s: f64,
}

/// Where energy readings come from; stored in the experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EnergySourceDescriptor {
    RaplSysfs { counter_paths: Vec<PathBuf> },
    Simulated(SimulatedConfig),
}

impl EnergySourceDescriptor {
    pub fn is_simulated(&self) -> bool {
        matches!(self, Self::Simulated(_))
    }

    /// Cheap preflight check so an unusable source fails before any run.
    pub fn check_available(&self) -> Result<(), EnergyError> {
        match self {
            Self::RaplSysfs { counter_paths } => rapl::check_paths(counter_paths),
            Self::Simulated(config) => config.validate(),
        }
    }

    /// Opens a fresh source for one run. Simulated sources derive their seed
    /// from `(seed, config_id, iteration)` so resumed campaigns reproduce the
    /// exact same stream regardless of execution order.
    pub fn open(
        &self,
        config_id: &str,
        iteration: u32,
    ) -> Result<Box<dyn EnergySource + Send>, EnergyError> {
        match self {
            Self::RaplSysfs { counter_paths } => {
                Ok(Box::new(RaplSource::open(counter_paths)?))
            }
            Self::Simulated(config) => {
                Ok(Box::new(SimulatedSource::for_run(config, config_id, iteration)?))
            }
        }
    }
}

/// A live handle producing readings and samples.
///
/// `advance` moves the source clock forward; real sources follow wall time
/// and ignore it, while the simulated source is a pure function of the
/// advance deltas (and its seed), which is what makes replays byte-identical.
pub trait EnergySource {
    fn read(&mut self) -> Result<EnergyReading, EnergyError>;
    fn sample(&mut self, targets: &[Target]) -> Result<EnergySample, EnergyError>;
    fn advance(&mut self, dt_s: f64);
}

/// Joules elapsed between two readings of the same counter, handling at most
/// one wrap of the cumulative register.
pub fn delta_energy(prev: &EnergyReading, curr: &EnergyReading) -> Result<f64, EnergyError> {
    if curr.timestamp_ns <= prev.timestamp_ns {
        return Err(EnergyError::NonMonotonicTimestamps {
            prev_ns: prev.timestamp_ns,
            curr_ns: curr.timestamp_ns,
        });
    }
    let delta_uj = if curr.counter_uj >= prev.counter_uj {
        curr.counter_uj - prev.counter_uj
    } else {
        (prev.max_range_uj - prev.counter_uj) + curr.counter_uj
    };
    Ok(delta_uj as f64 * 1e-6)
}

/// Splits one interval's energy across targets by CPU-tick share. A target
/// that used no ticks gets zero; an interval with no host CPU activity
/// attributes nothing (idle counter drift stays unattributed).
pub fn attribute_interval(
    prev: &EnergySample,
    curr: &EnergySample,
) -> Result<BTreeMap<String, f64>, EnergyError> {
    if prev.target_cpu_ticks.keys().ne(curr.target_cpu_ticks.keys()) {
        return Err(EnergyError::MismatchedTargets);
    }
    let energy = delta_energy(&prev.reading, &curr.reading)?;
    let total_delta = curr.total_cpu_ticks.saturating_sub(prev.total_cpu_ticks);
    let mut out = BTreeMap::new();
    for (id, curr_ticks) in &curr.target_cpu_ticks {
        let prev_ticks = prev.target_cpu_ticks[id];
        let joules = if total_delta == 0 {
            0.0
        } else {
            let share = curr_ticks.saturating_sub(prev_ticks) as f64 / total_delta as f64;
            share * energy
        };
        out.insert(id.clone(), joules);
    }
    Ok(out)
}

/// Sums interval attribution over a whole session.
pub fn integrate_session(samples: &[EnergySample]) -> Result<AttributionResult, EnergyError> {
    if samples.len() < 2 {
        return Err(EnergyError::TooFewSamples(samples.len()));
    }
    let mut per_target: BTreeMap<String, f64> = samples[0]
        .target_cpu_ticks
        .keys()
        .map(|id| (id.clone(), 0.0))
        .collect();
    let mut system_joules = 0.0;
    for pair in samples.windows(2) {
        system_joules += delta_energy(&pair[0].reading, &pair[1].reading)?;
        for (id, joules) in attribute_interval(&pair[0], &pair[1])? {
            *per_target.get_mut(&id).expect("target set is stable") += joules;
        }
    }
    let attributed: f64 = per_target.values().sum();
    let coverage = if system_joules > 0.0 {
        (attributed / system_joules).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let duration_s = (samples[samples.len() - 1].reading.timestamp_ns
        - samples[0].reading.timestamp_ns) as f64
        * 1e-9;
    Ok(AttributionResult {
        per_target_joules: per_target,
        system_joules,
        coverage,
        duration_s,
    })
}
