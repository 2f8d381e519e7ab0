//! Deterministic stand-in for a hardware energy counter.
//!
//! The source integrates a configurable power level over a virtual clock that
//! only moves when `advance` is called, and books CPU ticks for its targets
//! at fixed shares. With a fixed seed the emitted stream is a pure function
//! of the advance deltas, so replays are byte-identical.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnergyError, EnergyReading, EnergySample, EnergySource, Target, TargetKind};

/// Host CPU ticks booked per advance interval; target shares quantize to
/// 1/1000 of an interval.
const TICKS_PER_INTERVAL: u64 = 1000;

/// Counter wrap limit, mirroring the order of magnitude of real hardware.
const MAX_RANGE_UJ: u64 = 262_143_328_850;

/// Configuration of the simulated source, read from the experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulatedConfig {
    /// System power in watts before offsets and noise.
    pub base_power_w: f64,
    /// Extra watts per stack configuration id; unknown ids are rejected by
    /// the synthetic campaign driver.
    pub power_offsets_w: BTreeMap<String, f64>,
    /// Relative per-interval noise amplitude (0.02 = +/-2% uniform).
    pub noise: f64,
    /// Campaign seed; per-run streams derive from it.
    pub seed: u64,
    /// CPU share booked for each simulated target.
    pub target_share: f64,
    /// Nominal synthetic workload duration for `simulate` campaigns.
    pub base_runtime_s: f64,
    /// Relative per-run runtime jitter for `simulate` campaigns.
    pub runtime_jitter: f64,
}

impl Default for SimulatedConfig {
    fn default() -> Self {
        Self {
            base_power_w: 10.0,
            power_offsets_w: BTreeMap::new(),
            noise: 0.02,
            seed: 42,
            target_share: 0.5,
            base_runtime_s: 10.0,
            runtime_jitter: 0.05,
        }
    }
}

impl SimulatedConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let invalid = EnergyError::InvalidSimulatedConfig;
        if !self.base_power_w.is_finite() || self.base_power_w < 0.0 {
            return Err(invalid(format!("base_power_w {} < 0", self.base_power_w)));
        }
        for (id, offset) in &self.power_offsets_w {
            if self.base_power_w + offset < 0.0 {
                return Err(invalid(format!("power for {id:?} is negative")));
            }
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(invalid(format!("noise {} outside [0, 1)", self.noise)));
        }
        if !self.target_share.is_finite() || self.target_share <= 0.0 || self.target_share > 1.0 {
            return Err(invalid(format!(
                "target_share {} outside (0, 1]",
                self.target_share
            )));
        }
        if !self.base_runtime_s.is_finite() || self.base_runtime_s <= 0.0 {
            return Err(invalid("base_runtime_s must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.runtime_jitter) {
            return Err(invalid(format!(
                "runtime_jitter {} outside [0, 1)",
                self.runtime_jitter
            )));
        }
        Ok(())
    }

    pub fn power_for(&self, config_id: &str) -> f64 {
        self.base_power_w + self.power_offsets_w.get(config_id).copied().unwrap_or(0.0)
    }
}

pub struct SimulatedSource {
    power_w: f64,
    noise: f64,
    default_share: f64,
    rng: ChaCha8Rng,
    t_ns: u64,
    counter_uj: u64,
    shares: BTreeMap<String, f64>,
    ticks: BTreeMap<String, u64>,
    total_ticks: u64,
}

impl SimulatedSource {
    pub fn new(power_w: f64, noise: f64, default_share: f64, seed: u64) -> Self {
        Self {
            power_w,
            noise,
            default_share,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t_ns: 0,
            counter_uj: 0,
            shares: BTreeMap::new(),
            ticks: BTreeMap::new(),
            total_ticks: 0,
        }
    }

    /// Source for one benchmark run, seeded from the campaign seed plus the
    /// run identity so resume order does not change the stream.
    pub fn for_run(
        config: &SimulatedConfig,
        config_id: &str,
        iteration: u32,
    ) -> Result<Self, EnergyError> {
        config.validate()?;
        Ok(Self::new(
            config.power_for(config_id),
            config.noise,
            config.target_share,
            mix_seed(config.seed, config_id, iteration),
        ))
    }

    /// Overrides the CPU share of one target from now on.
    pub fn set_share(&mut self, target_id: &str, share: f64) {
        self.shares.insert(target_id.to_string(), share);
    }

    fn share_of(&mut self, target_id: &str) -> f64 {
        *self
            .shares
            .entry(target_id.to_string())
            .or_insert(self.default_share)
    }
}

impl EnergySource for SimulatedSource {
    fn read(&mut self) -> Result<EnergyReading, EnergyError> {
        Ok(EnergyReading {
            counter_uj: self.counter_uj % MAX_RANGE_UJ,
            max_range_uj: MAX_RANGE_UJ,
            timestamp_ns: self.t_ns,
        })
    }

    fn sample(&mut self, targets: &[Target]) -> Result<EnergySample, EnergyError> {
        let reading = self.read()?;
        let mut target_cpu_ticks = BTreeMap::new();
        for target in targets {
            debug_assert!(matches!(target.kind, TargetKind::Simulated));
            self.share_of(&target.id);
            let ticks = self.ticks.entry(target.id.clone()).or_insert(0);
            target_cpu_ticks.insert(target.id.clone(), *ticks);
        }
        Ok(EnergySample {
            reading,
            target_cpu_ticks,
            total_cpu_ticks: self.total_ticks,
            dead_targets: Default::default(),
        })
    }

    fn advance(&mut self, dt_s: f64) {
        if dt_s <= 0.0 {
            return;
        }
        // Noise is multiplicative so scaling the power level scales the whole
        // stream; one draw per interval regardless of amplitude keeps streams
        // comparable across noise settings.
        let u: f64 = self.rng.random_range(-1.0..=1.0);
        let power = self.power_w * (1.0 + self.noise * u);
        self.counter_uj += (power * dt_s * 1e6).round() as u64;
        self.t_ns += ((dt_s * 1e9).round() as u64).max(1);
        self.total_ticks += TICKS_PER_INTERVAL;
        let shares = std::mem::take(&mut self.shares);
        for (id, share) in &shares {
            let delta = (share * TICKS_PER_INTERVAL as f64).round() as u64;
            *self.ticks.entry(id.clone()).or_insert(0) += delta;
        }
        self.shares = shares;
    }
}

/// Stable 64-bit mix of campaign seed, configuration id and iteration.
/// Hand-rolled (FNV-1a + splitmix64) because std hashers are not guaranteed
/// stable across releases and these seeds land in persisted CSV values.
pub fn mix_seed(seed: u64, config_id: &str, iteration: u32) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in config_id.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h ^ ((iteration as u64) << 1 | 1))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
