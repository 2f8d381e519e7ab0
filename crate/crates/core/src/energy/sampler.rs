//! Background sampling session: one thread owns the source, takes a sample on
//! start, one per period, and a final one on stop, appending to a buffer that
//! is handed back when the session closes.

use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{EnergyError, EnergySample, EnergySource, Target};

type BoxedSource = Box<dyn EnergySource + Send>;

pub struct SamplerSession {
    stop: Arc<(Mutex<bool>, Condvar)>,
    handle: JoinHandle<Result<(Vec<EnergySample>, BoxedSource), EnergyError>>,
}

impl SamplerSession {
    /// Takes the first sample synchronously (so the measurement window opens
    /// before this returns), then samples every `period` until `stop`.
    ///
    /// The source clock is advanced by the measured wall time between
    /// samples; for simulated sources this keeps virtual and wall duration
    /// aligned within scheduler latency.
    pub fn start(
        mut source: BoxedSource,
        targets: Vec<Target>,
        period: Duration,
    ) -> Result<Self, EnergyError> {
        let first = source.sample(&targets)?;
        let stop = Arc::new((Mutex::new(false), Condvar::new()));
        let stop_thread = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name("energy-sampler".into())
            .spawn(move || {
                let mut samples = vec![first];
                let mut last = Instant::now();
                let (lock, condvar) = &*stop_thread;
                loop {
                    let stopped = {
                        let guard = lock.lock().expect("sampler lock");
                        let (guard, _) = condvar
                            .wait_timeout_while(guard, period, |stopped| !*stopped)
                            .expect("sampler wait");
                        *guard
                    };
                    let now = Instant::now();
                    source.advance(now.duration_since(last).as_secs_f64());
                    last = now;
                    samples.push(source.sample(&targets)?);
                    if stopped {
                        return Ok((samples, source));
                    }
                }
            })
            .expect("spawn sampler thread");
        Ok(Self { stop, handle })
    }

    /// Signals the sampler, waits for its final sample and returns the buffer
    /// together with the source.
    pub fn stop(self) -> Result<(Vec<EnergySample>, BoxedSource), EnergyError> {
        let (lock, condvar) = &*self.stop;
        *lock.lock().expect("sampler lock") = true;
        condvar.notify_all();
        self.handle
            .join()
            .map_err(|_| EnergyError::SamplerFailed("sampler thread panicked".into()))?
    }
}
