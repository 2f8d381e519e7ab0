//! Test-plan execution: sequential groups, concurrent workers within a group.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{
    Method, ReadinessProbe, StatusExpectation, TestPlan, WorkloadError, WorkloadSummary,
};

/// Result of polling a readiness probe. A timeout is an ordinary outcome so
/// the orchestrator can mark the run failed without unwinding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeOutcome {
    Ready { waited_s: f64 },
    TimedOut { waited_s: f64 },
}

impl ProbeOutcome {
    pub fn is_ready(&self) -> bool {
        matches!(self, ProbeOutcome::Ready { .. })
    }
}

/// Polls `probe.url` until it answers with the expected status or the timeout
/// elapses. Transport errors while polling just mean "not ready yet".
pub fn probe_ready(probe: &ReadinessProbe) -> ProbeOutcome {
    let interval = Duration::from_secs_f64(probe.poll_interval_s);
    let client = reqwest::blocking::Client::builder()
        .timeout(interval)
        .build()
        .expect("build probe client");
    let begun = Instant::now();
    loop {
        let attempt_started = Instant::now();
        let ready = matches!(
            client.get(&probe.url).send(),
            Ok(response) if response.status().as_u16() == probe.expected_status
        );
        if ready {
            return ProbeOutcome::Ready {
                waited_s: begun.elapsed().as_secs_f64(),
            };
        }
        if begun.elapsed().as_secs_f64() + probe.poll_interval_s > probe.timeout_s {
            return ProbeOutcome::TimedOut {
                waited_s: begun.elapsed().as_secs_f64(),
            };
        }
        if let Some(remaining) = interval.checked_sub(attempt_started.elapsed()) {
            std::thread::sleep(remaining);
        }
    }
}

struct Tally {
    get: AtomicU64,
    post: AtomicU64,
    put: AtomicU64,
    delete: AtomicU64,
    errors: AtomicU64,
}

impl Tally {
    fn new() -> Self {
        Self {
            get: AtomicU64::new(0),
            post: AtomicU64::new(0),
            put: AtomicU64::new(0),
            delete: AtomicU64::new(0),
            errors: AtomicU64::new(0),
        }
    }

    fn bump(&self, method: Method) {
        let counter = match method {
            Method::Get => &self.get,
            Method::Post => &self.post,
            Method::Put => &self.put,
            Method::Delete => &self.delete,
        };
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

/// Runs the plan against `base_url`.
///
/// Groups run sequentially in declared order; inside a group, `workers`
/// threads each run the step sequence `loops` times with worker-local capture
/// state. Responses outside the expected status class are counted as errors
/// without aborting. A transport failure on a worker's very first request of
/// a group aborts the run: the target is evidently not reachable and the
/// measurement would be meaningless.
pub fn execute_plan(plan: &TestPlan, base_url: &str) -> Result<WorkloadSummary, WorkloadError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs_f64(plan.timeout_s))
        .build()
        .expect("build workload client");

    let started_at = chrono::Utc::now();
    let clock = Instant::now();
    let tally = Arc::new(Tally::new());
    let abort = Arc::new(AtomicBool::new(false));
    let abort_reason: Arc<Mutex<Option<WorkloadError>>> = Arc::new(Mutex::new(None));

    for group in &plan.groups {
        std::thread::scope(|scope| {
            for worker_index in 0..group.workers {
                let client = client.clone();
                let tally = Arc::clone(&tally);
                let abort = Arc::clone(&abort);
                let abort_reason = Arc::clone(&abort_reason);
                scope.spawn(move || {
                    run_worker(
                        group,
                        worker_index,
                        base_url,
                        &client,
                        &tally,
                        &abort,
                        &abort_reason,
                    );
                });
            }
        });
        if abort.load(Ordering::SeqCst) {
            break;
        }
    }

    if abort.load(Ordering::SeqCst) {
        let reason = abort_reason
            .lock()
            .expect("abort reason lock")
            .take()
            .unwrap_or(WorkloadError::Transport {
                group: String::new(),
                message: "aborted".into(),
            });
        return Err(reason);
    }

    let wall_runtime_s = clock.elapsed().as_secs_f64();
    Ok(WorkloadSummary {
        counts: super::MethodCounts {
            get: tally.get.load(Ordering::Relaxed),
            post: tally.post.load(Ordering::Relaxed),
            put: tally.put.load(Ordering::Relaxed),
            delete: tally.delete.load(Ordering::Relaxed),
        },
        error_count: tally.errors.load(Ordering::Relaxed),
        wall_runtime_s,
        started_at,
        ended_at: chrono::Utc::now(),
    })
}

fn run_worker(
    group: &super::OperationGroup,
    worker_index: u32,
    base_url: &str,
    client: &reqwest::blocking::Client,
    tally: &Tally,
    abort: &AtomicBool,
    abort_reason: &Mutex<Option<WorkloadError>>,
) {
    let mut vars: BTreeMap<String, String> = BTreeMap::new();
    vars.insert("worker".into(), worker_index.to_string());
    let mut first_request = true;

    for loop_index in 0..group.loops {
        vars.insert("loop".into(), loop_index.to_string());
        vars.insert(
            "uniq".into(),
            (worker_index as u64 * group.loops as u64 + loop_index as u64).to_string(),
        );
        for step in &group.steps {
            if abort.load(Ordering::SeqCst) {
                return;
            }
            // Validation guarantees placeholders resolve; captures that
            // failed at runtime resolve to an empty string.
            let path = resolve_or_empty(&step.path, &vars);
            let url = format!("{base_url}{path}");
            let mut request = match step.method {
                Method::Get => client.get(&url),
                Method::Post => client.post(&url),
                Method::Put => client.put(&url),
                Method::Delete => client.delete(&url),
            };
            if let Some(body) = &step.body {
                request = request
                    .header("content-type", "application/json")
                    .body(resolve_or_empty(body, &vars));
            }

            tally.bump(step.method);
            match request.send() {
                Ok(response) => {
                    let success = response.status().is_success();
                    if step.expect == StatusExpectation::Success && !success {
                        tally.errors.fetch_add(1, Ordering::Relaxed);
                    }
                    if let Some(capture) = &step.capture {
                        let captured = response
                            .json::<serde_json::Value>()
                            .ok()
                            .as_ref()
                            .and_then(|body| lookup_field(body, &capture.field))
                            .map(json_scalar_to_string);
                        match captured {
                            Some(value) => {
                                vars.insert(capture.var.clone(), value);
                            }
                            None => {
                                tally.errors.fetch_add(1, Ordering::Relaxed);
                                vars.insert(capture.var.clone(), String::new());
                            }
                        }
                    }
                }
                Err(error) => {
                    if first_request {
                        *abort_reason.lock().expect("abort reason lock") =
                            Some(WorkloadError::Transport {
                                group: group.name.clone(),
                                message: error.to_string(),
                            });
                        abort.store(true, Ordering::SeqCst);
                        return;
                    }
                    tally.errors.fetch_add(1, Ordering::Relaxed);
                }
            }
            first_request = false;

            if step.delay_ms > 0 {
                std::thread::sleep(Duration::from_millis(step.delay_ms));
            }
        }
    }
}

fn resolve_or_empty(template: &str, vars: &BTreeMap<String, String>) -> String {
    let mut out = template.to_string();
    for name in super::placeholders(template) {
        let value = vars.get(&name).map(String::as_str).unwrap_or("");
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

fn lookup_field<'a>(body: &'a serde_json::Value, dotted: &str) -> Option<&'a serde_json::Value> {
    let mut current = body;
    for key in dotted.split('.') {
        current = match current {
            serde_json::Value::Object(map) => map.get(key)?,
            serde_json::Value::Array(items) => items.get(key.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(current)
}

fn json_scalar_to_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
