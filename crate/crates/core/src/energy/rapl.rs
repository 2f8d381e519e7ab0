//! Linux powercap (RAPL) counter source and /proc CPU accounting.
//!
//! Reads cumulative microjoule counters from
//! `/sys/class/powercap/intel-rapl:<n>/energy_uj` (the sibling
//! `max_energy_range_uj` gives the wrap limit) and books CPU time from
//! `/proc/<pid>/stat` plus the aggregate `cpu` line of `/proc/stat`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{EnergyError, EnergyReading, EnergySample, EnergySource, Target, TargetKind};

pub struct RaplSource {
    counters: Vec<Counter>,
    anchor: Instant,
    last_timestamp_ns: u64,
    /// Last observed ticks per target; frozen when a process vanishes.
    last_ticks: BTreeMap<String, u64>,
}

struct Counter {
    energy_path: PathBuf,
    max_range_uj: u64,
}

/// Verifies every counter file is present and readable.
pub fn check_paths(paths: &[PathBuf]) -> Result<(), EnergyError> {
    if paths.is_empty() {
        return Err(EnergyError::SourceUnavailable {
            path: "<none>".into(),
            reason: "no counter paths configured".into(),
        });
    }
    for path in paths {
        read_counter_file(path)?;
        read_counter_file(&max_range_path(path))?;
    }
    Ok(())
}

fn max_range_path(energy_path: &Path) -> PathBuf {
    energy_path.with_file_name("max_energy_range_uj")
}

fn read_counter_file(path: &Path) -> Result<u64, EnergyError> {
    let text = fs::read_to_string(path).map_err(|e| EnergyError::SourceUnavailable {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.trim()
        .parse()
        .map_err(|e| EnergyError::SourceUnavailable {
            path: path.display().to_string(),
            reason: format!("unparseable counter: {e}"),
        })
}

impl RaplSource {
    pub fn open(paths: &[PathBuf]) -> Result<Self, EnergyError> {
        check_paths(paths)?;
        let mut counters = Vec::with_capacity(paths.len());
        for path in paths {
            let max_range_uj = read_counter_file(&max_range_path(path))?;
            counters.push(Counter {
                energy_path: path.clone(),
                max_range_uj,
            });
        }
        Ok(Self {
            counters,
            anchor: Instant::now(),
            last_timestamp_ns: 0,
            last_ticks: BTreeMap::new(),
        })
    }

    fn timestamp_ns(&mut self) -> u64 {
        let now = self.anchor.elapsed().as_nanos() as u64;
        // Monotonic clocks may tick coarsely; keep readings strictly ordered.
        self.last_timestamp_ns = now.max(self.last_timestamp_ns + 1);
        self.last_timestamp_ns
    }
}

impl EnergySource for RaplSource {
    fn read(&mut self) -> Result<EnergyReading, EnergyError> {
        let mut counter_uj: u64 = 0;
        let mut max_range_uj: u64 = 0;
        for counter in &self.counters {
            counter_uj += read_counter_file(&counter.energy_path)?;
            max_range_uj += counter.max_range_uj;
        }
        Ok(EnergyReading {
            counter_uj,
            max_range_uj,
            timestamp_ns: self.timestamp_ns(),
        })
    }

    fn sample(&mut self, targets: &[Target]) -> Result<EnergySample, EnergyError> {
        let reading = self.read()?;
        let total_cpu_ticks = host_busy_ticks()?;
        let mut target_cpu_ticks = BTreeMap::new();
        let mut dead_targets = std::collections::BTreeSet::new();
        for target in targets {
            let pid = match target.kind {
                TargetKind::Process(pid) => pid,
                TargetKind::Simulated => {
                    // A simulated target measured against a real source has no
                    // process to account; it reads as permanently idle.
                    target_cpu_ticks.insert(target.id.clone(), 0);
                    continue;
                }
            };
            match process_tree_ticks(pid) {
                Some(ticks) => {
                    let entry = self.last_ticks.entry(target.id.clone()).or_insert(0);
                    // CPU time is cumulative; never let a racy /proc walk
                    // (e.g. a child exiting mid-scan) move it backwards.
                    *entry = (*entry).max(ticks);
                    target_cpu_ticks.insert(target.id.clone(), *entry);
                }
                None => {
                    let frozen = self.last_ticks.get(&target.id).copied().unwrap_or(0);
                    target_cpu_ticks.insert(target.id.clone(), frozen);
                    dead_targets.insert(target.id.clone());
                }
            }
        }
        Ok(EnergySample {
            reading,
            target_cpu_ticks,
            total_cpu_ticks,
            dead_targets,
        })
    }

    fn advance(&mut self, _dt_s: f64) {
        // Real counters follow wall time.
    }
}

/// Busy CPU ticks of the whole host: user+nice+system+irq+softirq+steal from
/// the aggregate `cpu` line. Idle and iowait are excluded so an idle host
/// books no CPU time and interval energy stays unattributed.
pub fn host_busy_ticks() -> Result<u64, EnergyError> {
    let text = fs::read_to_string("/proc/stat").map_err(|e| EnergyError::SourceUnavailable {
        path: "/proc/stat".into(),
        reason: e.to_string(),
    })?;
    let line = text
        .lines()
        .find(|l| l.starts_with("cpu "))
        .ok_or_else(|| EnergyError::SourceUnavailable {
            path: "/proc/stat".into(),
            reason: "no aggregate cpu line".into(),
        })?;
    Ok(parse_busy_ticks(line))
}

fn parse_busy_ticks(cpu_line: &str) -> u64 {
    let fields: Vec<u64> = cpu_line
        .split_whitespace()
        .skip(1)
        .map(|f| f.parse().unwrap_or(0))
        .collect();
    let get = |i: usize| fields.get(i).copied().unwrap_or(0);
    // user nice system idle iowait irq softirq steal
    get(0) + get(1) + get(2) + get(5) + get(6) + get(7)
}

struct ProcStat {
    ppid: u32,
    own_ticks: u64,
    reaped_children_ticks: u64,
}

/// Cumulative user+system ticks of `pid` and all its live descendants, plus
/// the ticks of already-reaped children. Returns `None` when the root process
/// is gone.
pub fn process_tree_ticks(root: u32) -> Option<u64> {
    let mut table: BTreeMap<u32, ProcStat> = BTreeMap::new();
    let entries = fs::read_dir("/proc").ok()?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(pid) = name.to_str().and_then(|s| s.parse::<u32>().ok()) else {
            continue;
        };
        if let Some(stat) = read_proc_stat(pid) {
            table.insert(pid, stat);
        }
    }
    table.get(&root)?;

    let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (&pid, stat) in &table {
        children.entry(stat.ppid).or_default().push(pid);
    }

    let mut sum = 0u64;
    let mut queue = vec![root];
    while let Some(pid) = queue.pop() {
        if let Some(stat) = table.get(&pid) {
            sum += stat.own_ticks + stat.reaped_children_ticks;
        }
        if let Some(kids) = children.get(&pid) {
            queue.extend(kids.iter().copied());
        }
    }
    Some(sum)
}

fn read_proc_stat(pid: u32) -> Option<ProcStat> {
    let text = fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // The comm field may contain spaces and parentheses; fields resume after
    // the last closing paren.
    let rest = &text[text.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // After comm: state(0) ppid(1) ... utime(11) stime(12) cutime(13) cstime(14)
    let ppid = fields.get(1)?.parse().ok()?;
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    let cutime: u64 = fields.get(13)?.parse().ok()?;
    let cstime: u64 = fields.get(14)?.parse().ok()?;
    Some(ProcStat {
        ppid,
        own_ticks: utime + stime,
        reaped_children_ticks: cutime + cstime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_counter_file_names_the_path() {
        let missing = PathBuf::from("/nonexistent/powercap/energy_uj");
        match check_paths(&[missing]) {
            Err(EnergyError::SourceUnavailable { path, .. }) => {
                assert!(path.contains("/nonexistent/powercap/energy_uj"));
            }
            other => panic!("expected SourceUnavailable, got {other:?}"),
        }
    }

    #[test]
    fn empty_path_list_is_unavailable() {
        assert!(check_paths(&[]).is_err());
    }

    #[test]
    fn counter_files_from_tempdir_are_summed() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for (i, (value, range)) in [(5u64, 1000u64), (7, 2000)].iter().enumerate() {
            let sub = dir.path().join(format!("intel-rapl:{i}"));
            fs::create_dir(&sub).unwrap();
            let energy = sub.join("energy_uj");
            fs::write(&energy, format!("{value}\n")).unwrap();
            fs::write(sub.join("max_energy_range_uj"), format!("{range}\n")).unwrap();
            paths.push(energy);
        }
        let mut source = RaplSource::open(&paths).unwrap();
        let reading = source.read().unwrap();
        assert_eq!(reading.counter_uj, 12);
        assert_eq!(reading.max_range_uj, 3000);
    }

    #[test]
    fn own_process_tree_has_ticks() {
        let ticks = process_tree_ticks(std::process::id()).expect("self exists");
        let again = process_tree_ticks(std::process::id()).expect("self exists");
        assert!(again >= ticks);
        assert!(process_tree_ticks(u32::MAX - 1).is_none());
    }

    #[test]
    fn vanished_target_freezes_ticks_and_is_marked_dead() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("intel-rapl:0");
        fs::create_dir(&sub).unwrap();
        let energy = sub.join("energy_uj");
        fs::write(&energy, "100\n").unwrap();
        fs::write(sub.join("max_energy_range_uj"), "1000000\n").unwrap();
        let mut source = RaplSource::open(std::slice::from_ref(&energy)).unwrap();

        let mut child = std::process::Command::new("sleep")
            .arg("30")
            .spawn()
            .unwrap();
        let target = Target::process("app", child.id());
        let targets = std::slice::from_ref(&target);

        let alive = source.sample(targets).unwrap();
        assert!(!alive.dead_targets.contains("app"));
        let frozen_at = alive.target_cpu_ticks["app"];

        child.kill().unwrap();
        child.wait().unwrap();

        let gone = source.sample(targets).unwrap();
        assert!(gone.dead_targets.contains("app"));
        assert_eq!(gone.target_cpu_ticks["app"], frozen_at);
        let still_gone = source.sample(targets).unwrap();
        assert_eq!(still_gone.target_cpu_ticks["app"], frozen_at);
    }

    #[test]
    fn busy_ticks_sum_excludes_idle_and_iowait() {
        // user nice system idle iowait irq softirq steal guest guest_nice
        let line = "cpu  100 5 40 9000 30 2 3 10 0 0";
        assert_eq!(parse_busy_ticks(line), 160);
        assert_eq!(parse_busy_ticks("cpu  7 1 2"), 10);
    }

    #[test]
    fn host_ticks_read_and_stay_monotonic() {
        // Some sandboxed kernels report zeros here; only parse success and
        // monotonicity are portable assertions.
        let a = host_busy_ticks().unwrap();
        let b = host_busy_ticks().unwrap();
        assert!(b >= a);
    }

    /// Smoke test against real powercap counters; enable with
    /// WATTBENCH_RAPL_TEST=1 on hosts that expose them.
    #[test]
    fn rapl_smoke() {
        if std::env::var("WATTBENCH_RAPL_TEST").is_err() {
            return;
        }
        let path = PathBuf::from("/sys/class/powercap/intel-rapl:0/energy_uj");
        let mut source = RaplSource::open(std::slice::from_ref(&path)).unwrap();
        let first = source.read().unwrap();
        std::thread::sleep(std::time::Duration::from_millis(50));
        let second = source.read().unwrap();
        assert!(super::super::delta_energy(&first, &second).unwrap() >= 0.0);
    }
}
