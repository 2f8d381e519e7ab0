//! Acceptance suite: one test per criterion, each printing a PASS line and
//! holding its stated runtime budget.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::{assert_close, load_oracle_datasets, load_oracle_expectations};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wattbench_core::energy::{
    delta_energy, integrate_session, EnergyReading, EnergySample, EnergySourceDescriptor,
    SimulatedConfig,
};
use wattbench_core::experiment::Experiment;
use wattbench_core::matrix::{Dimension, RunOrdering};
use wattbench_core::orchestrator::RunLifecycle;
use wattbench_core::report::{analyze, AnalyzeOptions};
use wattbench_core::simulate::simulate_campaign;
use wattbench_core::stats::{
    cliffs_delta, conover_pairwise, holm_adjust, kruskal_wallis, pearson, quartiles, shapiro_wilk,
    SampleGroup,
};
use wattbench_core::workload::{
    execute_plan, load_test_plan, total_requests, StubOptions, StubServer,
};

fn examples_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../examples")
}

fn pass(number: u32, name: &str) {
    println!("ACCEPTANCE {number:02} {name}: PASS");
}

/// Criterion 1: attributed joules equal share x system energy within 1e-6
/// relative on 1000 randomized sample streams, with conservation throughout.
#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_01_attribution_equation_exactness() {
    let begun = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let steps = rng.random_range(2..40);
        let n_targets = rng.random_range(1..4);
        let mut counter: u64 = rng.random_range(0..10_000_000);
        let mut total_ticks: u64 = rng.random_range(0..1000);
        let mut per_ticks: Vec<u64> = (0..n_targets).map(|_| rng.random_range(0..100)).collect();
        let mut expected: Vec<f64> = vec![0.0; n_targets];
        let mut expected_system = 0.0f64;
        let mut samples = Vec::new();

        for step in 0..=steps {
            if step > 0 {
                let energy_uj: u64 = rng.random_range(0..5_000_000);
                counter += energy_uj;
                expected_system += energy_uj as f64 * 1e-6;
                let total_delta: u64 = rng.random_range(0..2000);
                total_ticks += total_delta;
                let mut remaining = total_delta;
                for t in 0..n_targets {
                    let take = rng.random_range(0..=remaining);
                    per_ticks[t] += take;
                    remaining -= take;
                    if total_delta > 0 {
                        // Independent evaluation of the share formula.
                        let share = take as f64 / total_delta as f64;
                        expected[t] += share * (energy_uj as f64 * 1e-6);
                    }
                }
            }
            samples.push(EnergySample {
                reading: EnergyReading {
                    counter_uj: counter,
                    max_range_uj: u64::MAX,
                    timestamp_ns: step as u64 + 1,
                },
                target_cpu_ticks: (0..n_targets)
                    .map(|t| (format!("t{t}"), per_ticks[t]))
                    .collect(),
                total_cpu_ticks: total_ticks,
                dead_targets: Default::default(),
            });
        }

        let result = integrate_session(&samples).unwrap();
        for t in 0..n_targets {
            let actual = result.per_target_joules[&format!("t{t}")];
            let tol = 1e-6 * expected[t].abs().max(1e-9);
            assert!(
                (actual - expected[t]).abs() <= tol,
                "target t{t}: {actual} vs {}",
                expected[t]
            );
        }
        let attributed: f64 = result.per_target_joules.values().sum();
        assert!(
            attributed <= result.system_joules * (1.0 + 1e-9) + 1e-12,
            "conservation violated"
        );
        assert!((result.system_joules - expected_system).abs() <= 1e-6 * expected_system.max(1e-9));
    }
    assert!(begun.elapsed() < Duration::from_secs(10), "budget exceeded");
    pass(1, "attribution equation exactness (1000 streams)");
}

/// Criterion 2: delta_energy agrees exactly with stepping the counter one
/// microjoule at a time over 10,000 random (prev, curr, range) triples.
#[test]
fn criterion_02_counter_wraparound() {
    let begun = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..10_000 {
        let range: u64 = rng.random_range(2..3000);
        let prev: u64 = rng.random_range(0..range);
        let curr: u64 = rng.random_range(0..range);
        let joules = delta_energy(
            &EnergyReading {
                counter_uj: prev,
                max_range_uj: range,
                timestamp_ns: 0,
            },
            &EnergyReading {
                counter_uj: curr,
                max_range_uj: range,
                timestamp_ns: 1,
            },
        )
        .unwrap();
        // Brute force: step one microjoule at a time, wrapping at range.
        let mut c = prev;
        let mut steps: u64 = 0;
        while c != curr {
            c += 1;
            if c == range {
                c = 0;
            }
            steps += 1;
        }
        let actual_uj = (joules * 1e6).round() as u64;
        assert_eq!(actual_uj, steps, "prev={prev} curr={curr} range={range}");
    }
    assert!(begun.elapsed() < Duration::from_secs(1), "budget exceeded");
    pass(2, "counter wraparound vs step simulation (10,000 triples)");
}

/// Criterion 3: every statistic matches the frozen reference fixtures within
/// 1e-8 relative on the 20 seeded datasets.
#[test]
fn criterion_03_statistics_oracle_parity() {
    let begun = Instant::now();
    let datasets = load_oracle_datasets();
    let expectations = load_oracle_expectations();
    let mut checked_datasets = 0;

    for (name, dataset) in &datasets {
        if dataset.groups.len() < 2 {
            continue;
        }
        checked_datasets += 1;
        let expected = &expectations[name];
        let groups: Vec<SampleGroup> = dataset
            .groups
            .iter()
            .map(|(label, values)| SampleGroup::new(label.clone(), values.clone()))
            .collect();

        for (label, values) in &dataset.groups {
            let w = shapiro_wilk(values).unwrap().w_statistic;
            assert_close(
                w,
                expected[&("sw_w".into(), label.clone(), String::new())],
                1e-8,
                &format!("{name}/{label} W"),
            );
        }
        let omnibus = kruskal_wallis(&groups).unwrap();
        assert_close(
            omnibus.h_statistic,
            expected[&("kw_h".into(), String::new(), String::new())],
            1e-8,
            &format!("{name} H"),
        );
        let comparisons = conover_pairwise(&groups, &omnibus).unwrap();
        let adjusted =
            holm_adjust(&comparisons.iter().map(|c| c.raw_p).collect::<Vec<_>>()).unwrap();
        for (comparison, adjusted_p) in comparisons.iter().zip(&adjusted) {
            let key = |stat: &str| {
                (
                    stat.to_string(),
                    comparison.label_a.clone(),
                    comparison.label_b.clone(),
                )
            };
            assert_close(
                comparison.raw_p,
                expected[&key("conover_p")],
                1e-8,
                &format!("{name} conover"),
            );
            assert_close(
                *adjusted_p,
                expected[&key("holm_p")],
                1e-8,
                &format!("{name} holm"),
            );
            let delta = cliffs_delta(
                dataset.group(&comparison.label_a),
                dataset.group(&comparison.label_b),
            )
            .unwrap();
            assert_close(
                delta,
                expected[&key("cliffs_delta")],
                1e-8,
                &format!("{name} delta"),
            );
        }
        let correlation = pearson(&dataset.x, &dataset.y).unwrap();
        assert_close(
            correlation.r,
            expected[&("pearson_r".into(), String::new(), String::new())],
            1e-8,
            &format!("{name} r"),
        );
        assert_close(
            correlation.p_value,
            expected[&("pearson_p".into(), String::new(), String::new())],
            1e-8,
            &format!("{name} r p-value"),
        );
    }
    assert_eq!(checked_datasets, 20);
    assert!(begun.elapsed() < Duration::from_secs(5), "budget exceeded");
    pass(3, "statistics oracle parity (20 frozen datasets)");
}

/// Criterion 4: the hand-derivable fixtures.
#[test]
fn criterion_04_hand_derivable_fixtures() {
    let omnibus = kruskal_wallis(&[
        SampleGroup::new("a", vec![1.0, 2.0, 3.0]),
        SampleGroup::new("b", vec![4.0, 5.0, 6.0]),
    ])
    .unwrap();
    assert!((omnibus.h_statistic - 3.857).abs() <= 1e-3);
    assert!((omnibus.p_value - 0.0495).abs() <= 1e-3);

    let adjusted = holm_adjust(&[0.01, 0.02, 0.03]).unwrap();
    assert_eq!(adjusted, vec![0.03, 0.04, 0.04]);

    assert_eq!(cliffs_delta(&[1.0, 3.0], &[2.0, 4.0]).unwrap(), -0.5);

    let mut values: Vec<f64> = (1..=9).map(f64::from).collect();
    values.push(100.0);
    let summary = quartiles(&values).unwrap();
    assert_eq!(summary.lower_fence, -3.5);
    assert_eq!(summary.upper_fence, 14.5);

    pass(4, "hand-derivable fixtures");
}

/// Criterion 5: the footprint chain reproduces its reference outputs
/// (17 kJ per 378 s run, continuous duty, 300 g/kWh) within 1%.
#[test]
fn criterion_05_footprint_extrapolation() {
    let estimate =
        wattbench_core::report::extrapolate_footprint(17_000.0, 378.0, 1.0, 300.0).unwrap();
    assert!((estimate.runs_per_day - 228.6).abs() / 228.6 < 0.01);
    assert!((estimate.energy_kwh_per_year - 394.0).abs() / 394.0 < 0.01);
    assert!((estimate.co2_kg_per_year - 118.0).abs() / 118.0 < 0.01);
    pass(5, "footprint extrapolation anchors");
}

/// Criterion 6: the shipped reference experiment enumerates 11
/// configurations and a 1100-entry run plan.
#[test]
fn criterion_06_reference_matrix() {
    let experiment =
        wattbench_core::load_experiment(&examples_dir().join("petclinic-matrix.toml")).unwrap();
    assert_eq!(experiment.dimensions.len(), 2);
    assert_eq!(experiment.rules.len(), 3);
    assert_eq!(experiment.iterations, 100);
    let configs = experiment.enumerate_configs();
    assert_eq!(configs.len(), 11);
    let plan = experiment.build_run_plan().unwrap();
    assert_eq!(plan.entries.len(), 1100);
    pass(6, "reference matrix enumerates 11 configs / 1100 runs");
}

/// Criterion 7: the shipped test plan counts 5500/2000/2000/2000 requests and
/// executing it against the bundled stub performs exactly those counts.
#[test]
fn criterion_07_reference_workload_counts() {
    let plan = load_test_plan(&examples_dir().join("petclinic-plan.toml")).unwrap();
    assert_eq!(plan.groups.len(), 4);
    let declared = total_requests(&plan);
    assert_eq!(declared.get, 5500);
    assert_eq!(declared.post, 2000);
    assert_eq!(declared.put, 2000);
    assert_eq!(declared.delete, 2000);
    assert_eq!(declared.total(), 11_500);

    let stub = StubServer::start(StubOptions::default()).unwrap();
    let summary = execute_plan(&plan, &stub.base_url()).unwrap();
    assert_eq!(summary.counts, declared, "client-side counts");
    assert_eq!(stub.counts(), declared, "server-side counts");
    assert_eq!(summary.error_count, 0);
    assert!(summary.wall_runtime_s > 0.0);
    pass(7, "reference workload executes 11,500 requests exactly");
}

fn synthetic_experiment(
    dir: &Path,
    values: &[&str],
    offsets: &[(&str, f64)],
    seed: u64,
) -> Experiment {
    let plan_path = dir.join("plan.toml");
    if !plan_path.exists() {
        std::fs::write(
            &plan_path,
            "[[groups]]\nname = \"g\"\nworkers = 1\nloops = 1\n[[groups.steps]]\nmethod = \"GET\"\npath = \"/\"\n",
        )
        .unwrap();
    }
    let mut config = SimulatedConfig {
        base_power_w: 10.0,
        noise: 0.02,
        seed,
        target_share: 0.5,
        base_runtime_s: 2.0,
        runtime_jitter: 0.05,
        ..Default::default()
    };
    for (id, watts) in offsets {
        config.power_offsets_w.insert(id.to_string(), *watts);
    }
    Experiment {
        dimensions: vec![Dimension::new("variant", values)],
        rules: vec![],
        iterations: 30,
        ordering: RunOrdering::Blocked,
        lifecycle: RunLifecycle {
            cooldown_s: 0.0,
            ..Default::default()
        },
        plan_path,
        base_url: None,
        energy: EnergySourceDescriptor::Simulated(config),
        sampling_period_ms: 100,
        host_label: Some("acceptance".into()),
    }
}

/// Criterion 8: a +10% planted effect is detected (adjusted p < 0.05, delta >
/// 0.5) and the null profile stays quiet in at least 90% of 20 seeds.
#[test]
fn criterion_08_end_to_end_planted_effect() {
    let begun = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    // Planted effect: variant B at +1 W on a 10 W base.
    let experiment = synthetic_experiment(dir.path(), &["A", "B"], &[("variant=B", 1.0)], 42);
    let csv = dir.path().join("planted.csv");
    let summary = simulate_campaign(&experiment, &csv, false, None).unwrap();
    assert_eq!(summary.ok, 60);
    let (records, _) = wattbench_core::orchestrator::load_records(&csv).unwrap();
    let report = analyze(&records, "variant", &[], &AnalyzeOptions::default()).unwrap();
    let pair = &report.pairwise[0];
    assert!(pair.significant, "adjusted p = {}", pair.adjusted_p);
    let delta_b_vs_a = if pair.label_a == "B" {
        pair.cliffs_delta
    } else {
        -pair.cliffs_delta
    };
    assert!(delta_b_vs_a > 0.5, "delta(B, A) = {delta_b_vs_a}");

    // Null profile: equal power everywhere, 20 fixed seeds, three variants.
    let mut clean_seeds = 0;
    for seed in 0..20u64 {
        let experiment = synthetic_experiment(dir.path(), &["A", "B", "C"], &[], seed);
        let csv = dir.path().join(format!("null-{seed}.csv"));
        simulate_campaign(&experiment, &csv, false, Some(seed)).unwrap();
        let (records, _) = wattbench_core::orchestrator::load_records(&csv).unwrap();
        let report = analyze(&records, "variant", &[], &AnalyzeOptions::default()).unwrap();
        if report.pairwise.iter().all(|p| !p.significant) {
            clean_seeds += 1;
        }
    }
    assert!(
        clean_seeds >= 18,
        "false positives in {} of 20 null seeds",
        20 - clean_seeds
    );
    assert!(begun.elapsed() < Duration::from_secs(60), "budget exceeded");
    pass(8, "planted effect detected, null profile quiet");
}

/// Criterion 9: every generated heatmap is exactly skew-symmetric and shades
/// all cells with adjusted p >= 0.05.
#[test]
fn criterion_09_heatmap_invariants() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, offsets) in [
        (5u64, vec![]),
        (6, vec![("variant=B", 1.0)]),
        (7, vec![("variant=B", 0.2), ("variant=C", 1.5)]),
    ] {
        let experiment = synthetic_experiment(dir.path(), &["A", "B", "C"], &offsets, seed);
        let csv = dir.path().join(format!("heatmap-{seed}.csv"));
        simulate_campaign(&experiment, &csv, false, None).unwrap();
        let (records, _) = wattbench_core::orchestrator::load_records(&csv).unwrap();
        let report = analyze(&records, "variant", &[], &AnalyzeOptions::default()).unwrap();
        let heatmap = &report.heatmap;
        let k = heatmap.labels.len();
        assert_eq!(k, 3);
        for i in 0..k {
            assert!(heatmap.cells[i][i].is_none(), "diagonal must stay empty");
            for j in 0..k {
                if i == j {
                    continue;
                }
                let cell = heatmap.cells[i][j].expect("off-diagonal filled");
                let mirror = heatmap.cells[j][i].expect("off-diagonal filled");
                assert_eq!(cell.delta + mirror.delta, 0.0, "exact skew-symmetry");
                assert_eq!(cell.significant, mirror.significant);
                assert_eq!(cell.adjusted_p, mirror.adjusted_p);
                assert_eq!(
                    cell.significant,
                    cell.adjusted_p < 0.05,
                    "shading must follow adjusted p"
                );
            }
        }
    }
    pass(9, "heatmap skew-symmetry and shading");
}

/// Criterion 10: interrupting a campaign after k rows and resuming yields a
/// CSV with exactly the rows of an uninterrupted campaign.
#[test]
fn criterion_10_resume_safety() {
    let dir = tempfile::tempdir().unwrap();
    let experiment = synthetic_experiment(dir.path(), &["A", "B"], &[("variant=B", 1.0)], 77);

    let full = dir.path().join("full.csv");
    simulate_campaign(&experiment, &full, false, None).unwrap();
    let full_bytes = std::fs::read_to_string(&full).unwrap();

    // Interrupt after k data rows: truncate a copy, then resume it.
    for k in [1usize, 7, 59] {
        let resumed = dir.path().join(format!("resumed-{k}.csv"));
        let truncated: Vec<&str> = full_bytes.lines().take(1 + k).collect();
        std::fs::write(&resumed, truncated.join("\n") + "\n").unwrap();
        let summary = simulate_campaign(&experiment, &resumed, true, None).unwrap();
        assert_eq!(summary.skipped, k);
        assert_eq!(summary.ok, 60 - k);
        let resumed_bytes = std::fs::read_to_string(&resumed).unwrap();
        assert_eq!(resumed_bytes, full_bytes, "row sets (and bytes) identical");
    }
    pass(10, "resume reproduces the uninterrupted CSV");
}
