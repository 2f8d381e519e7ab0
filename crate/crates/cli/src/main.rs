//! Command-line driver: plan, run, analyze, report and simulate energy
//! benchmark campaigns from one experiment file.
//!
//! Exit codes: 0 success, 1 at least one run failed, 2 configuration or
//! input error, 3 energy source unavailable, 4 analysis infeasible.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use wattbench_core::experiment::{load_experiment, Experiment};
use wattbench_core::matrix::RunOrdering;
use wattbench_core::orchestrator::{self, load_records, RunContext};
use wattbench_core::report::{analyze, render, AnalysisReport, AnalyzeOptions, ReportFormat};
use wattbench_core::simulate::simulate_campaign;
use wattbench_core::workload::total_requests;

const EXIT_RUN_FAILURES: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_SOURCE: i32 = 3;
const EXIT_ANALYSIS: i32 = 4;

#[derive(Parser)]
#[command(
    name = "wattbench",
    version,
    about = "Measure how software stack substitutions change application energy use"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate configurations and show the run plan without side effects.
    Plan(PlanArgs),
    /// Execute the full benchmark campaign and append measurements to a CSV.
    Run(RunArgs),
    /// Evaluate a measurement CSV and print the comparison tables.
    Analyze(AnalyzeArgs),
    /// Evaluate a measurement CSV and write report files.
    Report(AnalyzeArgs),
    /// Run the campaign synthetically (simulated energy, no external
    /// processes) and produce CSV plus report.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ExperimentArg {
    /// Experiment file (TOML).
    #[arg(long)]
    experiment: PathBuf,
    /// Override run.iterations.
    #[arg(long)]
    iterations: Option<u32>,
    /// Override run.ordering (blocked | round-robin).
    #[arg(long)]
    ordering: Option<String>,
}

impl ExperimentArg {
    fn load(&self) -> Result<Experiment, Failure> {
        let mut experiment = load_experiment(&self.experiment)
            .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        if let Some(iterations) = self.iterations {
            if iterations < 1 {
                return Err(Failure::new(EXIT_CONFIG, "iterations must be >= 1".into()));
            }
            experiment.iterations = iterations;
        }
        if let Some(ordering) = &self.ordering {
            experiment.ordering = ordering
                .parse::<RunOrdering>()
                .map_err(|e| Failure::new(EXIT_CONFIG, e))?;
        }
        Ok(experiment)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    experiment: ExperimentArg,
    /// Print the plan as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArg,
    /// Measurement CSV to write (appended, crash-safe).
    #[arg(long)]
    out: PathBuf,
    /// Skip (config, iteration) pairs already present in the CSV.
    #[arg(long)]
    resume: bool,
    /// Open the energy window before the readiness wait, charging
    /// application startup to the measurement.
    #[arg(long)]
    include_startup: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Measurement CSV produced by `run` or `simulate`.
    #[arg(long)]
    csv: PathBuf,
    /// Dimension whose values form the compared groups.
    #[arg(long)]
    group_by: String,
    /// Hold a dimension fixed, e.g. --fix jvm=21 (repeatable).
    #[arg(long = "fix", value_name = "DIM=VALUE")]
    fixed: Vec<String>,
    /// Report formats to write (json, csv, svg). `analyze` writes none by
    /// default; `report` writes all three.
    #[arg(long, value_delimiter = ',')]
    formats: Option<Vec<String>>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Significance threshold for adjusted p-values.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Fraction of wall-clock time the extrapolated host is under load.
    #[arg(long, default_value_t = 1.0)]
    duty_cycle: f64,
    /// Grid carbon intensity in gCO2 per kWh for footprint estimates.
    #[arg(long, default_value_t = 300.0)]
    carbon_intensity: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    experiment: ExperimentArg,
    /// Output directory (measurements.csv plus report files).
    #[arg(long)]
    out: PathBuf,
    /// Override the simulated source seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dimension to group the report by; defaults to the first dimension.
    #[arg(long)]
    group_by: Option<String>,
    /// Report formats to write.
    #[arg(long, value_delimiter = ',', default_values_t = ["json".to_string(), "csv".to_string(), "svg".to_string()])]
    formats: Vec<String>,
    /// Resume an interrupted synthetic campaign.
    #[arg(long)]
    resume: bool,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: String) -> Self {
        Self { code, message }
    }
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("WATTBENCH_LOG", "info")
            .write_style("WATTBENCH_LOG_STYLE"),
    )
    .format_timestamp_millis()
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(args) => cmd_plan(args),
        Command::Run(args) => cmd_run(args),
        Command::Analyze(args) => cmd_analyze(args, false),
        Command::Report(args) => cmd_analyze(args, true),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => {}
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn cmd_plan(args: PlanArgs) -> Result<(), Failure> {
    let experiment = args.experiment.load()?;
    let configs = experiment.enumerate_configs();
    let runs = configs.len() * experiment.iterations as usize;
    let ordering = match experiment.ordering {
        RunOrdering::Blocked => "blocked",
        RunOrdering::RoundRobin => "round-robin",
    };

    if args.json {
        let value = serde_json::json!({
            "configurations": configs.iter().map(|c| {
                serde_json::json!({
                    "id": c.id,
                    "assignments": c.assignments.iter().map(|(k, v)| {
                        (k.clone(), serde_json::Value::String(v.clone()))
                    }).collect::<serde_json::Map<String, serde_json::Value>>(),
                })
            }).collect::<Vec<_>>(),
            "iterations_per_config": experiment.iterations,
            "ordering": ordering,
            "total_runs": runs,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("serialize plan")
        );
        return Ok(());
    }

    let names = experiment.dimension_names();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(12);
    println!(
        "{:<4} {}",
        "#",
        names
            .iter()
            .map(|n| format!("{n:<width$}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    for (index, config) in configs.iter().enumerate() {
        let row: Vec<String> = config
            .assignments
            .iter()
            .map(|(_, v)| format!("{v:<width$}"))
            .collect();
        println!("{:<4} {}", index + 1, row.join(" "));
    }
    println!(
        "{} configuration{}, {runs} run{} ({} iterations each, {ordering} ordering)",
        configs.len(),
        if configs.len() == 1 { "" } else { "s" },
        if runs == 1 { "" } else { "s" },
        experiment.iterations,
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut experiment = args.experiment.load()?;
    if args.include_startup {
        experiment.lifecycle.include_startup = true;
    }

    experiment
        .energy
        .check_available()
        .map_err(|e| Failure::new(EXIT_SOURCE, e.to_string()))?;

    let plan = experiment
        .load_plan()
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let run_plan = experiment
        .build_run_plan()
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let base_url = experiment.effective_base_url(&plan);

    let ctx = RunContext {
        lifecycle: &experiment.lifecycle,
        plan: &plan,
        base_url: &base_url,
        source: &experiment.energy,
        sampling_period: Duration::from_millis(experiment.sampling_period_ms.max(1)),
        host: experiment.host(),
        dimensions: &experiment.dimensions,
    };
    let summary = orchestrator::run_plan(&run_plan.entries, &ctx, &args.out, args.resume)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    println!(
        "{} ok, {} failed, {} skipped -> {}",
        summary.ok,
        summary.failed,
        summary.skipped,
        args.out.display()
    );
    if summary.failed > 0 {
        return Err(Failure::new(
            EXIT_RUN_FAILURES,
            format!("{} runs failed", summary.failed),
        ));
    }
    Ok(())
}

fn parse_fixed(fixed: &[String]) -> Result<Vec<(String, String)>, Failure> {
    fixed
        .iter()
        .map(|entry| {
            entry
                .split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| {
                    Failure::new(EXIT_CONFIG, format!("--fix needs DIM=VALUE, got {entry:?}"))
                })
        })
        .collect()
}

fn parse_formats(formats: &[String]) -> Result<Vec<ReportFormat>, Failure> {
    formats
        .iter()
        .map(|f| {
            f.parse::<ReportFormat>()
                .map_err(|e| Failure::new(EXIT_CONFIG, e))
        })
        .collect()
}

fn cmd_analyze(args: AnalyzeArgs, is_report: bool) -> Result<(), Failure> {
    let (records, _dims) =
        load_records(&args.csv).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let fixed = parse_fixed(&args.fixed)?;
    let options = AnalyzeOptions {
        alpha: args.alpha,
        duty_cycle: args.duty_cycle,
        carbon_intensity_g_per_kwh: args.carbon_intensity,
    };
    let report = analyze(&records, &args.group_by, &fixed, &options)
        .map_err(|e| Failure::new(EXIT_ANALYSIS, e.to_string()))?;

    print_report_summary(&report);

    let default_formats = if is_report {
        vec!["json".to_string(), "csv".to_string(), "svg".to_string()]
    } else {
        Vec::new()
    };
    let formats = parse_formats(args.formats.as_deref().unwrap_or(&default_formats))?;
    if !formats.is_empty() {
        let out_dir = args.out.clone().ok_or_else(|| {
            Failure::new(
                EXIT_CONFIG,
                "--out is required when writing report files".into(),
            )
        })?;
        let manifest = render(&report, &formats, &out_dir)
            .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
        for path in manifest {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn print_report_summary(report: &AnalysisReport) {
    println!(
        "groups by {} ({}): {}",
        report.grouping.group_by,
        if report.grouping.fixed.is_empty() {
            "nothing fixed".to_string()
        } else {
            report
                .grouping
                .fixed
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ")
        },
        report
            .groups
            .iter()
            .map(|g| format!("{} (n={}->{})", g.label, g.n_raw, g.n_clean))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!(
        "Kruskal-Wallis H = {:.4}, df = {}, p = {:.3e}",
        report.omnibus.h_statistic, report.omnibus.df, report.omnibus.p_value
    );
    println!(
        "{:<28} {:>12} {:>12} {:>8}  significant",
        "pair", "raw p", "holm p", "delta"
    );
    for pair in &report.pairwise {
        println!(
            "{:<28} {:>12.3e} {:>12.3e} {:>8.3}  {}",
            format!("{} vs {}", pair.label_a, pair.label_b),
            pair.raw_p,
            pair.adjusted_p,
            pair.cliffs_delta,
            if pair.significant { "yes" } else { "no" }
        );
    }
    for footprint in &report.footprints {
        println!(
            "footprint {}: {:.1} runs/day, {:.1} Wh/day, {:.1} kWh/year, {:.1} kg CO2/year",
            footprint.label.as_deref().unwrap_or("-"),
            footprint.runs_per_day,
            footprint.energy_wh_per_day,
            footprint.energy_kwh_per_year,
            footprint.co2_kg_per_year
        );
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let experiment = args.experiment.load()?;
    if experiment.simulated_config().is_none() {
        return Err(Failure::new(
            EXIT_CONFIG,
            "simulate requires energy.kind = \"simulated\"".into(),
        ));
    }
    let plan = experiment
        .load_plan()
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let counts = total_requests(&plan);
    log::info!(
        "synthetic workload: {} requests per run (GET {}, POST {}, PUT {}, DELETE {})",
        counts.total(),
        counts.get,
        counts.post,
        counts.put,
        counts.delete
    );

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", args.out.display())))?;
    let csv_path = args.out.join("measurements.csv");
    let summary = simulate_campaign(&experiment, &csv_path, args.resume, args.seed)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    println!(
        "{} ok, {} failed, {} skipped -> {}",
        summary.ok,
        summary.failed,
        summary.skipped,
        csv_path.display()
    );

    let group_by = args
        .group_by
        .clone()
        .or_else(|| experiment.dimensions.first().map(|d| d.name.clone()))
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "experiment has no dimensions".into()))?;
    let (records, _) =
        load_records(&csv_path).map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    let report = analyze(
        &records,
        &group_by,
        &[],
        &AnalyzeOptions {
            alpha: args.alpha,
            ..Default::default()
        },
    )
    .map_err(|e| Failure::new(EXIT_ANALYSIS, e.to_string()))?;
    print_report_summary(&report);

    let formats = parse_formats(&args.formats)?;
    let manifest = render(&report, &formats, &args.out)
        .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    for path in manifest {
        println!("wrote {}", path.display());
    }
    if summary.failed > 0 {
        return Err(Failure::new(
            EXIT_RUN_FAILURES,
            format!("{} synthetic runs failed", summary.failed),
        ));
    }
    Ok(())
}
