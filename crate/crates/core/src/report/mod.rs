//! Turns cleaned measurements into decision artifacts: per-group boxplot
//! summaries, omnibus and pairwise significance tables, skew-symmetric effect
//! heatmaps, runtime/energy correlations and footprint extrapolations.

mod render;
mod svg;

pub use render::{render, ReportFormat};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::MeasurementRecord;
use crate::stats::{
    self, cliffs_delta, conover_pairwise, holm_adjust, kruskal_wallis, pearson, shapiro_wilk,
    CorrelationResult, NormalityResult, OmnibusResult, PairwiseResult, SampleGroup, StatsError,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("records carry no dimension named {0:?}")]
    UnknownDimension(String),
    #[error("need at least 2 groups to compare, got {got}")]
    TooFewGroups { got: usize },
    #[error("group {label:?} has {n} usable runs ({when}); need at least 4")]
    GroupTooSmall {
        label: String,
        n: usize,
        when: &'static str,
    },
    #[error("no pairwise result for ({a}, {b})")]
    MissingPair { a: String, b: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which dimension varies and which assignments are held fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupingSpec {
    pub group_by: String,
    pub fixed: Vec<(String, String)>,
}

/// Five-number summary with Tukey whiskers (furthest points within the
/// 1.5*IQR fences).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub n: usize,
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
}

/// Everything reported per group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub n_raw: usize,
    pub n_clean: usize,
    pub normality: NormalityResult,
    pub boxplot: BoxplotStats,
    pub mean_joules: f64,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub delta: f64,
    pub adjusted_p: f64,
    pub significant: bool,
}

/// Pairwise effect sizes as a full matrix. `cells[i][j]` compares row i to
/// column j; the diagonal stays empty and the matrix is skew-symmetric in the
/// delta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectHeatmap {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Option<HeatmapCell>>>,
}

/// Yearly energy and emissions if one host ran this workload continuously.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FootprintEstimate {
    pub label: Option<String>,
    pub joules_per_run: f64,
    pub runtime_s: f64,
    pub duty_cycle: f64,
    pub carbon_intensity_g_per_kwh: f64,
    pub runs_per_day: f64,
    pub energy_wh_per_day: f64,
    pub energy_kwh_per_year: f64,
    pub co2_kg_per_year: f64,
}

/// Runtime-vs-joules correlation for one group (or the pooled sample); `None`
/// when the correlation is undefined (constant input or fewer than 3 runs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub label: String,
    pub correlation: Option<CorrelationResult>,
}

/// The complete analysis artifact; serialized as versioned JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub host: String,
    pub grouping: GroupingSpec,
    pub alpha: f64,
    pub groups: Vec<GroupReport>,
    pub omnibus: OmnibusResult,
    pub pairwise: Vec<PairwiseResult>,
    pub heatmap: EffectHeatmap,
    pub correlations: Vec<CorrelationEntry>,
    pub footprints: Vec<FootprintEstimate>,
}

/// Tunables for [`analyze`].
#[derive(Debug, Clone, Copy)]
pub struct AnalyzeOptions {
    /// Significance threshold for adjusted p-values.
    pub alpha: f64,
    /// Fraction of wall-clock time the extrapolated host is under load.
    pub duty_cycle: f64,
    /// Grams of CO2 per kWh for the footprint estimate.
    pub carbon_intensity_g_per_kwh: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            duty_cycle: 1.0,
            carbon_intensity_g_per_kwh: 300.0,
        }
    }
}

/// Runs the evaluation pipeline on ok-status records matching
/// `fixed`: quartile cleaning on both metrics, per-group normality, omnibus
/// test, Conover pairwise with Holm adjustment, effect sizes, boxplots,
/// correlations and footprints. Group order follows first appearance, which
/// reproduces dimension declaration order for plans written by this crate.
pub fn analyze(
    records: &[MeasurementRecord],
    group_by: &str,
    fixed: &[(String, String)],
    options: &AnalyzeOptions,
) -> Result<AnalysisReport, ReportError> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(ReportError::InvalidInput(format!(
            "alpha {} outside (0, 1)",
            options.alpha
        )));
    }
    let usable: Vec<&MeasurementRecord> = records
        .iter()
        .filter(|r| {
            r.is_ok()
                && fixed
                    .iter()
                    .all(|(name, value)| r.dimension_value(name) == Some(value.as_str()))
        })
        .collect();
    if let Some(record) = usable.first() {
        if record.dimension_value(group_by).is_none() {
            return Err(ReportError::UnknownDimension(group_by.to_string()));
        }
    }

    // Group by the varying dimension, in order of first appearance.
    let mut labels: Vec<String> = Vec::new();
    let mut grouped: Vec<Vec<(f64, f64)>> = Vec::new();
    for record in &usable {
        let Some(value) = record.dimension_value(group_by) else {
            return Err(ReportError::UnknownDimension(group_by.to_string()));
        };
        let joules = record.joules.expect("ok record has joules");
        let runtime = record.runtime_s.expect("ok record has runtime");
        match labels.iter().position(|l| l == value) {
            Some(index) => grouped[index].push((joules, runtime)),
            None => {
                labels.push(value.to_string());
                grouped.push(vec![(joules, runtime)]);
            }
        }
    }
    if labels.len() < 2 {
        return Err(ReportError::TooFewGroups { got: labels.len() });
    }

    let host = usable
        .first()
        .map(|r| r.host.clone())
        .unwrap_or_default();

    // Per-group IQR cleaning over both metrics.
    let mut groups = Vec::with_capacity(labels.len());
    let mut joules_groups = Vec::with_capacity(labels.len());
    let mut clean_rows: Vec<Vec<(f64, f64)>> = Vec::with_capacity(labels.len());
    for (label, rows) in labels.iter().zip(grouped) {
        let n_raw = rows.len();
        if n_raw < 4 {
            return Err(ReportError::GroupTooSmall {
                label: label.clone(),
                n: n_raw,
                when: "before cleaning",
            });
        }
        let (kept, _removed) = stats::iqr_filter(
            rows,
            &[&|r: &(f64, f64)| r.0, &|r: &(f64, f64)| r.1],
        )?;
        let n_clean = kept.len();
        if n_clean < 4 {
            return Err(ReportError::GroupTooSmall {
                label: label.clone(),
                n: n_clean,
                when: "after cleaning",
            });
        }
        let joules: Vec<f64> = kept.iter().map(|r| r.0).collect();
        let runtimes: Vec<f64> = kept.iter().map(|r| r.1).collect();
        let normality = shapiro_wilk(&joules)?;
        let boxplot = boxplot_stats(&joules)?;
        groups.push(GroupReport {
            label: label.clone(),
            n_raw,
            n_clean,
            normality,
            boxplot,
            mean_joules: joules.iter().sum::<f64>() / n_clean as f64,
            mean_runtime_s: runtimes.iter().sum::<f64>() / n_clean as f64,
        });
        joules_groups.push(SampleGroup::new(label.clone(), joules));
        clean_rows.push(kept);
    }

    let omnibus = kruskal_wallis(&joules_groups)?;
    let comparisons = conover_pairwise(&joules_groups, &omnibus)?;
    let raw_ps: Vec<f64> = comparisons.iter().map(|c| c.raw_p).collect();
    let adjusted = holm_adjust(&raw_ps)?;

    let mut pairwise = Vec::with_capacity(comparisons.len());
    for (comparison, adjusted_p) in comparisons.iter().zip(adjusted) {
        let a = joules_groups
            .iter()
            .find(|g| g.label == comparison.label_a)
            .expect("group exists");
        let b = joules_groups
            .iter()
            .find(|g| g.label == comparison.label_b)
            .expect("group exists");
        let delta = cliffs_delta(&a.values, &b.values)?;
        pairwise.push(PairwiseResult {
            label_a: comparison.label_a.clone(),
            label_b: comparison.label_b.clone(),
            raw_p: comparison.raw_p,
            adjusted_p,
            cliffs_delta: delta,
            significant: adjusted_p < options.alpha,
        });
    }

    let heatmap = heatmap(&pairwise, &labels)?;

    // Runtime vs joules, pooled and per group.
    let mut correlations = Vec::with_capacity(labels.len() + 1);
    let pooled: Vec<(f64, f64)> = clean_rows.iter().flatten().copied().collect();
    correlations.push(CorrelationEntry {
        label: "all".into(),
        correlation: correlation_of(&pooled),
    });
    for (label, rows) in labels.iter().zip(&clean_rows) {
        correlations.push(CorrelationEntry {
            label: label.clone(),
            correlation: correlation_of(rows),
        });
    }

    let footprints = groups
        .iter()
        .map(|g| {
            extrapolate_footprint(
                g.mean_joules,
                g.mean_runtime_s,
                options.duty_cycle,
                options.carbon_intensity_g_per_kwh,
            )
            .map(|mut f| {
                f.label = Some(g.label.clone());
                f
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(AnalysisReport {
        schema: 1,
        host,
        grouping: GroupingSpec {
            group_by: group_by.to_string(),
            fixed: fixed.to_vec(),
        },
        alpha: options.alpha,
        groups,
        omnibus,
        pairwise,
        heatmap,
        correlations,
        footprints,
    })
}

fn correlation_of(rows: &[(f64, f64)]) -> Option<CorrelationResult> {
    let runtime: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let joules: Vec<f64> = rows.iter().map(|r| r.0).collect();
    pearson(&runtime, &joules).ok()
}

/// Five-number summary of one cleaned sample.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats, ReportError> {
    let summary = stats::quartiles(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = crate::stats::quantile_sorted(&sorted, 0.5);
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|v| *v >= summary.lower_fence)
        .unwrap_or(summary.q1);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|v| *v <= summary.upper_fence)
        .unwrap_or(summary.q3);
    Ok(BoxplotStats {
        n: values.len(),
        whisker_low,
        q1: summary.q1,
        median,
        q3: summary.q3,
        whisker_high,
    })
}

/// Builds the full matrix from one result per unordered pair: the upper
/// triangle takes each result as-is, the lower triangle mirrors it with the
/// delta negated; significance is symmetric.
pub fn heatmap(
    pairwise: &[PairwiseResult],
    labels: &[String],
) -> Result<EffectHeatmap, ReportError> {
    let k = labels.len();
    let mut cells: Vec<Vec<Option<HeatmapCell>>> = vec![vec![None; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let entry = pairwise
                .iter()
                .find(|p| {
                    (p.label_a == labels[i] && p.label_b == labels[j])
                        || (p.label_a == labels[j] && p.label_b == labels[i])
                })
                .ok_or_else(|| ReportError::MissingPair {
                    a: labels[i].clone(),
                    b: labels[j].clone(),
                })?;
            let delta_ij = if entry.label_a == labels[i] {
                entry.cliffs_delta
            } else {
                -entry.cliffs_delta
            };
            cells[i][j] = Some(HeatmapCell {
                delta: delta_ij,
                adjusted_p: entry.adjusted_p,
                significant: entry.significant,
            });
            cells[j][i] = Some(HeatmapCell {
                delta: -delta_ij,
                adjusted_p: entry.adjusted_p,
                significant: entry.significant,
            });
        }
    }
    Ok(EffectHeatmap {
        labels: labels.to_vec(),
        cells,
    })
}

/// Energy/emissions extrapolation:
/// `runs_per_day = duty_cycle * 86400 / runtime_s`, Wh/day from joules,
/// yearly = daily x 365, CO2 from the grid intensity.
pub fn extrapolate_footprint(
    joules_per_run: f64,
    runtime_s: f64,
    duty_cycle: f64,
    carbon_intensity_g_per_kwh: f64,
) -> Result<FootprintEstimate, ReportError> {
    if !runtime_s.is_finite() || runtime_s <= 0.0 {
        return Err(ReportError::InvalidInput(format!(
            "runtime_s must be positive, got {runtime_s}"
        )));
    }
    if !duty_cycle.is_finite() || duty_cycle <= 0.0 || duty_cycle > 1.0 {
        return Err(ReportError::InvalidInput(format!(
            "duty_cycle {duty_cycle} outside (0, 1]"
        )));
    }
    if !carbon_intensity_g_per_kwh.is_finite() || carbon_intensity_g_per_kwh < 0.0 {
        return Err(ReportError::InvalidInput(format!(
            "carbon_intensity {carbon_intensity_g_per_kwh} must be >= 0"
        )));
    }
    if !joules_per_run.is_finite() || joules_per_run < 0.0 {
        return Err(ReportError::InvalidInput(format!(
            "joules_per_run {joules_per_run} must be >= 0"
        )));
    }
    let runs_per_day = duty_cycle * 86_400.0 / runtime_s;
    let energy_wh_per_day = joules_per_run * runs_per_day / 3_600.0;
    let energy_kwh_per_year = energy_wh_per_day * 365.0 / 1_000.0;
    let co2_kg_per_year = energy_kwh_per_year * carbon_intensity_g_per_kwh / 1_000.0;
    Ok(FootprintEstimate {
        label: None,
        joules_per_run,
        runtime_s,
        duty_cycle,
        carbon_intensity_g_per_kwh,
        runs_per_day,
        energy_wh_per_day,
        energy_kwh_per_year,
        co2_kg_per_year,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::RunStatus;
    use crate::workload::MethodCounts;

    pub(crate) fn record(dim: &str, value: &str, iteration: u32, joules: f64, runtime: f64) -> MeasurementRecord {
        MeasurementRecord {
            host: "testhost".into(),
            config_id: format!("{dim}={value}"),
            dimensions: vec![(dim.to_string(), value.to_string())],
            iteration,
            status: RunStatus::Ok,
            reason: None,
            joules: Some(joules),
            runtime_s: Some(runtime),
            counts: MethodCounts::default(),
            errors: 0,
            started_at: "2025-01-01T00:00:00Z".into(),
            extra: vec![],
        }
    }

    fn synthetic_records(shift: f64) -> Vec<MeasurementRecord> {
        // Deterministic wobble around 100 J for A; B shifted up by `shift`.
        let mut records = Vec::new();
        for i in 0..40u32 {
            let wobble = ((i as f64 * 0.7).sin() + 1.0) * 2.0;
            records.push(record("v", "A", i, 100.0 + wobble, 10.0 + wobble / 10.0));
            records.push(record(
                "v",
                "B",
                i,
                100.0 * (1.0 + shift) + wobble,
                10.0 + wobble / 10.0,
            ));
        }
        records
    }

    #[test]
    fn planted_ten_percent_effect_is_significant_and_positive() {
        let records = synthetic_records(0.10);
        let report = analyze(&records, "v", &[], &AnalyzeOptions::default()).unwrap();
        assert_eq!(report.groups.len(), 2);
        let pair = &report.pairwise[0];
        assert!(pair.significant, "adjusted p = {}", pair.adjusted_p);
        // B dominates A; the (A, B) delta is negative, so delta(B, A) > 0.
        let (a, b) = (&pair.label_a, &pair.label_b);
        let delta_b_vs_a = if a == "B" {
            pair.cliffs_delta
        } else {
            -pair.cliffs_delta
        };
        assert!(delta_b_vs_a > 0.5, "delta = {delta_b_vs_a}");
        assert!(a == "B" || b == "B");
    }

    #[test]
    fn identical_groups_are_not_significant() {
        let records = synthetic_records(0.0);
        let report = analyze(&records, "v", &[], &AnalyzeOptions::default()).unwrap();
        let pair = &report.pairwise[0];
        assert!(!pair.significant);
        assert!(pair.cliffs_delta.abs() < 0.2);
    }

    #[test]
    fn fixed_assignments_slice_the_records() {
        // Two dimensions; the planted effect exists only under runtime=21.
        let mut records = Vec::new();
        for i in 0..30u32 {
            let wobble = ((i as f64 * 0.9).sin() + 1.0) * 1.5;
            for (framework, runtime, joules) in [
                ("F1", "17", 100.0 + wobble),
                ("F2", "17", 100.5 + wobble),
                ("F1", "21", 100.0 + wobble),
                ("F2", "21", 130.0 + wobble),
            ] {
                records.push(MeasurementRecord {
                    host: "h".into(),
                    config_id: format!("framework={framework}_runtime={runtime}"),
                    dimensions: vec![
                        ("framework".into(), framework.into()),
                        ("runtime".into(), runtime.into()),
                    ],
                    iteration: i,
                    status: RunStatus::Ok,
                    reason: None,
                    joules: Some(joules),
                    runtime_s: Some(10.0 + wobble / 10.0),
                    counts: MethodCounts::default(),
                    errors: 0,
                    started_at: "2025-01-01T00:00:00Z".into(),
                    extra: vec![],
                });
            }
        }
        let fix_21 = vec![("runtime".to_string(), "21".to_string())];
        let report = analyze(&records, "framework", &fix_21, &AnalyzeOptions::default()).unwrap();
        assert_eq!(report.groups.len(), 2);
        assert_eq!(report.groups[0].n_raw, 30, "only runtime=21 rows counted");
        assert!(report.pairwise[0].significant);

        let fix_17 = vec![("runtime".to_string(), "17".to_string())];
        let report = analyze(&records, "framework", &fix_17, &AnalyzeOptions::default()).unwrap();
        assert!(!report.pairwise[0].significant);

        // The complementary grouping slices the other way around.
        let fix_f2 = vec![("framework".to_string(), "F2".to_string())];
        let report = analyze(&records, "runtime", &fix_f2, &AnalyzeOptions::default()).unwrap();
        assert_eq!(report.grouping.group_by, "runtime");
        assert!(report.pairwise[0].significant);
    }

    #[test]
    fn single_group_is_an_error() {
        let records: Vec<MeasurementRecord> = (0..10)
            .map(|i| record("v", "A", i, 100.0 + i as f64, 10.0))
            .collect();
        assert!(matches!(
            analyze(&records, "v", &[], &AnalyzeOptions::default()),
            Err(ReportError::TooFewGroups { got: 1 })
        ));
    }

    #[test]
    fn failed_records_are_excluded() {
        let mut records = synthetic_records(0.10);
        for r in records.iter_mut().filter(|r| r.dimensions[0].1 == "B") {
            r.status = RunStatus::Failed;
            r.joules = None;
            r.runtime_s = None;
        }
        assert!(matches!(
            analyze(&records, "v", &[], &AnalyzeOptions::default()),
            Err(ReportError::TooFewGroups { got: 1 })
        ));
    }

    #[test]
    fn heatmap_fills_both_triangles() {
        let labels = vec!["a".to_string(), "b".to_string()];
        let pairwise = vec![PairwiseResult {
            label_a: "a".into(),
            label_b: "b".into(),
            raw_p: 0.001,
            adjusted_p: 0.001,
            cliffs_delta: 0.98,
            significant: true,
        }];
        let heatmap = heatmap(&pairwise, &labels).unwrap();
        assert_eq!(heatmap.cells[0][1].unwrap().delta, 0.98);
        assert_eq!(heatmap.cells[1][0].unwrap().delta, -0.98);
        assert!(heatmap.cells[0][0].is_none());
    }

    #[test]
    fn heatmap_counts_for_five_labels() {
        let labels: Vec<String> = (0..5).map(|i| format!("g{i}")).collect();
        let mut pairwise = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                pairwise.push(PairwiseResult {
                    label_a: labels[i].clone(),
                    label_b: labels[j].clone(),
                    raw_p: 0.2,
                    adjusted_p: 0.2,
                    cliffs_delta: 0.1,
                    significant: false,
                });
            }
        }
        assert_eq!(pairwise.len(), 10);
        let heatmap = heatmap(&pairwise, &labels).unwrap();
        let filled: usize = heatmap
            .cells
            .iter()
            .flatten()
            .filter(|c| c.is_some())
            .count();
        assert_eq!(filled, 20);
        // Non-significant pairs are mirrored as non-significant.
        assert!(!heatmap.cells[0][1].unwrap().significant);
        assert!(!heatmap.cells[1][0].unwrap().significant);
    }

    #[test]
    fn heatmap_missing_pair_is_an_error() {
        let labels = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            heatmap(&[], &labels),
            Err(ReportError::MissingPair { .. })
        ));
    }

    #[test]
    fn footprint_zero_intensity_means_zero_emissions() {
        let f = extrapolate_footprint(1000.0, 60.0, 1.0, 0.0).unwrap();
        assert_eq!(f.co2_kg_per_year, 0.0);
        assert!(f.energy_kwh_per_year > 0.0);
    }

    #[test]
    fn footprint_scales_linearly_with_duty_cycle() {
        let full = extrapolate_footprint(1000.0, 60.0, 1.0, 300.0).unwrap();
        let half = extrapolate_footprint(1000.0, 60.0, 0.5, 300.0).unwrap();
        assert!((half.runs_per_day - full.runs_per_day / 2.0).abs() < 1e-9);
        assert!((half.energy_wh_per_day - full.energy_wh_per_day / 2.0).abs() < 1e-9);
        assert!((half.energy_kwh_per_year - full.energy_kwh_per_year / 2.0).abs() < 1e-9);
        assert!((half.co2_kg_per_year - full.co2_kg_per_year / 2.0).abs() < 1e-9);
    }

    #[test]
    fn footprint_rejects_bad_inputs() {
        assert!(extrapolate_footprint(1.0, 0.0, 1.0, 300.0).is_err());
        assert!(extrapolate_footprint(1.0, 1.0, 0.0, 300.0).is_err());
        assert!(extrapolate_footprint(1.0, 1.0, 1.5, 300.0).is_err());
        assert!(extrapolate_footprint(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn boxplot_ordering_invariant() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 1.37).sin() * 10.0 + 50.0).collect();
        let b = boxplot_stats(&values).unwrap();
        assert!(b.whisker_low <= b.q1);
        assert!(b.q1 <= b.median);
        assert!(b.median <= b.q3);
        assert!(b.q3 <= b.whisker_high);
    }
}
