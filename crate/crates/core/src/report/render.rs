//! Writes an [`AnalysisReport`] to disk as JSON, CSV tables and SVG charts.

use std::path::{Path, PathBuf};

use super::{svg, AnalysisReport, ReportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(format!("unknown format {other:?} (json, csv, svg)")),
        }
    }
}

/// Renders the requested formats into `out_dir` and returns the manifest of
/// files written.
pub fn render(
    report: &AnalysisReport,
    formats: &[ReportFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = Vec::new();
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();

    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = out_dir.join("report.json");
                let json = serde_json::to_string_pretty(report)
                    .map_err(|e| ReportError::InvalidInput(e.to_string()))?;
                std::fs::write(&path, json + "\n")?;
                manifest.push(path);
            }
            ReportFormat::Csv => {
                let pairwise = out_dir.join("pairwise.csv");
                write_pairwise_csv(report, &pairwise)?;
                manifest.push(pairwise);
                let boxplots = out_dir.join("boxplots.csv");
                write_boxplot_csv(report, &boxplots)?;
                manifest.push(boxplots);
            }
            ReportFormat::Svg => {
                let title_suffix = if report.grouping.fixed.is_empty() {
                    String::new()
                } else {
                    let fixed: Vec<String> = report
                        .grouping
                        .fixed
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect();
                    format!(" ({})", fixed.join(", "))
                };
                let heatmap = out_dir.join("heatmap.svg");
                std::fs::write(
                    &heatmap,
                    svg::heatmap_svg(
                        &report.heatmap,
                        &format!(
                            "Cliff's delta by {}{title_suffix}",
                            report.grouping.group_by
                        ),
                    ),
                )?;
                manifest.push(heatmap);
                let boxplot = out_dir.join("boxplot.svg");
                std::fs::write(
                    &boxplot,
                    svg::boxplot_svg(
                        &report.groups,
                        &format!("Energy by {}{title_suffix}", report.grouping.group_by),
                        "J",
                    ),
                )?;
                manifest.push(boxplot);
            }
        }
    }
    Ok(manifest)
}

fn write_pairwise_csv(report: &AnalysisReport, path: &Path) -> Result<(), ReportError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| ReportError::InvalidInput(e.to_string()))?;
    let fail = |e: csv::Error| ReportError::InvalidInput(e.to_string());
    writer
        .write_record([
            "label_a",
            "label_b",
            "raw_p",
            "adjusted_p",
            "cliffs_delta",
            "significant",
        ])
        .map_err(fail)?;
    for pair in &report.pairwise {
        writer
            .write_record([
                pair.label_a.as_str(),
                pair.label_b.as_str(),
                &pair.raw_p.to_string(),
                &pair.adjusted_p.to_string(),
                &pair.cliffs_delta.to_string(),
                if pair.significant { "true" } else { "false" },
            ])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_boxplot_csv(report: &AnalysisReport, path: &Path) -> Result<(), ReportError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| ReportError::InvalidInput(e.to_string()))?;
    let fail = |e: csv::Error| ReportError::InvalidInput(e.to_string());
    writer
        .write_record([
            "label",
            "n_raw",
            "n_clean",
            "whisker_low",
            "q1",
            "median",
            "q3",
            "whisker_high",
            "shapiro_w",
            "shapiro_p",
        ])
        .map_err(fail)?;
    for group in &report.groups {
        let b = &group.boxplot;
        writer
            .write_record([
                group.label.as_str(),
                &group.n_raw.to_string(),
                &group.n_clean.to_string(),
                &b.whisker_low.to_string(),
                &b.q1.to_string(),
                &b.median.to_string(),
                &b.q3.to_string(),
                &b.whisker_high.to_string(),
                &group.normality.w_statistic.to_string(),
                &group.normality.p_value.to_string(),
            ])
            .map_err(fail)?;
    }
    writer.flush()?;
    Ok(())
}
