//! Shared helpers for the integration tests: fixture loading and tolerant
//! float comparison.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// One frozen dataset: named groups plus a bivariate sample.
#[derive(Debug, Default, Clone)]
pub struct OracleDataset {
    pub groups: Vec<(String, Vec<f64>)>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl OracleDataset {
    pub fn group(&self, label: &str) -> &[f64] {
        &self
            .groups
            .iter()
            .find(|(l, _)| l == label)
            .unwrap_or_else(|| panic!("no group {label}"))
            .1
    }
}

/// Expected statistics keyed by (statistic, label_a, label_b).
pub type OracleExpectations = BTreeMap<(String, String, String), f64>;

pub fn load_oracle_datasets() -> BTreeMap<String, OracleDataset> {
    let mut datasets: BTreeMap<String, OracleDataset> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(fixture_path("stats_oracle_data.csv")).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let dataset = datasets.entry(row[0].to_string()).or_default();
        let value: f64 = row[3].parse().unwrap();
        match &row[1] {
            "group" => {
                let label = row[2].to_string();
                match dataset.groups.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, values)) => values.push(value),
                    None => dataset.groups.push((label, vec![value])),
                }
            }
            "x" => dataset.x.push(value),
            "y" => dataset.y.push(value),
            other => panic!("unknown data kind {other}"),
        }
    }
    datasets
}

pub fn load_oracle_expectations() -> BTreeMap<String, OracleExpectations> {
    let mut expected: BTreeMap<String, OracleExpectations> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(fixture_path("stats_oracle_expected.csv")).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        expected.entry(row[0].to_string()).or_default().insert(
            (row[1].to_string(), row[2].to_string(), row[3].to_string()),
            row[4].parse().unwrap(),
        );
    }
    expected
}

/// Relative agreement check; values this close to the f64 floor compare equal.
pub fn assert_close(actual: f64, expected: f64, rel_tol: f64, context: &str) {
    if expected.abs() < 1e-290 && actual.abs() < 1e-290 {
        return;
    }
    let denom = expected.abs().max(actual.abs());
    let rel = (actual - expected).abs() / denom;
    assert!(
        rel <= rel_tol,
        "{context}: actual {actual:e} vs expected {expected:e} (rel err {rel:e} > {rel_tol:e})"
    );
}
