//! Parity with independently computed statistics on frozen datasets
//! (tests/fixtures/README.md documents their provenance), plus reference
//! values for the distribution functions.

mod common;

use common::{assert_close, fixture_path, load_oracle_datasets, load_oracle_expectations};
use wattbench_core::stats::{
    cliffs_delta, conover_pairwise, dist, holm_adjust, kruskal_wallis, pearson, shapiro_wilk,
    SampleGroup,
};

const REL_TOL: f64 = 1e-8;

#[test]
fn frozen_datasets_match_reference_statistics() {
    let datasets = load_oracle_datasets();
    let expectations = load_oracle_expectations();
    assert_eq!(datasets.len(), 21); // 20 seeded datasets + normal_n50

    for (name, dataset) in &datasets {
        let expected = &expectations[name];

        for (label, values) in &dataset.groups {
            let normality = shapiro_wilk(values).unwrap();
            assert_close(
                normality.w_statistic,
                expected[&("sw_w".into(), label.clone(), String::new())],
                REL_TOL,
                &format!("{name}/{label} sw_w"),
            );
            assert_close(
                normality.p_value,
                expected[&("sw_p".into(), label.clone(), String::new())],
                1e-6,
                &format!("{name}/{label} sw_p"),
            );
        }

        if dataset.groups.len() < 2 {
            continue; // the normality-only fixture
        }

        let groups: Vec<SampleGroup> = dataset
            .groups
            .iter()
            .map(|(label, values)| SampleGroup::new(label.clone(), values.clone()))
            .collect();

        let omnibus = kruskal_wallis(&groups).unwrap();
        assert_close(
            omnibus.h_statistic,
            expected[&("kw_h".into(), String::new(), String::new())],
            REL_TOL,
            &format!("{name} kw_h"),
        );
        assert_close(
            omnibus.p_value,
            expected[&("kw_p".into(), String::new(), String::new())],
            REL_TOL,
            &format!("{name} kw_p"),
        );

        let comparisons = conover_pairwise(&groups, &omnibus).unwrap();
        for comparison in &comparisons {
            assert_close(
                comparison.raw_p,
                expected[&(
                    "conover_p".into(),
                    comparison.label_a.clone(),
                    comparison.label_b.clone(),
                )],
                REL_TOL,
                &format!(
                    "{name} conover_p {} vs {}",
                    comparison.label_a, comparison.label_b
                ),
            );
        }

        let raw: Vec<f64> = comparisons.iter().map(|c| c.raw_p).collect();
        let adjusted = holm_adjust(&raw).unwrap();
        for (comparison, adjusted_p) in comparisons.iter().zip(&adjusted) {
            assert_close(
                *adjusted_p,
                expected[&(
                    "holm_p".into(),
                    comparison.label_a.clone(),
                    comparison.label_b.clone(),
                )],
                REL_TOL,
                &format!(
                    "{name} holm_p {} vs {}",
                    comparison.label_a, comparison.label_b
                ),
            );
        }

        for comparison in &comparisons {
            let delta = cliffs_delta(
                dataset.group(&comparison.label_a),
                dataset.group(&comparison.label_b),
            )
            .unwrap();
            assert_close(
                delta,
                expected[&(
                    "cliffs_delta".into(),
                    comparison.label_a.clone(),
                    comparison.label_b.clone(),
                )],
                REL_TOL,
                &format!(
                    "{name} cliffs {} vs {}",
                    comparison.label_a, comparison.label_b
                ),
            );
        }

        let correlation = pearson(&dataset.x, &dataset.y).unwrap();
        assert_close(
            correlation.r,
            expected[&("pearson_r".into(), String::new(), String::new())],
            REL_TOL,
            &format!("{name} pearson_r"),
        );
        assert_close(
            correlation.p_value,
            expected[&("pearson_p".into(), String::new(), String::new())],
            REL_TOL,
            &format!("{name} pearson_p"),
        );
    }
}

#[test]
fn seeded_normal_sample_matches_reference() {
    let datasets = load_oracle_datasets();
    let expectations = load_oracle_expectations();
    let sample = datasets["normal_n50"].group("g0");
    assert_eq!(sample.len(), 50);
    let normality = shapiro_wilk(sample).unwrap();
    let expected = &expectations["normal_n50"];
    assert_close(
        normality.w_statistic,
        expected[&("sw_w".into(), "g0".into(), String::new())],
        1e-6,
        "normal_n50 w",
    );
    assert_close(
        normality.p_value,
        expected[&("sw_p".into(), "g0".into(), String::new())],
        1e-6,
        "normal_n50 p",
    );
}

#[test]
fn distribution_functions_match_high_precision_references() {
    let mut reader = csv::Reader::from_path(fixture_path("dist_reference.csv")).unwrap();
    let mut checked = 0;
    for row in reader.records() {
        let row = row.unwrap();
        let fn_name = &row[0];
        let a: Option<f64> = row[1].parse().ok();
        let b: Option<f64> = row[2].parse().ok();
        let x: f64 = row[3].parse().unwrap();
        let expected: f64 = row[4].parse().unwrap();
        let actual = match fn_name {
            "gammainc_p" => dist::gammainc_p(a.unwrap(), x),
            "gammainc_q" => dist::gammainc_q(a.unwrap(), x),
            "betainc_reg" => dist::betainc_reg(a.unwrap(), b.unwrap(), x),
            "normal_cdf" => dist::normal_cdf(x),
            "normal_ppf" => dist::normal_ppf(x),
            other => panic!("unknown function {other}"),
        };
        let tol = expected.abs().max(1e-300) * 1e-10;
        assert!(
            (actual - expected).abs() <= tol.max(1e-280),
            "{fn_name}(a={a:?}, b={b:?}, x={x}) = {actual:e}, reference {expected:e}"
        );
        checked += 1;
    }
    assert!(checked > 40);
}
