//! Rank-based evaluation pipeline for benchmark measurements: quartile
//! cleaning, normality screening, Kruskal-Wallis omnibus test, Conover
//! pairwise comparisons with Holm adjustment, Cliff's delta effect sizes and
//! Pearson correlation.
//!
//! All operations are pure functions over immutable inputs.

pub mod dist;
mod shapiro;

pub use shapiro::shapiro_wilk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("sample size {n} outside supported range [{min}, {max}]")]
    SampleSizeOutOfRange { n: usize, min: usize, max: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("all pooled values are identical")]
    AllValuesEqual,
    #[error("input contains non-finite values")]
    NonFiniteInput,
    #[error("constant input: correlation undefined")]
    ConstantInput,
    #[error("input lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("p-value {0} outside [0, 1]")]
    PValueOutOfRange(f64),
    #[error("degenerate test: no residual degrees of freedom")]
    DegenerateDenominator,
}

/// One labelled sample of measurements (joules or seconds).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleGroup {
    pub label: String,
    pub values: Vec<f64>,
}

impl SampleGroup {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            values,
        }
    }
}

/// Quartiles and the 1.5*IQR outlier fences derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuartileSummary {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

/// Shapiro-Wilk outcome for one group.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalityResult {
    pub w_statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Kruskal-Wallis omnibus outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OmnibusResult {
    pub h_statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Conover rank comparison of one group pair (raw p only; adjustment and
/// effect size are layered on by the report pipeline).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankComparison {
    pub label_a: String,
    pub label_b: String,
    pub t_statistic: f64,
    pub raw_p: f64,
}

/// Fully assembled pairwise entry as it appears in reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub label_a: String,
    pub label_b: String,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub cliffs_delta: f64,
    pub significant: bool,
}

/// Pearson correlation outcome.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Quartiles by linear interpolation of the order statistics at positions
/// 0.25(n-1) and 0.75(n-1) (0-based), the common "type 7" convention.
pub fn quartiles(values: &[f64]) -> Result<QuartileSummary, StatsError> {
    if values.len() < 4 {
        return Err(StatsError::TooFewValues {
            needed: 4,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(QuartileSummary {
        q1,
        q3,
        iqr,
        lower_fence: q1 - 1.5 * iqr,
        upper_fence: q3 + 1.5 * iqr,
    })
}

/// Interpolated quantile of an already sorted slice, q in [0, 1].
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Removes records of one group whose value in any metric falls outside the
/// 1.5*IQR fences of that metric. Fences come from the original data and the
/// pass runs once; survivors are not re-fenced.
///
/// Returns `(kept, removed)` in input order.
pub fn iqr_filter<T>(
    records: Vec<T>,
    metrics: &[&dyn Fn(&T) -> f64],
) -> Result<(Vec<T>, Vec<T>), StatsError> {
    if records.len() < 4 {
        return Err(StatsError::TooFewValues {
            needed: 4,
            got: records.len(),
        });
    }
    let mut fences = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let column: Vec<f64> = records.iter().map(*metric).collect();
        fences.push(quartiles(&column)?);
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for record in records {
        let outlier = metrics.iter().zip(&fences).any(|(metric, fence)| {
            let v = metric(&record);
            v < fence.lower_fence || v > fence.upper_fence
        });
        if outlier {
            removed.push(record);
        } else {
            kept.push(record);
        }
    }
    Ok((kept, removed))
}

/// Midranks (1-based, ties averaged) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average of ranks i+1..=j+1.
        let rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Kruskal-Wallis H-test over midranks with the standard tie correction;
/// p-value from the chi-squared upper tail at k-1 degrees of freedom.
pub fn kruskal_wallis(groups: &[SampleGroup]) -> Result<OmnibusResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        if g.values.is_empty() {
            return Err(StatsError::TooFewValues { needed: 1, got: 0 });
        }
        if g.values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFiniteInput);
        }
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let n_total = pooled.len();
    let first = pooled[0];
    if pooled.iter().all(|&v| v == first) {
        return Err(StatsError::AllValuesEqual);
    }

    let ranks = midranks(&pooled);
    let nf = n_total as f64;

    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let n_g = g.values.len();
        let rank_sum: f64 = ranks[offset..offset + n_g].iter().sum();
        h += rank_sum * rank_sum / n_g as f64;
        offset += n_g;
    }
    h = 12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0);

    // Tie correction: 1 - sum(t^3 - t) / (N^3 - N) over tie runs.
    let mut sorted = pooled;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n_total {
        let mut j = i;
        while j + 1 < n_total && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);
    h /= correction;
    // Cancellation can leave a tiny negative residue for identical rank sums.
    if h < 0.0 && h > -1e-9 {
        h = 0.0;
    }

    let df = groups.len() - 1;
    Ok(OmnibusResult {
        h_statistic: h,
        df,
        p_value: dist::chi_squared_sf(h, df as f64),
    })
}

/// Conover's pairwise rank test following a Kruskal-Wallis omnibus result
/// computed on the same groups. Raw two-sided p-values from Student-t with
/// N-k degrees of freedom.
pub fn conover_pairwise(
    groups: &[SampleGroup],
    omnibus: &OmnibusResult,
) -> Result<Vec<RankComparison>, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::TooFewGroups { needed: 2, got: k });
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).collect();
    let n_total = pooled.len();
    if n_total <= k {
        return Err(StatsError::DegenerateDenominator);
    }
    let ranks = midranks(&pooled);
    let nf = n_total as f64;

    let mut mean_ranks = Vec::with_capacity(k);
    let mut offset = 0;
    for g in groups {
        let n_g = g.values.len();
        let sum: f64 = ranks[offset..offset + n_g].iter().sum();
        mean_ranks.push(sum / n_g as f64);
        offset += n_g;
    }

    let sum_sq: f64 = ranks.iter().map(|r| r * r).sum();
    let s2 = (sum_sq - nf * (nf + 1.0) * (nf + 1.0) / 4.0) / (nf - 1.0);
    let df = (n_total - k) as f64;
    let scale = s2 * (nf - 1.0 - omnibus.h_statistic) / df;

    let mut results = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = mean_ranks[i] - mean_ranks[j];
            let variance =
                scale * (1.0 / groups[i].values.len() as f64 + 1.0 / groups[j].values.len() as f64);
            let (t, p) = if variance > 0.0 {
                let t = diff / variance.sqrt();
                (t, dist::student_t_two_sided(t, df).min(1.0))
            } else if diff == 0.0 {
                (0.0, 1.0)
            } else {
                // Complete separation: H has absorbed all rank variance.
                (diff.signum() * f64::INFINITY, 0.0)
            };
            results.push(RankComparison {
                label_a: groups[i].label.clone(),
                label_b: groups[j].label.clone(),
                t_statistic: t,
                raw_p: p,
            });
        }
    }
    Ok(results)
}

/// Holm step-down adjustment; output order matches input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::PValueOutOfRange(p));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let candidate = (m - rank) as f64 * p_values[idx];
        running = running.max(candidate);
        adjusted[idx] = running.min(1.0);
    }
    Ok(adjusted)
}

/// Cliff's delta: (#{x > y} - #{x < y}) / (|a| * |b|) over all cross pairs,
/// computed by sorting both samples and sweeping with two pointers.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::TooFewValues {
            needed: 1,
            got: a.len().min(b.len()),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let m = sb.len();
    let mut less = 0usize; // b values strictly below the current x
    let mut less_eq = 0usize; // b values at or below the current x
    let mut net = 0i64;
    for &x in &sa {
        while less < m && sb[less] < x {
            less += 1;
        }
        if less_eq < less {
            less_eq = less;
        }
        while less_eq < m && sb[less_eq] <= x {
            less_eq += 1;
        }
        let greater = m - less_eq;
        net += less as i64 - greater as i64;
    }
    Ok(net as f64 / (sa.len() as f64 * m as f64))
}

/// Pearson correlation with a two-sided p-value from the Student-t
/// distribution at n-2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            a: x.len(),
            b: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewValues { needed: 3, got: n });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let df = nf - 2.0;
        let t = r * (df / (1.0 - r * r)).sqrt();
        dist::student_t_two_sided(t, df)
    };
    Ok(CorrelationResult { r, p_value, n })
}
