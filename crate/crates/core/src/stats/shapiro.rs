//! Shapiro-Wilk W test for normality, after Royston's AS R94.
//!
//! The weight vector and the W -> p transformation follow the published
//! algorithm (including its ppnd/alnorm helpers) so results line up with the
//! common statistical packages that embed the same Fortran routine.

// Coefficient tables keep the digits of their published sources.
#![allow(clippy::excessive_precision)]

use super::{NormalityResult, StatsError};

/// Valid sample-size range for the approximation.
pub const MIN_N: usize = 3;
pub const MAX_N: usize = 5000;

/// Computes the W statistic and its p-value for `values`.
///
/// `values` need not be sorted. Fails for n outside [3, 5000] and for
/// zero-range (constant) samples, where W is undefined.
pub fn shapiro_wilk(values: &[f64]) -> Result<NormalityResult, StatsError> {
    let n = values.len();
    if !(MIN_N..=MAX_N).contains(&n) {
        return Err(StatsError::SampleSizeOutOfRange {
            n,
            min: MIN_N,
            max: MAX_N,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput);
    }

    let mut x: Vec<f64> = values.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let range = x[n - 1] - x[0];
    if range < 1e-19 {
        return Err(StatsError::ZeroVariance);
    }

    let weights = half_weights(n);
    let (w, p) = w_and_p(&x, &weights, range);
    Ok(NormalityResult {
        w_statistic: w,
        p_value: p,
        n,
    })
}

/// Weights for the lower half of the ordered sample; the upper half is the
/// mirror image with opposite sign.
fn half_weights(n: usize) -> Vec<f64> {
    let n2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let an25 = an + 0.25;
    let mut m = Vec::with_capacity(n2);
    let mut summ2 = 0.0;
    for i in 0..n2 {
        // Expected normal order statistic for the (i+1)-th smallest value.
        let v = ppnd((i as f64 + 1.0 - 0.375) / an25);
        summ2 += v * v;
        m.push(v);
    }
    summ2 *= 2.0;
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;

    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        m[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    m[0] = a1;
    for v in m.iter_mut().skip(first_scaled) {
        *v = -*v / fac;
    }
    m
}

fn w_and_p(x: &[f64], a: &[f64], range: f64) -> (f64, f64) {
    let n = x.len();
    let an = n as f64;

    // Antisymmetric weight for position i: -a[i] on the lower half,
    // +a[n-1-i] on the upper half, 0 in the middle of an odd sample.
    let weight = |i: usize| -> f64 {
        let j = n - 1 - i;
        if i < j {
            -a[i]
        } else if i > j {
            a[j]
        } else {
            0.0
        }
    };

    let sx: f64 = x.iter().map(|v| v / range).sum::<f64>() / an;
    let sa: f64 = (0..n).map(weight).sum::<f64>() / an;

    let mut ssa = 0.0;
    let mut ssx = 0.0;
    let mut sax = 0.0;
    for (i, value) in x.iter().enumerate() {
        let asa = weight(i) - sa;
        let xsx = value / range - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }

    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        // Exact distribution for n = 3.
        let w = w.max(0.75);
        let pw = 1.0 - 6.0 / std::f64::consts::PI * w.sqrt().acos();
        return (w, pw.clamp(0.0, 1.0));
    }

    let y = w1.ln();
    if n <= 11 {
        let gamma = poly(&G, an);
        if y >= gamma {
            return (w, 1e-19);
        }
        let y = -(gamma - y).ln();
        let mean = poly(&C3, an);
        let sd = poly(&C4, an).exp();
        (w, alnorm((y - mean) / sd, true))
    } else {
        let ln_n = an.ln();
        let mean = poly(&C5, ln_n);
        let sd = poly(&C6, ln_n).exp();
        (w, alnorm((y - mean) / sd, true))
    }
}

// Polynomial coefficients from AS R94, stored [c0, c1, ..., ck].
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];

fn poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// AS 111 normal quantile approximation used by the original algorithm.
fn ppnd(p: f64) -> f64 {
    const A0: f64 = 2.50662823884;
    const A1: f64 = -18.61500062529;
    const A2: f64 = 41.39119773534;
    const A3: f64 = -25.44106049637;
    const B1: f64 = -8.47351093090;
    const B2: f64 = 23.08336743743;
    const B3: f64 = -21.06224101826;
    const B4: f64 = 3.13082909833;
    const C0: f64 = -2.78718931138;
    const C1P: f64 = -2.29796479134;
    const C2P: f64 = 4.85014127135;
    const C3P: f64 = 2.32121276858;
    const D1: f64 = 3.54388924762;
    const D2: f64 = 1.63706781897;

    let q = p - 0.5;
    if q.abs() <= 0.42 {
        let r = q * q;
        return q * (((A3 * r + A2) * r + A1) * r + A0)
            / ((((B4 * r + B3) * r + B2) * r + B1) * r + 1.0);
    }
    let mut r = if q > 0.0 { 1.0 - p } else { p };
    if r <= 0.0 {
        return 0.0;
    }
    r = (-r.ln()).sqrt();
    let value = (((C3P * r + C2P) * r + C1P) * r + C0) / ((D2 * r + D1) * r + 1.0);
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// AS 66 tail of the standard normal curve, as used by AS R94.
fn alnorm(x: f64, upper: bool) -> f64 {
    const LTONE: f64 = 7.0;
    const UTZERO: f64 = 38.0;
    const CON: f64 = 1.28;

    let (z, upper) = if x < 0.0 { (-x, !upper) } else { (x, upper) };
    if !(z <= LTONE || (upper && z <= UTZERO)) {
        return if upper { 0.0 } else { 1.0 };
    }
    let y = 0.5 * z * z;
    let temp = if z <= CON {
        0.5 - z
            * (0.398942280444
                - 0.399903438504 * y
                    / (y + 5.75885480458
                        - 29.8213557808 / (y + 2.62433121679 + 48.6959930692 / (y + 5.92885724438))))
    } else {
        0.398942280385 * (-y).exp()
            / (z - 3.8052e-8
                + 1.00000615302
                    / (z + 3.98064794e-4
                        + 1.98615381364
                            / (z - 0.151679116635
                                + 5.29330324926
                                    / (z + 4.8385912808
                                        - 15.1508972451
                                            / (z + 0.742380924027
                                                + 30.789933034 / (z + 3.99019417011))))))
    };
    if upper {
        temp
    } else {
        1.0 - temp
    }
}
