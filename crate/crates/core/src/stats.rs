//! Sample statistics for trajectory batches.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation; 0 for fewer than two samples.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Normal-approximation 95% half-width `1.96 σ̂ / √n`.
pub fn half_width(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    1.96 * std_dev(xs) / (xs.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a − b) < 0`.
    pub p_less: f64,
    pub p_two_sided: f64,
}

/// Paired t-test on `a[i] − b[i]`.
///
/// # Panics
/// If the samples differ in length or hold fewer than two pairs.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> TTest {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    assert!(a.len() >= 2, "paired test needs at least two pairs");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let m = mean(&diffs);
    let se = std_dev(&diffs) / n.sqrt();
    let df = n - 1.0;
    let t = if se > 0.0 {
        m / se
    } else if m == 0.0 {
        0.0
    } else {
        m.signum() * f64::INFINITY
    };
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    let p_less = dist.cdf(t);
    let p_two_sided = (2.0 * dist.cdf(-t.abs())).min(1.0);
    TTest {
        mean_difference: m,
        t,
        df,
        p_less,
        p_two_sided,
    }
}

/// Clopper-Pearson interval for `successes` out of `n` at level `1 − alpha`.
pub fn binomial_interval(successes: u64, n: u64, alpha: f64) -> (f64, f64) {
    assert!(n > 0 && successes <= n, "need 0 <= successes <= n, n > 0");
    let (k, n) = (successes as f64, n as f64);
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("positive shapes")
            .inverse_cdf(alpha / 2.0)
    };
    let upper = if successes as f64 == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("positive shapes")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}
