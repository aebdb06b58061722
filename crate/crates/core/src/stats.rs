//! Welch's two-tailed, two-sample unequal-variance t-test and a few
//! descriptive statistics.

use serde::Serialize;
use thiserror::Error;

use crate::special::inc_beta_reg;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample of size {0} is too small for a t-test (need at least 2)")]
    SampleTooSmall(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    InvalidAlpha(f64),
}

/// Size, mean and unbiased variance of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub var: f64,
}

impl SampleSummary {
    /// Two-pass mean and variance (divisor `n - 1`).
    pub fn of(values: &[f64]) -> Result<Self, StatsError> {
        let n = values.len();
        if n < 2 {
            return Err(StatsError::SampleTooSmall(n));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(SampleSummary {
            n,
            mean,
            var: ss / (n - 1) as f64,
        })
    }

    /// Summary of `values[i] * scale` from exact integer sums of `values`
    /// and their squares.
    pub fn from_integer_sums(n: usize, sum: i64, sum_sq: i64, scale: f64) -> Self {
        debug_assert!(n >= 2);
        let nn = n as i64;
        let numer = nn * sum_sq - sum * sum;
        let mean = sum as f64 / n as f64 * scale;
        let var = numer as f64 / (nn * (nn - 1)) as f64 * scale * scale;
        SampleSummary { n, mean, var }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p: f64,
    pub alpha: f64,
    pub significant: bool,
}

impl TTestResult {
    /// Integer df as conventionally printed, e.g. `t(38)`.
    pub fn reporting_df(&self) -> u64 {
        self.df.floor() as u64
    }
}

pub fn check_alpha(alpha: f64) -> Result<(), StatsError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidAlpha(alpha))
    }
}

pub fn welch_ttest(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestResult, StatsError> {
    check_alpha(alpha)?;
    let sa = SampleSummary::of(a)?;
    let sb = SampleSummary::of(b)?;
    Ok(welch_from_summaries(&sa, &sb, alpha))
}

/// Welch's test from precomputed summaries. Both `n` must be at least 2 and
/// `alpha` must already be validated.
///
/// When both variances are zero the statistic is undefined; the result is
/// then `t = 0, p = 1` for equal means and `t = ±inf, p = 0` otherwise, with
/// `df = n_a + n_b - 2`.
pub fn welch_from_summaries(a: &SampleSummary, b: &SampleSummary, alpha: f64) -> TTestResult {
    let va = a.var / a.n as f64;
    let vb = b.var / b.n as f64;
    let se2 = va + vb;
    let diff = a.mean - b.mean;

    let (t, df, p) = if se2 <= 0.0 {
        let df = (a.n + b.n - 2) as f64;
        if diff == 0.0 {
            (0.0, df, 1.0)
        } else {
            (f64::INFINITY.copysign(diff), df, 0.0)
        }
    } else {
        let t = diff / se2.sqrt();
        let denom = va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64;
        let df = se2 * se2 / denom;
        (t, df, p_value(t, df))
    };

    TTestResult {
        t,
        df,
        p,
        alpha,
        significant: p < alpha,
    }
}

/// Two-tailed p-value of Student's t with `df` degrees of freedom.
pub fn two_tailed_p(t: f64, df: f64) -> Result<f64, StatsError> {
    // Also rejects NaN.
    if df.is_nan() || df <= 0.0 {
        return Err(StatsError::InvalidDf(df));
    }
    Ok(p_value(t, df))
}

fn p_value(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let t2 = t * t;
    // P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2)
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    inc_beta_reg(df / 2.0, 0.5, x, y).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Descriptive {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

pub fn descriptive(values: &[f64]) -> Result<Descriptive, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    Ok(Descriptive {
        mean: values.iter().sum::<f64>() / n as f64,
        median,
        max: sorted[n - 1],
    })
}
