//! One-sample t-test and percentile bootstrap.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TTest {
    Defined { t: f64, df: f64, p: f64 },
    /// Zero sample variance: the statistic does not exist.
    Undefined,
}

impl TTest {
    pub fn p(&self) -> Option<f64> {
        match self {
            TTest::Defined { p, .. } => Some(*p),
            TTest::Undefined => None,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-tailed one-sample t-test of `mean(samples) == reference`.
pub fn one_sample_t(samples: &[f64], reference: f64) -> Result<TTest> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let m = mean(samples);
    let var = samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    // relative zero: identical samples can leave rounding residue
    if var <= f64::EPSILON * f64::EPSILON * m.abs().max(1.0).powi(2) {
        return Ok(TTest::Undefined);
    }
    let df = (n - 1) as f64;
    let t = (m - reference) / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest::Defined { t, df, p })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Percentile interval for `mean(resample) - reference`.
///
/// Resample `b` draws from its own generator seeded by `(seed, b)`, so the
/// result is identical under sequential and parallel execution.
pub fn bootstrap_ci(
    samples: &[f64],
    reference: f64,
    resamples: usize,
    level: f64,
    seed: u64,
    exec: Execution,
) -> Result<Interval> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!(
            "bootstrap needs resamples > 0 and level in (0, 1), got {resamples} and {level}"
        )));
    }
    let n = samples.len();
    let root = seed::derive(seed, "bootstrap");
    let mut diffs = par::map_range(exec, resamples, |b| {
        let mut rng = seed::rng(root, &b.to_string());
        let total: f64 = (0..n).map(|_| samples[rng.random_range(0..n)]).sum();
        total / n as f64 - reference
    });
    diffs.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(Interval { lo: quantile(&diffs, alpha), hi: quantile(&diffs, 1.0 - alpha) })
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
