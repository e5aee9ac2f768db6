//! Delay statistics and empirical CCDFs.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no samples")]
    Empty,
    #[error("sample {0} is not finite")]
    NotFinite(f64),
}

/// Summary of a delay sample, microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1); zero for a single sample.
    pub std_dev: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    pub min: f64,
    pub max: f64,
}

impl DelayStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self, StatsError> {
        let sorted = sorted_finite(samples)?;
        let n = sorted.len();
        let mean = sorted.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            let ss: f64 = sorted.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(DelayStats {
            count: n,
            mean,
            std_dev,
            p2_5: percentile_sorted(&sorted, 2.5),
            p97_5: percentile_sorted(&sorted, 97.5),
            min: sorted[0],
            max: sorted[n - 1],
        })
    }
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(StatsError::NotFinite(bad));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Linear interpolation between closest ranks (`p` in percent).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// `(d, P[X > d])` for every distinct sample value `d`, ascending.
pub fn ccdf(samples: &[f64]) -> Result<Vec<(f64, f64)>, StatsError> {
    let sorted = sorted_finite(samples)?;
    let n = sorted.len() as f64;
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let d = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == d {
            j += 1;
        }
        points.push((d, (sorted.len() - j) as f64 / n));
        i = j;
    }
    Ok(points)
}

/// Evaluates a step CCDF (as returned by [`ccdf`]) at `x`.
pub fn ccdf_at(points: &[(f64, f64)], x: f64) -> f64 {
    match points.partition_point(|&(d, _)| d <= x) {
        0 => 1.0,
        k => points[k - 1].1,
    }
}

/// True when `fast` is never above `slow` at any abscissa of either curve,
/// i.e. `fast` lies to the left of `slow` everywhere.
pub fn ccdf_dominates(fast: &[(f64, f64)], slow: &[(f64, f64)]) -> bool {
    fast.iter()
        .chain(slow.iter())
        .all(|&(x, _)| ccdf_at(fast, x) <= ccdf_at(slow, x))
}
