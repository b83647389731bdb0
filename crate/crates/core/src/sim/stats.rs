//! Empirical CDFs and percentiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest samples accepted by [`cdf_stats`].
pub const MIN_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfStats {
    /// Sorted samples.
    pub sorted: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// 5th percentile, the SE reached with 95% probability.
    pub p95_likely: f64,
}

impl CdfStats {
    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.n() as f64
    }

    /// Step points `(x_(i), (i+1)/n)` of the empirical CDF.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.n() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, (i + 1) as f64 / n))
            .collect()
    }

    pub fn to_csv(&self, value_header: &str) -> String {
        let mut s = format!("{value_header},cdf\n");
        for (x, f) in self.points() {
            s.push_str(&format!("{x:.12e},{f:.12e}\n"));
        }
        s
    }
}

/// Quantile `q` by linear interpolation between order statistics at
/// position `q (n - 1)`. `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn cdf_stats(samples: &[f64]) -> Result<CdfStats> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "CDF needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite sample {x}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(CdfStats {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile_sorted(&sorted, 0.5),
        p95_likely: quantile_sorted(&sorted, 0.05),
        sorted,
    })
}
