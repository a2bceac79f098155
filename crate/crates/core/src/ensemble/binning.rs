//! Evenly spaced histograms over the training range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANGLE_BINS: usize = 100;
pub const SPEED_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedDistribution {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl BinnedDistribution {
    /// Edge `i` of `0..=n_bins`; the last edge is exactly `hi`.
    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.n_bins {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / self.n_bins as f64
        }
    }

    /// Bin index of `v`: bin i holds [edge(i), edge(i + 1)), the last bin
    /// also holds `hi`, and values outside the range land in the edge bins.
    pub fn bin(&self, v: f64) -> usize {
        let t = (v - self.lo) / (self.hi - self.lo);
        let b = (self.n_bins as f64 * t).floor();
        if b.is_nan() || b < 0.0 {
            return 0;
        }
        // The estimate can be off by one near an edge; settle against the
        // edges themselves so digitization agrees with them exactly.
        let mut b = (b as usize).min(self.n_bins - 1);
        while b > 0 && v < self.edge(b) {
            b -= 1;
        }
        while b + 1 < self.n_bins && v >= self.edge(b + 1) {
            b += 1;
        }
        b
    }

    /// Empirical probability mass of the bin holding `v`.
    pub fn likelihood(&self, v: f64) -> f64 {
        self.counts[self.bin(v)] as f64 / self.total as f64
    }

    /// The n_bins + 1 bin edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|i| self.edge(i)).collect()
    }
}

pub fn fit_distribution(values: &[f64], n_bins: usize) -> Result<BinnedDistribution> {
    if values.is_empty() || n_bins == 0 {
        return Err(Error::validation("binning needs at least one value and one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("fit_distribution", "non-finite training target"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::validation(format!("degenerate bin range: every value is {lo}")));
    }
    let mut d = BinnedDistribution {
        lo,
        hi,
        n_bins,
        counts: vec![0; n_bins],
        total: values.len() as u64,
    };
    for &v in values {
        let b = d.bin(v);
        d.counts[b] += 1;
    }
    Ok(d)
}
