use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::{CorrelationHistogram, HistogramGrid};

/// Minimum number of tail bins required on each side.
pub const MIN_TAIL_BINS: usize = 20;

/// Fraction of the half range used as tail window by default.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// Tail-normalized correlation with per-bin Poissonian errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedG2 {
    pub grid: HistogramGrid,
    pub tau_centers: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Mean tail count the raw counts were divided by.
    pub normalization_constant: f64,
}

impl NormalizedG2 {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn default_tail_window(grid: &HistogramGrid) -> f64 {
    DEFAULT_TAIL_FRACTION * grid.half_range() as f64
}

/// Indices of bins whose centre lies at `|tau| >= half_range - tail_window`.
pub fn tail_bins(grid: &HistogramGrid, tail_window: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let half = grid.half_range() as f64;
    if !(tail_window > 0.0 && tail_window < half) {
        return Err(Error::TailWindowInvalid(format!(
            "tail window {tail_window} ps must lie in (0, {half}) ps"
        )));
    }
    let edge = half - tail_window;
    let centers = grid.centers();
    let left: Vec<usize> = (0..centers.len()).filter(|&i| centers[i] <= -edge).collect();
    let right: Vec<usize> = (0..centers.len()).filter(|&i| centers[i] >= edge).collect();
    if left.len() < MIN_TAIL_BINS || right.len() < MIN_TAIL_BINS {
        return Err(Error::TailWindowInvalid(format!(
            "tail window {tail_window} ps holds {} / {} bins, need at least {MIN_TAIL_BINS} per side",
            left.len(),
            right.len()
        )));
    }
    Ok((left, right))
}

/// Divides counts by the mean count of both tail windows. Errors are
/// `sqrt(counts) / C`, with empty bins assigned the error of a single count.
pub fn normalize_histogram(h: &CorrelationHistogram, tail_window: f64) -> Result<NormalizedG2> {
    let grid = *h.grid();
    let (left, right) = tail_bins(&grid, tail_window)?;
    let counts = h.counts();
    let tail_sum: u64 = left.iter().chain(&right).map(|&i| counts[i]).sum();
    let c = tail_sum as f64 / (left.len() + right.len()) as f64;
    if c == 0.0 {
        return Err(Error::TailMeanZero);
    }
    let values = counts.iter().map(|&n| n as f64 / c).collect();
    let sigma = counts.iter().map(|&n| (n.max(1) as f64).sqrt() / c).collect();
    Ok(NormalizedG2 {
        grid,
        tau_centers: grid.centers(),
        values,
        sigma,
        normalization_constant: c,
    })
}
