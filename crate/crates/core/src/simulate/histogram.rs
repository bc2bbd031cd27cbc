use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BinLayout;

/// Contiguous integer-picosecond bins `[tau_min + i w, tau_min + (i + 1) w)`
/// spanning a range symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramGrid {
    bin_width: i64,
    tau_min: i64,
    n_bins: usize,
}

impl HistogramGrid {
    pub fn new(bin_width: i64, tau_min: i64, n_bins: usize) -> Result<Self> {
        if bin_width <= 0 {
            return Err(Error::InvalidGrid(format!(
                "bin width {bin_width} ps must be positive"
            )));
        }
        if n_bins == 0 {
            return Err(Error::InvalidGrid("histogram needs at least one bin".into()));
        }
        let width = bin_width
            .checked_mul(n_bins as i64)
            .ok_or_else(|| Error::InvalidGrid("histogram range overflows".into()))?;
        if tau_min.checked_mul(-2) != Some(width) {
            return Err(Error::InvalidGrid(format!(
                "range [{tau_min}, {}) ps is not symmetric about zero",
                tau_min + width
            )));
        }
        Ok(HistogramGrid {
            bin_width,
            tau_min,
            n_bins,
        })
    }

    /// Bins covering `[-half_range, half_range)`; `2 * half_range` must be a
    /// multiple of `bin_width`. An odd bin count centres a bin on zero.
    pub fn symmetric(bin_width: i64, half_range: i64) -> Result<Self> {
        if bin_width <= 0 || half_range <= 0 {
            return Err(Error::InvalidGrid(format!(
                "bin width {bin_width} ps and half range {half_range} ps must be positive"
            )));
        }
        if (2 * half_range) % bin_width != 0 {
            return Err(Error::InvalidGrid(format!(
                "2 x half range {half_range} ps is not a multiple of bin width {bin_width} ps"
            )));
        }
        Self::new(bin_width, -half_range, (2 * half_range / bin_width) as usize)
    }

    pub fn bin_width(&self) -> i64 {
        self.bin_width
    }

    pub fn tau_min(&self) -> i64 {
        self.tau_min
    }

    /// Exclusive upper edge.
    pub fn tau_max(&self) -> i64 {
        self.tau_min + self.bin_width * self.n_bins as i64
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn half_range(&self) -> i64 {
        -self.tau_min
    }

    #[inline]
    pub fn bin_of(&self, tau: i64) -> Option<usize> {
        if tau < self.tau_min || tau >= self.tau_max() {
            None
        } else {
            Some(((tau - self.tau_min) / self.bin_width) as usize)
        }
    }

    /// Nominal bin centres in ps.
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins)
            .map(|i| self.tau_min as f64 + (i as f64 + 0.5) * self.bin_width as f64)
            .collect()
    }

    pub fn layout(&self) -> BinLayout {
        BinLayout::integer_bins(self.tau_min, self.bin_width, self.n_bins)
    }
}

/// Coincidence counts over signed delay bins with acquisition metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationHistogram {
    grid: HistogramGrid,
    counts: Vec<u64>,
    overflow: u64,
    span_ps: i64,
    n_start: u64,
    n_stop: u64,
    seed_list: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn empty(grid: HistogramGrid) -> Self {
        CorrelationHistogram {
            grid,
            counts: vec![0; grid.n_bins()],
            overflow: 0,
            span_ps: 0,
            n_start: 0,
            n_stop: 0,
            seed_list: Vec::new(),
        }
    }

    /// Rebuilds a histogram from stored parts, checking the bin count.
    pub fn from_parts(
        grid: HistogramGrid,
        counts: Vec<u64>,
        overflow: u64,
        span_ps: i64,
        n_start: u64,
        n_stop: u64,
        seed_list: Vec<u64>,
    ) -> Result<Self> {
        if counts.len() != grid.n_bins() {
            return Err(Error::InvalidGrid(format!(
                "{} counts for {} bins",
                counts.len(),
                grid.n_bins()
            )));
        }
        if span_ps < 0 {
            return Err(Error::InvalidGrid(format!("span {span_ps} ps is negative")));
        }
        Ok(CorrelationHistogram {
            grid,
            counts,
            overflow,
            span_ps,
            n_start,
            n_stop,
            seed_list,
        })
    }

    pub fn with_metadata(mut self, span_ps: i64, n_start: u64, n_stop: u64, seeds: &[u64]) -> Self {
        self.span_ps = span_ps;
        self.n_start = n_start;
        self.n_stop = n_stop;
        self.seed_list = seeds.to_vec();
        self
    }

    #[inline]
    pub fn add(&mut self, tau: i64) {
        match self.grid.bin_of(tau) {
            Some(i) => self.counts[i] += 1,
            None => self.overflow += 1,
        }
    }

    pub fn grid(&self) -> &HistogramGrid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Values that fell outside the binned range.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn span_ps(&self) -> i64 {
        self.span_ps
    }

    pub fn n_start(&self) -> u64 {
        self.n_start
    }

    pub fn n_stop(&self) -> u64 {
        self.n_stop
    }

    pub fn seed_list(&self) -> &[u64] {
        &self.seed_list
    }

    pub fn total_in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds another realization on the same grid. Seeds are kept sorted so
    /// that merging is order-independent.
    pub fn merge(&mut self, other: &CorrelationHistogram) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        self.span_ps += other.span_ps;
        self.n_start += other.n_start;
        self.n_stop += other.n_stop;
        self.seed_list.extend_from_slice(&other.seed_list);
        self.seed_list.sort_unstable();
        Ok(())
    }
}

/// Bins signed delays; values outside the grid are counted as overflow.
pub fn histogram(taus: &[i64], grid: HistogramGrid) -> CorrelationHistogram {
    let mut h = CorrelationHistogram::empty(grid);
    for &t in taus {
        h.add(t);
    }
    h
}
