//! Jitter-convolved model on uniform grids and averaged over histogram bins.
//!
//! The analytic curve is evaluated on a padded grid, so no edge continuation
//! is needed; the convolution is the same unit-sum kernel summation as
//! [`super::convolve_irf`].

use super::convolve::{convolve_valid, GaussianKernel};
use super::{g2_tpi_derivative, g2_tpi_raw, interference_weight, ModelParam, TpiParams};
use crate::error::{Error, Result};

/// Default upper bound on the sub-bin integration step, ps.
const DEFAULT_MAX_STEP: f64 = 2.0;

/// Contiguous bins `[first_edge + i w, first_edge + (i + 1) w)` in continuous delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinLayout {
    pub first_edge: f64,
    pub bin_width: f64,
    pub n_bins: usize,
}

impl BinLayout {
    /// Layout matching integer-picosecond histogram bins `[tau_min + i w, tau_min + (i+1) w)`:
    /// an integer delay `t` stands for continuous delays in `[t - 1/2, t + 1/2)`.
    pub fn integer_bins(tau_min: i64, bin_width: i64, n_bins: usize) -> Self {
        BinLayout {
            first_edge: tau_min as f64 - 0.5,
            bin_width: bin_width as f64,
            n_bins,
        }
    }
}

fn unit_weight(param: ModelParam) -> bool {
    param == ModelParam::SigmaJ
}

fn padded_nodes(first: f64, step: f64, n: usize, pad: usize) -> impl Iterator<Item = f64> {
    let start = first - pad as f64 * step;
    (0..n + 2 * pad).map(move |j| start + j as f64 * step)
}

/// Convolved correlation at `first + j * step`, `j = 0..n`.
pub fn g2_convolved_grid(p: &TpiParams, first: f64, step: f64, n: usize) -> Result<Vec<f64>> {
    Ok(g2_convolved_grid_with_derivatives(p, first, step, n, &[])?.0)
}

/// As [`g2_convolved_grid`], also returning one derivative column per entry of `params`.
pub fn g2_convolved_grid_with_derivatives(
    p: &TpiParams,
    first: f64,
    step: f64,
    n: usize,
    params: &[ModelParam],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    p.validate()?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidGrid(format!("step {step} must be positive")));
    }
    let w = interference_weight(p.phi);
    if p.sigma_j == 0.0 {
        let nodes: Vec<f64> = padded_nodes(first, step, n, 0).collect();
        let values = nodes.iter().map(|&t| g2_tpi_raw(t, p, w)).collect();
        let derivs = params
            .iter()
            .map(|&q| nodes.iter().map(|&t| g2_tpi_derivative(t, p, q)).collect())
            .collect();
        return Ok((values, derivs));
    }

    let kernel = GaussianKernel::new(p.sigma_j, step);
    let pad = kernel.half_len();
    let nodes: Vec<f64> = padded_nodes(first, step, n, pad).collect();
    let raw: Vec<f64> = nodes.iter().map(|&t| g2_tpi_raw(t, p, w)).collect();
    let values = convolve_valid(&raw, kernel.weights());
    let mut sigma_weights = None;
    let derivs = params
        .iter()
        .map(|&q| {
            if unit_weight(q) {
                let dw = sigma_weights.get_or_insert_with(|| kernel.sigma_derivative());
                convolve_valid(&raw, dw)
            } else {
                let d: Vec<f64> = nodes.iter().map(|&t| g2_tpi_derivative(t, p, q)).collect();
                convolve_valid(&d, kernel.weights())
            }
        })
        .collect();
    Ok((values, derivs))
}

/// Bin-averaged, jitter-convolved correlation for a fixed bin layout.
#[derive(Debug, Clone)]
pub struct BinnedModel {
    layout: BinLayout,
    max_step: f64,
}

impl BinnedModel {
    pub fn new(layout: BinLayout) -> Result<Self> {
        if !(layout.bin_width > 0.0) || layout.n_bins == 0 {
            return Err(Error::InvalidGrid(format!(
                "bin layout needs positive width and at least one bin ({layout:?})"
            )));
        }
        Ok(BinnedModel {
            layout,
            max_step: DEFAULT_MAX_STEP,
        })
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn layout(&self) -> &BinLayout {
        &self.layout
    }

    /// Sub-nodes per bin for a given jitter.
    fn subdivisions(&self, sigma_j: f64) -> usize {
        let target = if sigma_j > 0.0 {
            (sigma_j / 4.0).min(self.max_step)
        } else {
            self.max_step
        };
        (self.layout.bin_width / target).ceil().max(1.0) as usize
    }

    fn bin_average(&self, nodes: &[f64], m: usize) -> Vec<f64> {
        (0..self.layout.n_bins)
            .map(|i| {
                let seg = &nodes[i * m..=(i + 1) * m];
                let inner: f64 = seg[1..m].iter().sum();
                (inner + 0.5 * (seg[0] + seg[m])) / m as f64
            })
            .collect()
    }

    pub fn evaluate(&self, p: &TpiParams) -> Result<Vec<f64>> {
        Ok(self.evaluate_with_jacobian(p, &[])?.0)
    }

    /// Bin values and `d value / d param` columns.
    pub fn evaluate_with_jacobian(
        &self,
        p: &TpiParams,
        params: &[ModelParam],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = self.subdivisions(p.sigma_j);
        let step = self.layout.bin_width / m as f64;
        let n_nodes = self.layout.n_bins * m + 1;
        let (values, derivs) =
            g2_convolved_grid_with_derivatives(p, self.layout.first_edge, step, n_nodes, params)?;
        Ok((
            self.bin_average(&values, m),
            derivs.iter().map(|d| self.bin_average(d, m)).collect(),
        ))
    }
}
