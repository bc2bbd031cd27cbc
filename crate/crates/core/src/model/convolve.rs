use super::ModelCurve;
use crate::error::{Error, Result};

/// Kernel half-width in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 6.0;

/// Relative flatness below which a curve is considered to have reached its
/// asymptote.
const SUPPORT_TOL: f64 = 1e-9;

/// Unit-sum sampled Gaussian, truncated at [`TRUNCATION_SIGMAS`].
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    sigma: f64,
    step: f64,
    half_len: usize,
    weights: Vec<f64>,
    // unnormalised samples, kept for the sigma derivative
    raw: Vec<f64>,
    raw_sum: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64, step: f64) -> Self {
        debug_assert!(sigma > 0.0 && step > 0.0);
        let half_len = (TRUNCATION_SIGMAS * sigma / step).ceil() as usize;
        let raw: Vec<f64> = (-(half_len as i64)..=half_len as i64)
            .map(|k| {
                let x = k as f64 * step / sigma;
                (-0.5 * x * x).exp()
            })
            .collect();
        let raw_sum: f64 = raw.iter().sum();
        let weights = raw.iter().map(|g| g / raw_sum).collect();
        GaussianKernel {
            sigma,
            step,
            half_len,
            weights,
            raw,
            raw_sum,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of nodes on each side of the centre.
    pub fn half_len(&self) -> usize {
        self.half_len
    }

    /// Weights for offsets `-half_len ..= half_len`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Derivative of the normalised weights with respect to sigma.
    pub fn sigma_derivative(&self) -> Vec<f64> {
        let s3 = self.sigma.powi(3);
        let dg: Vec<f64> = self
            .raw
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let x = (i as f64 - self.half_len as f64) * self.step;
                g * x * x / s3
            })
            .collect();
        let dsum: f64 = dg.iter().sum();
        dg.iter()
            .zip(&self.weights)
            .map(|(d, w)| (d - w * dsum) / self.raw_sum)
            .collect()
    }

    /// Convolution of a continuous function evaluated at a single point.
    pub fn apply_pointwise(&self, tau: f64, f: impl Fn(f64) -> f64) -> f64 {
        let k = self.half_len as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * f(tau - (i as f64 - k) * self.step))
            .sum()
    }
}

/// "Valid"-mode discrete convolution: `padded` carries `half_len` extra samples
/// on each side; the result has `padded.len() - 2 * half_len` entries.
pub(crate) fn convolve_valid(padded: &[f64], weights: &[f64]) -> Vec<f64> {
    let k = weights.len();
    if padded.len() < k {
        return Vec::new();
    }
    padded
        .windows(k)
        .map(|win| {
            // kernel is symmetric, so correlation == convolution
            win.iter().zip(weights).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Convolves a sampled curve with a unit-area Gaussian of standard deviation
/// `sigma_j` (ps) by direct kernel summation.
///
/// The grid must be uniform with step at most `sigma_j / 2`, and the curve
/// must already be flat within `6 * sigma_j` of both edges; beyond the grid
/// it is continued with its edge values.
pub fn convolve_irf(curve: &ModelCurve, sigma_j: f64) -> Result<ModelCurve> {
    if !(sigma_j >= 0.0 && sigma_j.is_finite()) {
        return Err(Error::Domain(format!("sigma_j = {sigma_j} ps must be >= 0")));
    }
    if sigma_j == 0.0 {
        return Ok(curve.clone());
    }
    let tau = curve.tau();
    let values = curve.values();
    let n = tau.len();
    if n < 2 {
        return Err(Error::GridTooShort {
            needed: TRUNCATION_SIGMAS * sigma_j,
            extent: 0.0,
        });
    }
    let step = (tau[n - 1] - tau[0]) / (n - 1) as f64;
    if let Some(i) = tau
        .windows(2)
        .position(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step)
    {
        return Err(Error::InvalidGrid(format!(
            "grid not uniform at index {}",
            i + 1
        )));
    }
    if step > sigma_j / 2.0 {
        return Err(Error::GridTooCoarse {
            step,
            limit: sigma_j / 2.0,
        });
    }

    let kernel = GaussianKernel::new(sigma_j, step);
    let k = kernel.half_len();
    check_padding(tau, values, k, sigma_j)?;

    let mut padded = Vec::with_capacity(n + 2 * k);
    padded.extend(std::iter::repeat(values[0]).take(k));
    padded.extend_from_slice(values);
    padded.extend(std::iter::repeat(values[n - 1]).take(k));
    let out = convolve_valid(&padded, kernel.weights());
    ModelCurve::new(tau.to_vec(), out)
}

fn check_padding(tau: &[f64], values: &[f64], k: usize, sigma_j: f64) -> Result<()> {
    let n = values.len();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = SUPPORT_TOL * scale.max(f64::MIN_POSITIVE);
    let extent = tau[n - 1];
    let needed = |support: f64| support + TRUNCATION_SIGMAS * sigma_j;
    if k >= n {
        return Err(Error::GridTooShort {
            needed: needed(0.0),
            extent,
        });
    }
    let (left, right) = (values[0], values[n - 1]);
    let left_support = values.iter().position(|v| (v - left).abs() > tol);
    let right_support = values.iter().rposition(|v| (v - right).abs() > tol);
    if let (Some(l), Some(r)) = (left_support, right_support) {
        // the outermost k samples on each side must be flat
        if l < k || r + k >= n {
            let support = tau[l].abs().max(tau[r].abs());
            return Err(Error::GridTooShort {
                needed: needed(support),
                extent,
            });
        }
    }
    Ok(())
}
