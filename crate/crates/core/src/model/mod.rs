//! Analytic two-photon interference model.
//!
//! The coincidence correlation of an unbalanced interference circuit fed by a
//! single-photon emitter (relative intensity `eta`), a weak coherent laser
//! (`alpha2`) and uncorrelated background (`beta`) is
//!
//! ```text
//! g2(tau) = 1 + [eta^2 (g2_qd(tau) - 1) + 2 eta alpha2 exp(-|tau|/tau_c) cos^2(phi)] / (eta + alpha2 + beta)^2
//! ```
//!
//! where `phi` is the polarization angle between the two sources. Only the
//! ratios of the intensity triple matter.

mod binned;
mod convolve;

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binned::{g2_convolved_grid, g2_convolved_grid_with_derivatives, BinLayout, BinnedModel};
pub use convolve::{convolve_irf, GaussianKernel, TRUNCATION_SIGMAS};

/// Reduced Planck constant in μeV·ps.
pub const HBAR_UEV_PS: f64 = 658.211_956_9;

/// FWHM of a Gaussian in units of its standard deviation, 2·sqrt(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Kernel nodes per standard deviation used for pointwise convolution.
const POINTWISE_NODES_PER_SIGMA: f64 = 128.0;

/// How a quoted timing jitter maps to the Gaussian standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JitterConvention {
    #[default]
    Fwhm,
    Sigma,
}

impl JitterConvention {
    pub fn sigma_from(self, jitter_ps: f64) -> f64 {
        match self {
            JitterConvention::Fwhm => jitter_ps / FWHM_PER_SIGMA,
            JitterConvention::Sigma => jitter_ps,
        }
    }
}

impl std::str::FromStr for JitterConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fwhm" => Ok(JitterConvention::Fwhm),
            "sigma" => Ok(JitterConvention::Sigma),
            other => Err(Error::Parse(format!(
                "unknown jitter convention `{other}` (expected fwhm|sigma)"
            ))),
        }
    }
}

/// Co- or cross-polarized measurement branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Parallel,
    Perpendicular,
}

impl Polarization {
    pub fn phi(self) -> f64 {
        match self {
            Polarization::Parallel => 0.0,
            Polarization::Perpendicular => FRAC_PI_2,
        }
    }
}

/// Antibunched emitter autocorrelation `1 - (1 - g0) exp(-|tau| / tau_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterModel {
    pub g0: f64,
    #[serde(rename = "tau_r_ps")]
    pub tau_r: f64,
}

impl EmitterModel {
    pub fn new(g0: f64, tau_r: f64) -> Result<Self> {
        let e = EmitterModel { g0, tau_r };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.g0) {
            return Err(Error::InvalidParams(format!(
                "g0 = {} must lie in [0, 1]",
                self.g0
            )));
        }
        if !(self.tau_r > 0.0 && self.tau_r.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tau_r = {} ps must be positive",
                self.tau_r
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn g2(&self, tau: f64) -> f64 {
        1.0 - (1.0 - self.g0) * (-tau.abs() / self.tau_r).exp()
    }
}

/// Full parameter set of the interference model plus the instrument response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpiParams {
    pub eta: f64,
    pub alpha2: f64,
    pub beta: f64,
    #[serde(rename = "tau_c_ps")]
    pub tau_c: f64,
    pub emitter: EmitterModel,
    #[serde(rename = "sigma_j_ps")]
    pub sigma_j: f64,
    #[serde(rename = "phi_rad")]
    pub phi: f64,
}

impl TpiParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("alpha2", self.alpha2), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.eta + self.alpha2 + self.beta <= 0.0 {
            return Err(Error::InvalidParams(
                "eta + alpha2 + beta must be positive".into(),
            ));
        }
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "tau_c = {} ps must be positive",
                self.tau_c
            )));
        }
        if !(self.sigma_j >= 0.0 && self.sigma_j.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "sigma_j = {} ps must be >= 0",
                self.sigma_j
            )));
        }
        if !(0.0..=FRAC_PI_2).contains(&self.phi) {
            return Err(Error::InvalidParams(format!(
                "phi = {} rad must lie in [0, pi/2]",
                self.phi
            )));
        }
        self.emitter.validate()
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = phi;
        self
    }

    pub fn with_polarization(self, pol: Polarization) -> Self {
        self.with_phi(pol.phi())
    }

    /// Laser-to-emitter intensity ratio `alpha2 / eta`.
    pub fn ratio(&self) -> f64 {
        self.alpha2 / self.eta
    }

    pub fn total_intensity(&self) -> f64 {
        self.eta + self.alpha2 + self.beta
    }

    /// Largest correlation time scale of the model.
    pub fn correlation_scale(&self) -> f64 {
        self.tau_c.max(self.emitter.tau_r)
    }
}

/// `cos^2(phi)`, exact at the two measurement angles.
#[inline]
pub(crate) fn interference_weight(phi: f64) -> f64 {
    if phi == 0.0 {
        1.0
    } else if phi == FRAC_PI_2 {
        0.0
    } else {
        let c = phi.cos();
        c * c
    }
}

/// Discretised curve over a strictly increasing, zero-symmetric delay grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCurve {
    tau: Vec<f64>,
    values: Vec<f64>,
}

impl ModelCurve {
    pub fn new(tau: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_tau_grid(&tau)?;
        if tau.len() != values.len() {
            return Err(Error::InvalidGrid(format!(
                "{} grid points but {} values",
                tau.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at index {i}")));
        }
        Ok(ModelCurve { tau, values })
    }

    /// Samples `f` on `tau`.
    pub fn sample(tau: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = tau.iter().map(|&t| f(t)).collect();
        Self::new(tau, values)
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.tau, self.values)
    }
}

/// Uniform grid `-half_extent ..= half_extent` with the given step; `half_extent`
/// is rounded down to a whole number of steps.
pub fn symmetric_grid(half_extent: f64, step: f64) -> Vec<f64> {
    let n = (half_extent / step + 1e-9).floor() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

pub(crate) fn validate_tau_grid(tau: &[f64]) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidGrid("empty delay grid".into()));
    }
    if let Some(i) = tau.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite delay at index {i}")));
    }
    if let Some(i) = tau.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "delays not strictly increasing at index {}",
            i + 1
        )));
    }
    let scale = tau[0].abs().max(tau[tau.len() - 1].abs()).max(1.0);
    let n = tau.len();
    for i in 0..n / 2 + 1 {
        if (tau[i] + tau[n - 1 - i]).abs() > 1e-9 * scale {
            return Err(Error::InvalidGrid(format!(
                "grid not symmetric about zero ({} vs {})",
                tau[i],
                tau[n - 1 - i]
            )));
        }
    }
    Ok(())
}

pub fn g2_qd(tau: f64, emitter: &EmitterModel) -> f64 {
    emitter.g2(tau)
}

/// Unchecked model evaluation; callers validate `p` once.
#[inline]
pub(crate) fn g2_tpi_raw(tau: f64, p: &TpiParams, weight: f64) -> f64 {
    let s = p.eta + p.alpha2 + p.beta;
    let dip = p.eta * p.eta * (p.emitter.g2(tau) - 1.0);
    let num = if weight == 0.0 {
        dip
    } else {
        dip + 2.0 * p.eta * p.alpha2 * (-tau.abs() / p.tau_c).exp() * weight
    };
    1.0 + num / (s * s)
}

/// Unconvolved coincidence correlation at delay `tau` (ps).
pub fn g2_tpi(tau: f64, p: &TpiParams) -> Result<f64> {
    p.validate()?;
    Ok(g2_tpi_raw(tau, p, interference_weight(p.phi)))
}

/// Correlation convolved with the Gaussian instrument response, evaluated
/// pointwise at each delay by direct kernel summation.
pub fn g2_tpi_convolved(taus: &[f64], p: &TpiParams) -> Result<Vec<f64>> {
    p.validate()?;
    let w = interference_weight(p.phi);
    if p.sigma_j == 0.0 {
        return Ok(taus.iter().map(|&t| g2_tpi_raw(t, p, w)).collect());
    }
    let kernel = GaussianKernel::new(p.sigma_j, p.sigma_j / POINTWISE_NODES_PER_SIGMA);
    Ok(taus
        .iter()
        .map(|&t| kernel.apply_pointwise(t, |s| g2_tpi_raw(s, p, w)))
        .collect())
}

/// Visibility `(g_par - g_perp) / g_perp` on `tau_grid`, jitter-convolved when
/// `sigma_j > 0`. The `phi` field of `p` is ignored.
pub fn visibility_curve(p: &TpiParams, tau_grid: &[f64]) -> Result<ModelCurve> {
    validate_tau_grid(tau_grid)?;
    let par = g2_tpi_convolved(tau_grid, &p.with_polarization(Polarization::Parallel))?;
    let perp = g2_tpi_convolved(tau_grid, &p.with_polarization(Polarization::Perpendicular))?;
    let mut v = Vec::with_capacity(par.len());
    for (i, (a, b)) in par.iter().zip(&perp).enumerate() {
        if *b == 0.0 {
            return Err(Error::InvalidParams(format!(
                "cross-polarized correlation vanishes at tau = {} ps (division by zero)",
                tau_grid[i]
            )));
        }
        v.push((a - b) / b);
    }
    ModelCurve::new(tau_grid.to_vec(), v)
}

/// Zero-delay visibility for an ideal emitter without jitter or background,
/// `2 / (2 + r)` with `r = alpha2 / eta`.
pub fn ideal_max_visibility(r: f64) -> Result<f64> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("intensity ratio r = {r} must be >= 0")));
    }
    Ok(2.0 / (2.0 + r))
}

/// Single-photon fringe visibility at interferometer delay `delta`.
pub fn coherence_decay(delta: f64, tau_c: f64) -> f64 {
    (-delta.abs() / tau_c).exp()
}

/// Fourier-limited bandwidth in μeV for a coherence time in ps.
pub fn coherence_to_bandwidth(tau_c: f64) -> Result<f64> {
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(Error::Domain(format!("tau_c = {tau_c} ps must be positive")));
    }
    Ok(HBAR_UEV_PS / tau_c)
}

/// Bracket and tolerance for [`optimal_ratio`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioSearch {
    pub r_lo: f64,
    pub r_hi: f64,
    /// Background held at this fraction of the emitter intensity.
    pub beta_over_eta: f64,
    pub tol: f64,
}

impl Default for RatioSearch {
    fn default() -> Self {
        RatioSearch {
            r_lo: 0.01,
            r_hi: 5.0,
            beta_over_eta: 0.02,
            tol: 1e-5,
        }
    }
}

/// Jitter-convolved zero-delay visibility at `eta = 1`, `alpha2 = r`.
pub fn zero_delay_visibility(p: &TpiParams, r: f64, beta_over_eta: f64) -> Result<f64> {
    let q = TpiParams {
        eta: 1.0,
        alpha2: r,
        beta: beta_over_eta,
        ..*p
    };
    Ok(visibility_curve(&q, &[0.0])?.values()[0])
}

/// Intensity ratio `alpha2 / eta` maximising the jitter-convolved visibility
/// at zero delay, by golden-section search on the bracket.
pub fn optimal_ratio(p: &TpiParams, search: &RatioSearch) -> Result<f64> {
    let RatioSearch {
        r_lo,
        r_hi,
        beta_over_eta,
        tol,
    } = *search;
    if !(r_lo > 0.0 && r_hi > r_lo && r_hi.is_finite()) {
        return Err(Error::Domain(format!(
            "ratio bracket [{r_lo}, {r_hi}] must satisfy 0 < lo < hi"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    if !(beta_over_eta >= 0.0) {
        return Err(Error::Domain(format!(
            "beta_over_eta = {beta_over_eta} must be >= 0"
        )));
    }
    p.emitter.validate()?;
    let f = |r: f64| zero_delay_visibility(p, r, beta_over_eta);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (r_lo, r_hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let r_star = 0.5 * (a + b);
    if r_star - r_lo <= 2.0 * tol || r_hi - r_star <= 2.0 * tol {
        return Err(Error::NoInteriorMaximum {
            lo: r_lo,
            hi: r_hi,
            at: r_star,
        });
    }
    Ok(r_star)
}

/// Parameters the model can be differentiated with respect to. Intensities
/// enter only through `alpha2 / eta` and `beta / eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelParam {
    #[serde(rename = "alpha2_over_eta")]
    AlphaRatio,
    #[serde(rename = "beta_over_eta")]
    BetaRatio,
    G0,
    #[serde(rename = "tau_r_ps")]
    TauR,
    #[serde(rename = "tau_c_ps")]
    TauC,
    #[serde(rename = "sigma_j_ps")]
    SigmaJ,
    #[serde(rename = "phi_rad")]
    Phi,
}

impl ModelParam {
    pub const ALL: [ModelParam; 7] = [
        ModelParam::AlphaRatio,
        ModelParam::BetaRatio,
        ModelParam::G0,
        ModelParam::TauR,
        ModelParam::TauC,
        ModelParam::SigmaJ,
        ModelParam::Phi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelParam::AlphaRatio => "alpha2_over_eta",
            ModelParam::BetaRatio => "beta_over_eta",
            ModelParam::G0 => "g0",
            ModelParam::TauR => "tau_r_ps",
            ModelParam::TauC => "tau_c_ps",
            ModelParam::SigmaJ => "sigma_j_ps",
            ModelParam::Phi => "phi_rad",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ModelParam::TauR | ModelParam::TauC | ModelParam::SigmaJ => "ps",
            ModelParam::Phi => "rad",
            _ => "1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let short = match name {
            "alpha2" | "r" => return Some(ModelParam::AlphaRatio),
            "beta" => return Some(ModelParam::BetaRatio),
            "tau_r" => return Some(ModelParam::TauR),
            "tau_c" => return Some(ModelParam::TauC),
            "sigma_j" => return Some(ModelParam::SigmaJ),
            "phi" | "phi_perp" => return Some(ModelParam::Phi),
            n => n,
        };
        ModelParam::ALL.into_iter().find(|p| p.name() == short)
    }

    /// Reads the parameter from `p` (ratios are relative to `eta`).
    pub fn get(self, p: &TpiParams) -> f64 {
        match self {
            ModelParam::AlphaRatio => p.alpha2 / p.eta,
            ModelParam::BetaRatio => p.beta / p.eta,
            ModelParam::G0 => p.emitter.g0,
            ModelParam::TauR => p.emitter.tau_r,
            ModelParam::TauC => p.tau_c,
            ModelParam::SigmaJ => p.sigma_j,
            ModelParam::Phi => p.phi,
        }
    }

    /// Writes the parameter into `p`, keeping `eta` fixed.
    pub fn set(self, p: &mut TpiParams, v: f64) {
        match self {
            ModelParam::AlphaRatio => p.alpha2 = v * p.eta,
            ModelParam::BetaRatio => p.beta = v * p.eta,
            ModelParam::G0 => p.emitter.g0 = v,
            ModelParam::TauR => p.emitter.tau_r = v,
            ModelParam::TauC => p.tau_c = v,
            ModelParam::SigmaJ => p.sigma_j = v,
            ModelParam::Phi => p.phi = v,
        }
    }
}

/// Partial derivative of the unconvolved correlation with respect to `param`.
/// `SigmaJ` does not enter the unconvolved curve and yields zero.
pub(crate) fn g2_tpi_derivative(tau: f64, p: &TpiParams, param: ModelParam) -> f64 {
    let r = p.alpha2 / p.eta;
    let b = p.beta / p.eta;
    let s = 1.0 + r + b;
    let s2 = s * s;
    let a = tau.abs();
    let e_c = (-a / p.tau_c).exp();
    let e_r = (-a / p.emitter.tau_r).exp();
    let w = interference_weight(p.phi);
    let one_minus_g0 = 1.0 - p.emitter.g0;
    let num = -one_minus_g0 * e_r + 2.0 * r * e_c * w;
    match param {
        ModelParam::AlphaRatio => 2.0 * e_c * w / s2 - 2.0 * num / (s2 * s),
        ModelParam::BetaRatio => -2.0 * num / (s2 * s),
        ModelParam::G0 => e_r / s2,
        ModelParam::TauR => {
            let tr = p.emitter.tau_r;
            -one_minus_g0 * e_r * a / (tr * tr) / s2
        }
        ModelParam::TauC => 2.0 * r * w * e_c * a / (p.tau_c * p.tau_c) / s2,
        ModelParam::Phi => -2.0 * r * e_c * (2.0 * p.phi).sin() / s2,
        ModelParam::SigmaJ => 0.0,
    }
}
