use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{map_json_error, read_to_string, write_atomic};
use crate::error::{Error, Result};
use crate::model::{EmitterModel, JitterConvention, RatioSearch, TpiParams};
use crate::simulate::{DetectorSpec, HistogramGrid};

const BUNDLED_OBAND: &str = include_str!("../../scenarios/paper_oband.json");

fn default_bin_width() -> i64 {
    48
}

fn default_beta_over_eta() -> f64 {
    0.02
}

/// Model parameters as written in a scenario file. The timing jitter is
/// stored as quoted and converted with the scenario's jitter convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub eta: f64,
    pub alpha2: f64,
    pub beta: f64,
    pub tau_c_ps: f64,
    pub g0: f64,
    pub tau_r_ps: f64,
    pub jitter_ps: f64,
    #[serde(default)]
    pub phi_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorPair {
    pub d1: DetectorSpec,
    pub d2: DetectorSpec,
}

/// A complete simulation/analysis configuration. Rates are in counts/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub qd_rate: f64,
    pub laser_rate: f64,
    pub params: ScenarioParams,
    #[serde(default)]
    pub jitter_convention: JitterConvention,
    pub detectors: DetectorPair,
    pub span_ps: i64,
    #[serde(default = "default_bin_width")]
    pub bin_width_ps: i64,
    /// Half-width of the symmetric delay range.
    pub tau_range_ps: i64,
    pub seeds: Vec<u64>,
    /// Background fraction used by the intensity-ratio optimisation.
    #[serde(default = "default_beta_over_eta")]
    pub beta_over_eta: f64,
}

fn nonneg(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be a finite value >= 0 (got {v})")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be a finite value > 0 (got {v})")))
    }
}

impl Scenario {
    /// The bundled O-band scenario.
    pub fn paper_oband() -> Self {
        serde_json::from_str(BUNDLED_OBAND).expect("bundled scenario parses")
    }

    pub fn validate(&self) -> Result<()> {
        nonneg("qd_rate", self.qd_rate)?;
        nonneg("laser_rate", self.laser_rate)?;
        let p = &self.params;
        nonneg("params.eta", p.eta)?;
        nonneg("params.alpha2", p.alpha2)?;
        nonneg("params.beta", p.beta)?;
        if p.eta + p.alpha2 + p.beta <= 0.0 {
            return Err(Error::validation("params", "eta + alpha2 + beta must be > 0"));
        }
        positive("params.tau_c_ps", p.tau_c_ps)?;
        if !(0.0..=1.0).contains(&p.g0) {
            return Err(Error::validation("params.g0", format!("must lie in [0, 1] (got {})", p.g0)));
        }
        positive("params.tau_r_ps", p.tau_r_ps)?;
        nonneg("params.jitter_ps", p.jitter_ps)?;
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&p.phi_rad) {
            return Err(Error::validation("params.phi_rad", "must lie in [0, pi/2]"));
        }
        for (name, d) in [("detectors.d1", &self.detectors.d1), ("detectors.d2", &self.detectors.d2)] {
            d.validate().map_err(|e| match e {
                Error::Validation { field, constraint } => {
                    Error::validation(format!("{name}.{field}"), constraint)
                }
                other => other,
            })?;
        }
        if self.span_ps <= 0 {
            return Err(Error::validation("span_ps", "must be > 0"));
        }
        if self.bin_width_ps <= 0 {
            return Err(Error::validation("bin_width_ps", "must be > 0"));
        }
        if self.tau_range_ps <= 0 {
            return Err(Error::validation("tau_range_ps", "must be > 0"));
        }
        if (2 * self.tau_range_ps) % self.bin_width_ps != 0 {
            return Err(Error::validation(
                "tau_range_ps",
                "2 x tau_range_ps must be a multiple of bin_width_ps",
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "at least one seed is required"));
        }
        nonneg("beta_over_eta", self.beta_over_eta)?;
        Ok(())
    }

    pub fn sigma_j(&self) -> f64 {
        self.jitter_convention.sigma_from(self.params.jitter_ps)
    }

    pub fn tpi_params(&self) -> TpiParams {
        let p = &self.params;
        TpiParams {
            eta: p.eta,
            alpha2: p.alpha2,
            beta: p.beta,
            tau_c: p.tau_c_ps,
            emitter: EmitterModel {
                g0: p.g0,
                tau_r: p.tau_r_ps,
            },
            sigma_j: self.sigma_j(),
            phi: p.phi_rad,
        }
    }

    pub fn grid(&self) -> Result<HistogramGrid> {
        HistogramGrid::symmetric(self.bin_width_ps, self.tau_range_ps)
    }

    pub fn ratio_search(&self) -> RatioSearch {
        RatioSearch {
            beta_over_eta: self.beta_over_eta,
            ..RatioSearch::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(map_json_error)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::from_json(&read_to_string(path.as_ref())?)
}

pub fn save_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    scenario.validate()?;
    let mut text = scenario.to_json();
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}
