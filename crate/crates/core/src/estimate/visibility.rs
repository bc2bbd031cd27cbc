use serde::Serialize;

use super::NormalizedG2;
use crate::error::{Error, Result};
use crate::model::ideal_max_visibility;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisibilityCurve {
    pub tau_centers: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma_v: Vec<f64>,
    /// Bin centres dropped because the cross-polarized value was zero.
    pub excluded: Vec<f64>,
}

impl VisibilityCurve {
    /// Largest visibility and its error.
    pub fn peak(&self) -> Option<(f64, f64, f64)> {
        (0..self.v.len())
            .max_by(|&a, &b| self.v[a].total_cmp(&self.v[b]))
            .map(|i| (self.tau_centers[i], self.v[i], self.sigma_v[i]))
    }
}

/// Per-bin `(g_par - g_perp) / g_perp` with first-order error propagation.
pub fn visibility_from_histograms(par: &NormalizedG2, perp: &NormalizedG2) -> Result<VisibilityCurve> {
    if par.tau_centers != perp.tau_centers {
        return Err(Error::GridMismatch(
            "co- and cross-polarized curves use different bins".into(),
        ));
    }
    let mut out = VisibilityCurve {
        tau_centers: Vec::with_capacity(par.len()),
        v: Vec::with_capacity(par.len()),
        sigma_v: Vec::with_capacity(par.len()),
        excluded: Vec::new(),
    };
    for i in 0..par.len() {
        let (gp, sp) = (par.values[i], par.sigma[i]);
        let (gq, sq) = (perp.values[i], perp.sigma[i]);
        if gq == 0.0 {
            out.excluded.push(par.tau_centers[i]);
            continue;
        }
        let a = sp / gq;
        let b = gp * sq / (gq * gq);
        out.tau_centers.push(par.tau_centers[i]);
        out.v.push((gp - gq) / gq);
        out.sigma_v.push((a * a + b * b).sqrt());
    }
    Ok(out)
}

/// Measured visibility as a fraction of the ideal visibility at ratio `r`.
pub fn fraction_of_max(v_meas: f64, r: f64) -> Result<f64> {
    if !(v_meas >= 0.0 && v_meas.is_finite()) {
        return Err(Error::Domain(format!("visibility {v_meas} must be >= 0")));
    }
    Ok(v_meas / ideal_max_visibility(r)?)
}
