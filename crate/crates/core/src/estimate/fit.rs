use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LeastSquaresProblem, LmOutcome, LmSettings};
use super::NormalizedG2;
use crate::error::{Error, Result};
use crate::model::{BinnedModel, ModelParam, TpiParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// Zero for parameters held fixed.
    pub std_error: f64,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: Vec<ParamEstimate>,
    /// Names of the free parameters, in covariance order.
    pub covariance_names: Vec<String>,
    /// Row-major covariance of the free parameters.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub n_iterations: usize,
    #[serde(skip)]
    pub chi2_trace: Vec<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.get(name).map(|p| p.std_error)
    }

    /// `chi2 / dof`; undefined for an exactly determined fit.
    pub fn reduced_chi2(&self) -> Option<f64> {
        (self.dof > 0).then(|| self.chi2 / self.dof as f64)
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.covariance_names.len();
        DMatrix::from_row_slice(n, n, &self.covariance)
    }

    fn from_outcome(out: &LmOutcome, free: &[(String, String)], fixed: Vec<ParamEstimate>) -> Self {
        let n = free.len();
        let mut params: Vec<ParamEstimate> = free
            .iter()
            .enumerate()
            .map(|(i, (name, unit))| ParamEstimate {
                name: name.clone(),
                unit: unit.clone(),
                value: out.x[i],
                std_error: out.covariance[(i, i)].max(0.0).sqrt(),
                free: true,
            })
            .collect();
        params.extend(fixed);
        let mut covariance = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                // symmetrise against round-off
                covariance.push(0.5 * (out.covariance[(i, j)] + out.covariance[(j, i)]));
            }
        }
        FitResult {
            params,
            covariance_names: free.iter().map(|(n, _)| n.clone()).collect(),
            covariance,
            chi2: out.chi2,
            dof: out.n_residuals - n,
            converged: true,
            n_iterations: out.n_iterations,
            chi2_trace: out.chi2_trace.clone(),
        }
    }
}

/// One Mach-Zehnder fringe-visibility measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub delay_ps: f64,
    pub visibility: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFitOptions {
    /// Fit the zero-delay amplitude; otherwise it is held at 1.
    pub free_amplitude: bool,
    pub lm: LmSettings,
}

impl Default for ExpFitOptions {
    fn default() -> Self {
        ExpFitOptions {
            free_amplitude: true,
            lm: LmSettings::default(),
        }
    }
}

struct ExpProblem<'a> {
    points: &'a [CoherencePoint],
    free_amplitude: bool,
}

impl ExpProblem<'_> {
    fn split(&self, x: &[f64]) -> (f64, f64) {
        if self.free_amplitude {
            (x[0], x[1])
        } else {
            (1.0, x[0])
        }
    }
}

impl LeastSquaresProblem for ExpProblem<'_> {
    fn n_params(&self) -> usize {
        1 + self.free_amplitude as usize
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let (a, tau_c) = self.split(x);
        if !(tau_c > 0.0) {
            return None;
        }
        Some(
            self.points
                .iter()
                .map(|p| (a * (-p.delay_ps.abs() / tau_c).exp() - p.visibility) / p.sigma)
                .collect(),
        )
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let r = self.residuals(x)?;
        let (a, tau_c) = self.split(x);
        let n = self.n_params();
        let j = DMatrix::from_fn(self.points.len(), n, |i, k| {
            let p = &self.points[i];
            let d = p.delay_ps.abs();
            let e = (-d / tau_c).exp();
            if self.free_amplitude && k == 0 {
                e / p.sigma
            } else {
                a * e * d / (tau_c * tau_c) / p.sigma
            }
        });
        Some((r, j))
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.free_amplitude {
            v.push("amplitude".to_string());
        }
        v.push("tau_c_ps".to_string());
        v
    }
}

/// Weighted fit of `A exp(-|delay| / tau_c)` to fringe visibilities.
pub fn fit_exponential_visibility(points: &[CoherencePoint], options: &ExpFitOptions) -> Result<FitResult> {
    let n_free = 1 + options.free_amplitude as usize;
    if points.len() < n_free {
        return Err(Error::DegenerateData(format!(
            "{} points for {n_free} free parameters",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.sigma > 0.0) || !p.visibility.is_finite()) {
        return Err(Error::DegenerateData(format!(
            "point at {} ps has non-positive error or non-finite value",
            p.delay_ps
        )));
    }
    let d0 = points[0].delay_ps.abs();
    if points.iter().all(|p| p.delay_ps.abs() == d0) {
        return Err(Error::DegenerateData("all delays are equal".into()));
    }

    // log-linear start on the positive points
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points.iter().filter(|p| p.visibility > 0.0) {
        let w = (p.visibility / p.sigma).powi(2);
        let (x, y) = (p.delay_ps.abs(), p.visibility.ln());
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sw * sxx - sx * sx;
    let (mut a0, mut tau0) = (1.0, 0.0);
    if det > 0.0 {
        let slope = (sw * sxy - sx * sy) / det;
        if slope < 0.0 {
            tau0 = -1.0 / slope;
            a0 = ((sy - slope * sx) / sw).exp();
        }
    }
    if !(tau0 > 0.0 && tau0.is_finite()) {
        let max_d = points.iter().fold(0.0f64, |m, p| m.max(p.delay_ps.abs()));
        tau0 = 0.5 * max_d;
    }

    let problem = ExpProblem {
        points,
        free_amplitude: options.free_amplitude,
    };
    let x0 = if options.free_amplitude { vec![a0, tau0] } else { vec![tau0] };
    let out = minimize(&problem, &x0, &options.lm)?;

    let mut free = Vec::new();
    let mut fixed = Vec::new();
    if options.free_amplitude {
        free.push(("amplitude".to_string(), "1".to_string()));
    } else {
        fixed.push(ParamEstimate {
            name: "amplitude".into(),
            unit: "1".into(),
            value: 1.0,
            std_error: 0.0,
            free: false,
        });
    }
    free.push(("tau_c_ps".to_string(), "ps".to_string()));
    Ok(FitResult::from_outcome(&out, &free, fixed))
}

/// Options for the joint co/cross-polarized fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G2FitOptions {
    /// Parameters varied by the fit; all others stay at their initial values.
    /// `Phi` refers to the cross-polarized angle only.
    pub free: Vec<ModelParam>,
    /// Polarization angle of the cross-polarized curve (start value when free).
    pub phi_perp: f64,
    /// Upper bound on the sub-bin integration step, ps.
    pub max_step: f64,
    pub lm: LmSettings,
}

impl Default for G2FitOptions {
    fn default() -> Self {
        G2FitOptions {
            free: vec![
                ModelParam::AlphaRatio,
                ModelParam::G0,
                ModelParam::TauR,
                ModelParam::SigmaJ,
            ],
            phi_perp: FRAC_PI_2,
            max_step: 2.0,
            lm: LmSettings::default(),
        }
    }
}

/// Weighted residuals of the convolved, bin-averaged model against both
/// normalized curves, stacked co-polarized first.
pub struct G2FitProblem<'a> {
    par: &'a NormalizedG2,
    perp: &'a NormalizedG2,
    base: TpiParams,
    free: Vec<ModelParam>,
    phi_perp: f64,
    model: BinnedModel,
}

impl<'a> G2FitProblem<'a> {
    pub fn new(
        par: &'a NormalizedG2,
        perp: &'a NormalizedG2,
        init: &TpiParams,
        options: &G2FitOptions,
    ) -> Result<Self> {
        if par.grid != perp.grid || par.tau_centers != perp.tau_centers {
            return Err(Error::GridMismatch(
                "co- and cross-polarized curves use different bins".into(),
            ));
        }
        init.validate().map_err(|e| Error::InvalidInit(e.to_string()))?;
        if !(init.eta > 0.0) {
            return Err(Error::InvalidInit("eta must be positive to form intensity ratios".into()));
        }
        let mut seen = Vec::new();
        for p in &options.free {
            if seen.contains(p) {
                return Err(Error::InvalidInit(format!("parameter {} listed twice", p.name())));
            }
            seen.push(*p);
        }
        // work in units of eta
        let base = TpiParams {
            eta: 1.0,
            alpha2: init.alpha2 / init.eta,
            beta: init.beta / init.eta,
            phi: 0.0,
            ..*init
        };
        let model = BinnedModel::new(par.grid.layout())?.with_max_step(options.max_step);
        Ok(G2FitProblem {
            par,
            perp,
            base,
            free: options.free.clone(),
            phi_perp: options.phi_perp,
            model,
        })
    }

    pub fn free_params(&self) -> &[ModelParam] {
        &self.free
    }

    pub fn initial_point(&self) -> Vec<f64> {
        let p = self.params_at(&[]).0;
        self.free
            .iter()
            .map(|q| match q {
                ModelParam::Phi => self.phi_perp,
                _ => q.get(&p),
            })
            .collect()
    }

    /// Co- and cross-polarized parameter sets for a free-parameter vector.
    fn params_at(&self, x: &[f64]) -> (TpiParams, TpiParams) {
        let mut par = self.base;
        let mut phi_perp = self.phi_perp;
        for (q, &v) in self.free.iter().zip(x) {
            match q {
                ModelParam::Phi => phi_perp = v,
                _ => q.set(&mut par, v),
            }
        }
        (par, par.with_phi(phi_perp))
    }

    /// Best-fit parameters in model form (eta = 1, co-polarized).
    pub fn params_for(&self, x: &[f64]) -> TpiParams {
        self.params_at(x).0
    }

    fn evaluate(&self, x: &[f64], with_jacobian: bool) -> Option<(Vec<f64>, Option<DMatrix<f64>>)> {
        let (p_par, p_perp) = self.params_at(x);
        if p_par.validate().is_err() || p_perp.validate().is_err() {
            return None;
        }
        let par_params: Vec<ModelParam> = if with_jacobian {
            self.free.iter().copied().filter(|q| *q != ModelParam::Phi).collect()
        } else {
            Vec::new()
        };
        let perp_params: Vec<ModelParam> = if with_jacobian { self.free.clone() } else { Vec::new() };
        let (m_par, j_par) = self.model.evaluate_with_jacobian(&p_par, &par_params).ok()?;
        let (m_perp, j_perp) = self.model.evaluate_with_jacobian(&p_perp, &perp_params).ok()?;

        let n = m_par.len();
        let mut r = Vec::with_capacity(2 * n);
        for i in 0..n {
            r.push((m_par[i] - self.par.values[i]) / self.par.sigma[i]);
        }
        for i in 0..n {
            r.push((m_perp[i] - self.perp.values[i]) / self.perp.sigma[i]);
        }
        if !with_jacobian {
            return Some((r, None));
        }
        let mut jac = DMatrix::zeros(2 * n, self.free.len());
        let mut par_col = 0;
        for (k, q) in self.free.iter().enumerate() {
            if *q != ModelParam::Phi {
                for i in 0..n {
                    jac[(i, k)] = j_par[par_col][i] / self.par.sigma[i];
                }
                par_col += 1;
            }
            for i in 0..n {
                jac[(n + i, k)] = j_perp[k][i] / self.perp.sigma[i];
            }
        }
        Some((r, Some(jac)))
    }
}

impl LeastSquaresProblem for G2FitProblem<'_> {
    fn n_params(&self) -> usize {
        self.free.len()
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.evaluate(x, false).map(|(r, _)| r)
    }

    fn residuals_and_jacobian(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        self.evaluate(x, true).map(|(r, j)| (r, j.expect("jacobian requested")))
    }

    fn param_names(&self) -> Vec<String> {
        self.free.iter().map(|q| q.name().to_string()).collect()
    }
}

/// Simultaneous fit of the co-polarized (`phi = 0`) and cross-polarized
/// convolved model to two normalized curves on a shared grid. Parameters not
/// listed in `options.free` are held at their values in `init`.
pub fn fit_g2_model(
    par: &NormalizedG2,
    perp: &NormalizedG2,
    init: &TpiParams,
    options: &G2FitOptions,
) -> Result<FitResult> {
    if options.free.is_empty() {
        return Err(Error::InvalidInit("no free parameters".into()));
    }
    let problem = G2FitProblem::new(par, perp, init, options)?;
    let x0 = problem.initial_point();
    if 2 * par.len() <= x0.len() {
        return Err(Error::DegenerateData(format!(
            "{} bins for {} free parameters",
            2 * par.len(),
            x0.len()
        )));
    }
    let out = minimize(&problem, &x0, &options.lm)?;

    let free: Vec<(String, String)> = options
        .free
        .iter()
        .map(|q| (q.name().to_string(), q.unit().to_string()))
        .collect();
    let best = problem.params_for(&out.x);
    let fixed = ModelParam::ALL
        .iter()
        .filter(|q| !options.free.contains(q))
        .map(|q| ParamEstimate {
            name: q.name().to_string(),
            unit: q.unit().to_string(),
            value: match q {
                ModelParam::Phi => options.phi_perp,
                _ => q.get(&best),
            },
            std_error: 0.0,
            free: false,
        })
        .collect();
    Ok(FitResult::from_outcome(&out, &free, fixed))
}
