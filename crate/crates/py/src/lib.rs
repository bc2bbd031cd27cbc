//! Python bindings for the two-photon interference toolkit.

use homlab_core::estimate::{
    default_tail_window, fit_exponential_visibility as fit_exp, fit_g2_model, normalize_histogram,
    visibility_from_histograms, CoherencePoint, ExpFitOptions, G2FitOptions,
};
use homlab_core::io::Scenario;
use homlab_core::model::{self, ModelParam, RatioSearch};
use homlab_core::{simulate, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::NonConvergence { .. }
        | Error::SingularNormalMatrix { .. }
        | Error::Capacity { .. }
        | Error::Regime { .. }
        | Error::TailMeanZero
        | Error::NoInteriorMaximum { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Antibunched emitter with zero-delay value `g0` and recovery time `tau_r_ps`.
#[pyclass(name = "EmitterModel", skip_from_py_object)]
#[derive(Clone)]
struct PyEmitterModel {
    inner: model::EmitterModel,
}

#[pymethods]
impl PyEmitterModel {
    #[new]
    fn new(g0: f64, tau_r_ps: f64) -> PyResult<Self> {
        Ok(PyEmitterModel {
            inner: model::EmitterModel::new(g0, tau_r_ps).map_err(to_py)?,
        })
    }

    #[getter]
    fn g0(&self) -> f64 {
        self.inner.g0
    }

    #[getter]
    fn tau_r_ps(&self) -> f64 {
        self.inner.tau_r
    }

    /// Emitter autocorrelation at each delay [ps].
    fn g2(&self, taus: Vec<f64>) -> Vec<f64> {
        taus.iter().map(|&t| model::g2_qd(t, &self.inner)).collect()
    }

    fn __repr__(&self) -> String {
        format!("EmitterModel(g0={}, tau_r_ps={})", self.inner.g0, self.inner.tau_r)
    }
}

/// Interference model parameters; times in ps, phase in rad.
#[pyclass(name = "TpiParams", skip_from_py_object)]
#[derive(Clone)]
struct PyTpiParams {
    inner: model::TpiParams,
}

#[pymethods]
impl PyTpiParams {
    #[new]
    #[pyo3(signature = (eta, alpha2, beta, tau_c_ps, g0, tau_r_ps, sigma_j_ps = 0.0, phi_rad = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        eta: f64,
        alpha2: f64,
        beta: f64,
        tau_c_ps: f64,
        g0: f64,
        tau_r_ps: f64,
        sigma_j_ps: f64,
        phi_rad: f64,
    ) -> PyResult<Self> {
        let inner = model::TpiParams {
            eta,
            alpha2,
            beta,
            tau_c: tau_c_ps,
            emitter: model::EmitterModel { g0, tau_r: tau_r_ps },
            sigma_j: sigma_j_ps,
            phi: phi_rad,
        };
        inner.validate().map_err(to_py)?;
        Ok(PyTpiParams { inner })
    }

    /// Parameters of the bundled O-band scenario.
    #[staticmethod]
    fn paper_oband() -> Self {
        PyTpiParams {
            inner: Scenario::paper_oband().tpi_params(),
        }
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    #[getter]
    fn alpha2(&self) -> f64 {
        self.inner.alpha2
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn tau_c_ps(&self) -> f64 {
        self.inner.tau_c
    }

    #[getter]
    fn sigma_j_ps(&self) -> f64 {
        self.inner.sigma_j
    }

    #[getter]
    fn phi_rad(&self) -> f64 {
        self.inner.phi
    }

    #[getter]
    fn emitter(&self) -> PyEmitterModel {
        PyEmitterModel {
            inner: self.inner.emitter,
        }
    }

    /// Copy with a different polarization angle [rad].
    fn with_phi(&self, phi_rad: f64) -> PyResult<Self> {
        let inner = self.inner.with_phi(phi_rad);
        inner.validate().map_err(to_py)?;
        Ok(PyTpiParams { inner })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "TpiParams(eta={}, alpha2={}, beta={}, tau_c_ps={}, g0={}, tau_r_ps={}, sigma_j_ps={}, phi_rad={})",
            p.eta, p.alpha2, p.beta, p.tau_c, p.emitter.g0, p.emitter.tau_r, p.sigma_j, p.phi
        )
    }
}

/// Coincidence histogram on integer-ps bins.
#[pyclass(name = "Histogram", skip_from_py_object)]
#[derive(Clone)]
struct PyHistogram {
    inner: simulate::CorrelationHistogram,
}

#[pymethods]
impl PyHistogram {
    /// Reads a histogram JSON file.
    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyHistogram {
            inner: homlab_core::io::read_histogram(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        homlab_core::io::write_histogram(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }

    #[getter]
    fn overflow(&self) -> u64 {
        self.inner.overflow()
    }

    #[getter]
    fn bin_width_ps(&self) -> i64 {
        self.inner.grid().bin_width()
    }

    /// Bin centres [ps].
    fn centers(&self) -> Vec<f64> {
        self.inner.grid().centers()
    }

    fn total_in_range(&self) -> u64 {
        self.inner.total_in_range()
    }

    fn merge(&mut self, other: PyRef<'_, PyHistogram>) -> PyResult<()> {
        self.inner.merge(&other.inner).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.counts().len()
    }
}

/// Result of a damped least-squares fit.
#[pyclass(name = "FitResult")]
struct PyFitResult {
    inner: homlab_core::estimate::FitResult,
}

#[pymethods]
impl PyFitResult {
    /// `(name, value, std_error, unit, free)` for every model parameter.
    #[getter]
    fn params(&self) -> Vec<(String, f64, f64, String, bool)> {
        self.inner
            .params
            .iter()
            .map(|p| (p.name.clone(), p.value, p.std_error, p.unit.clone(), p.free))
            .collect()
    }

    #[getter]
    fn chi2(&self) -> f64 {
        self.inner.chi2
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn n_iterations(&self) -> usize {
        self.inner.n_iterations
    }

    fn reduced_chi2(&self) -> Option<f64> {
        self.inner.reduced_chi2()
    }

    fn value(&self, name: &str) -> PyResult<f64> {
        self.inner
            .value(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter `{name}`")))
    }

    fn std_error(&self, name: &str) -> PyResult<f64> {
        self.inner
            .std_error(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown parameter `{name}`")))
    }

    /// Full report as a JSON string.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Emitter autocorrelation at each delay [ps].
#[pyfunction]
fn g2_qd(taus: Vec<f64>, emitter: PyRef<'_, PyEmitterModel>) -> Vec<f64> {
    taus.iter().map(|&t| model::g2_qd(t, &emitter.inner)).collect()
}

/// Unconvolved interference correlation at each delay [ps].
#[pyfunction]
fn g2_tpi(taus: Vec<f64>, params: PyRef<'_, PyTpiParams>) -> PyResult<Vec<f64>> {
    taus.iter().map(|&t| model::g2_tpi(t, &params.inner).map_err(to_py)).collect()
}

/// Jitter-convolved interference correlation at each delay [ps].
#[pyfunction]
fn g2_tpi_convolved(taus: Vec<f64>, params: PyRef<'_, PyTpiParams>) -> PyResult<Vec<f64>> {
    model::g2_tpi_convolved(&taus, &params.inner).map_err(to_py)
}

/// Model visibility (g_par - g_perp) / g_perp at each delay [ps].
#[pyfunction]
fn visibility_curve(params: PyRef<'_, PyTpiParams>, taus: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(model::visibility_curve(&params.inner, &taus).map_err(to_py)?.into_parts().1)
}

/// Zero-delay visibility 2 / (2 + r) of an ideal source.
#[pyfunction]
fn ideal_max_visibility(r: f64) -> PyResult<f64> {
    model::ideal_max_visibility(r).map_err(to_py)
}

/// Fourier-limited bandwidth [ueV] for a coherence time [ps].
#[pyfunction]
fn coherence_to_bandwidth(tau_c_ps: f64) -> PyResult<f64> {
    model::coherence_to_bandwidth(tau_c_ps).map_err(to_py)
}

/// Convolved zero-delay visibility at intensity ratio `r`.
#[pyfunction]
fn zero_delay_visibility(params: PyRef<'_, PyTpiParams>, r: f64, beta_over_eta: f64) -> PyResult<f64> {
    model::zero_delay_visibility(&params.inner, r, beta_over_eta).map_err(to_py)
}

/// Intensity ratio alpha2/eta maximising the convolved zero-delay visibility.
#[pyfunction]
#[pyo3(signature = (params, beta_over_eta = 0.02, r_lo = 0.01, r_hi = 5.0))]
fn optimal_ratio(params: PyRef<'_, PyTpiParams>, beta_over_eta: f64, r_lo: f64, r_hi: f64) -> PyResult<f64> {
    let search = RatioSearch {
        r_lo,
        r_hi,
        beta_over_eta,
        ..RatioSearch::default()
    };
    model::optimal_ratio(&params.inner, &search).map_err(to_py)
}

/// Draws `n_pairs` integer coincidence delays [ps] within +-`tau_window_ps`.
#[pyfunction]
fn sample_coincidences(
    py: Python<'_>,
    params: PyRef<'_, PyTpiParams>,
    n_pairs: u64,
    tau_window_ps: i64,
    seed: u64,
) -> PyResult<Vec<i64>> {
    let p = params.inner;
    py.detach(|| simulate::sample_coincidences(&p, n_pairs, tau_window_ps, seed))
        .map_err(to_py)
}

/// Histograms delays [ps] on symmetric bins of width `bin_width_ps`.
#[pyfunction]
fn histogram(taus: Vec<i64>, bin_width_ps: i64, half_range_ps: i64) -> PyResult<PyHistogram> {
    let grid = simulate::HistogramGrid::symmetric(bin_width_ps, half_range_ps).map_err(to_py)?;
    Ok(PyHistogram {
        inner: simulate::histogram(&taus, grid),
    })
}

/// Tail-normalized correlation `(tau_ps, g2, sigma)`.
#[pyfunction]
#[pyo3(signature = (hist, tail_window_ps = None))]
fn normalize(hist: PyRef<'_, PyHistogram>, tail_window_ps: Option<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let tail = tail_window_ps.unwrap_or_else(|| default_tail_window(hist.inner.grid()));
    let n = normalize_histogram(&hist.inner, tail).map_err(to_py)?;
    Ok((n.tau_centers, n.values, n.sigma))
}

/// Measured visibility `(tau_ps, v, sigma_v)` from the two histograms.
#[pyfunction]
#[pyo3(signature = (par, perp, tail_window_ps = None))]
fn visibility(
    par: PyRef<'_, PyHistogram>,
    perp: PyRef<'_, PyHistogram>,
    tail_window_ps: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let tail = tail_window_ps.unwrap_or_else(|| default_tail_window(par.inner.grid()));
    let a = normalize_histogram(&par.inner, tail).map_err(to_py)?;
    let b = normalize_histogram(&perp.inner, tail).map_err(to_py)?;
    let v = visibility_from_histograms(&a, &b).map_err(to_py)?;
    Ok((v.tau_centers, v.v, v.sigma_v))
}

/// Measured visibility as a fraction of the ideal 2 / (2 + r).
#[pyfunction]
fn fraction_of_max(v_meas: f64, r: f64) -> PyResult<f64> {
    homlab_core::estimate::fraction_of_max(v_meas, r).map_err(to_py)
}

/// Joint fit of the convolved model to both histograms.
#[pyfunction]
#[pyo3(signature = (par, perp, init, free = None, tail_window_ps = None))]
fn fit_g2(
    py: Python<'_>,
    par: PyRef<'_, PyHistogram>,
    perp: PyRef<'_, PyHistogram>,
    init: PyRef<'_, PyTpiParams>,
    free: Option<Vec<String>>,
    tail_window_ps: Option<f64>,
) -> PyResult<PyFitResult> {
    let mut options = G2FitOptions::default();
    if let Some(names) = free {
        options.free = names
            .iter()
            .map(|n| ModelParam::from_name(n).ok_or_else(|| PyValueError::new_err(format!("unknown parameter `{n}`"))))
            .collect::<PyResult<_>>()?;
    }
    let tail = tail_window_ps.unwrap_or_else(|| default_tail_window(par.inner.grid()));
    let a = normalize_histogram(&par.inner, tail).map_err(to_py)?;
    let b = normalize_histogram(&perp.inner, tail).map_err(to_py)?;
    let p = init.inner;
    let inner = py.detach(|| fit_g2_model(&a, &b, &p, &options)).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Fits `A exp(-delay / tau_c)` to visibilities measured at delays [ps].
#[pyfunction]
#[pyo3(signature = (delays_ps, visibilities, sigmas, free_amplitude = true))]
fn fit_exponential_visibility(
    delays_ps: Vec<f64>,
    visibilities: Vec<f64>,
    sigmas: Vec<f64>,
    free_amplitude: bool,
) -> PyResult<PyFitResult> {
    if delays_ps.len() != visibilities.len() || delays_ps.len() != sigmas.len() {
        return Err(PyValueError::new_err("delays, visibilities and sigmas differ in length"));
    }
    let points: Vec<CoherencePoint> = (0..delays_ps.len())
        .map(|i| CoherencePoint {
            delay_ps: delays_ps[i],
            visibility: visibilities[i],
            sigma: sigmas[i],
        })
        .collect();
    let options = ExpFitOptions {
        free_amplitude,
        ..ExpFitOptions::default()
    };
    Ok(PyFitResult {
        inner: fit_exp(&points, &options).map_err(to_py)?,
    })
}

#[pymodule]
fn homlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmitterModel>()?;
    m.add_class::<PyTpiParams>()?;
    m.add_class::<PyHistogram>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(g2_qd, m)?)?;
    m.add_function(wrap_pyfunction!(g2_tpi, m)?)?;
    m.add_function(wrap_pyfunction!(g2_tpi_convolved, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_curve, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_max_visibility, m)?)?;
    m.add_function(wrap_pyfunction!(coherence_to_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(zero_delay_visibility, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(sample_coincidences, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(visibility, m)?)?;
    m.add_function(wrap_pyfunction!(fraction_of_max, m)?)?;
    m.add_function(wrap_pyfunction!(fit_g2, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential_visibility, m)?)?;
    Ok(())
}
