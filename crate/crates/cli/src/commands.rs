use std::path::{Path, PathBuf};

use homlab_core::estimate::{
    default_tail_window, fit_exponential_visibility, fit_g2_model, normalize_histogram, visibility_from_histograms,
    ExpFitOptions, FitResult, G2FitOptions, LmSettings, NormalizedG2,
};
use homlab_core::io::{
    histogram_to_json, load_scenario, read_coherence_points, read_histogram, write_atomic, write_curve_csv,
    write_report, CurveRow, Scenario,
};
use homlab_core::model::{
    coherence_to_bandwidth, g2_tpi_convolved, ideal_max_visibility, optimal_ratio, zero_delay_visibility,
    ModelParam,
};
use homlab_core::simulate::{derive_seed, histogram, sample_coincidences, DEFAULT_EVENT_CAP, MAX_OCCUPANCY, PS_PER_S};
use homlab_core::{CorrelationHistogram, Error, Polarization, Result};
use rayon::prelude::*;
use serde_json::json;

use crate::{Cli, CoherenceArgs, Command, FitArgs, PairArgs, Pol, SimulateArgs};

/// Pairs drawn per work unit. Fixed so that output does not depend on the
/// number of worker threads.
const CHUNK_PAIRS: u64 = 1 << 18;

pub fn run(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::ModelCurve { phi } => model_curve(cli, *phi),
        Command::Simulate(a) => simulate(cli, a),
        Command::Fit(a) => fit(cli, a),
        Command::Visibility(a) => visibility(cli, a),
        Command::OptimizeRatio => optimize_ratio(cli),
        Command::CoherenceFit(a) => coherence_fit(cli, a),
        Command::Bandwidth { tau_c } => bandwidth(cli, *tau_c),
    }
}

fn scenario(cli: &Cli) -> Result<Scenario> {
    let mut s = match &cli.scenario {
        Some(p) => load_scenario(p)?,
        None => Scenario::paper_oband(),
    };
    if let Some(seed) = cli.seed {
        s.seeds = vec![seed];
    }
    Ok(s)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn polarization(p: Pol) -> Polarization {
    match p {
        Pol::Par => Polarization::Parallel,
        Pol::Perp => Polarization::Perpendicular,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_report(path, value)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = match std::env::var("HOMLAB_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| Error::Validation {
                field: "HOMLAB_THREADS".into(),
                constraint: format!("must be a positive integer (got `{v}`)"),
            })?;
            if n == 0 {
                return Err(Error::Validation {
                    field: "HOMLAB_THREADS".into(),
                    constraint: "must be >= 1".into(),
                });
            }
            n.min(available)
        }
        Err(_) => available,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parse(format!("thread pool: {e}")))
}

fn model_curve(cli: &Cli, phi: Pol) -> Result<Vec<String>> {
    let s = scenario(cli)?;
    let p = s.tpi_params().with_polarization(polarization(phi));
    let taus = s.grid()?.centers();
    let values = g2_tpi_convolved(&taus, &p)?;
    let rows: Vec<CurveRow> = taus
        .iter()
        .zip(&values)
        .map(|(&tau_ps, &value)| CurveRow { tau_ps, value, sigma: 0.0 })
        .collect();
    let path = out_path(cli, "model_curve.csv");
    write_curve_csv(&path, &rows)?;
    let centre = rows.iter().min_by(|a, b| a.tau_ps.abs().total_cmp(&b.tau_ps.abs())).expect("non-empty grid");
    Ok(vec![format!(
        "model curve ({phi:?}): g2({} ps) = {:.4} over {} bins -> {}",
        centre.tau_ps,
        centre.value,
        rows.len(),
        path.display()
    )])
}

fn simulation_paths(cli: &Cli, a: &SimulateArgs) -> (PathBuf, PathBuf) {
    let derived = |suffix: &str| match &cli.out {
        Some(o) => {
            let stem = o.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            o.with_file_name(format!("{stem}_{suffix}.json"))
        }
        None => PathBuf::from(format!("hist_{suffix}.json")),
    };
    (
        a.out_par.clone().unwrap_or_else(|| derived("par")),
        a.out_perp.clone().unwrap_or_else(|| derived("perp")),
    )
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<Vec<String>> {
    let s = scenario(cli)?;
    if a.pairs == 0 {
        return Err(Error::Validation {
            field: "pairs".into(),
            constraint: "must be >= 1".into(),
        });
    }
    if a.pairs > DEFAULT_EVENT_CAP {
        return Err(Error::Capacity {
            expected: a.pairs as f64,
            cap: DEFAULT_EVENT_CAP,
        });
    }
    let occupancy = s.qd_rate * s.params.tau_r_ps / PS_PER_S;
    if occupancy >= MAX_OCCUPANCY {
        return Err(Error::Regime { occupancy });
    }
    let params = s.tpi_params();
    let grid = s.grid()?;
    let window = grid.half_range();

    // pairs are shared between the scenario's seeds; each seed is one realization
    let k = s.seeds.len() as u64;
    let per_seed: Vec<u64> = (0..k).map(|i| a.pairs / k + u64::from(i < a.pairs % k)).collect();
    let mut jobs = Vec::new();
    for (stream, pol) in [Polarization::Parallel, Polarization::Perpendicular].into_iter().enumerate() {
        for (si, (&seed, &n)) in s.seeds.iter().zip(&per_seed).enumerate() {
            let mut left = n;
            let mut chunk = 0;
            while left > 0 {
                let take = left.min(CHUNK_PAIRS);
                jobs.push((stream, pol, si, derive_seed(seed, stream as u64, chunk), take));
                left -= take;
                chunk += 1;
            }
        }
    }
    let pool = thread_pool()?;
    let parts: Vec<CorrelationHistogram> = pool.install(|| {
        jobs.par_iter()
            .map(|&(_, pol, _, seed, n)| {
                let taus = sample_coincidences(&params.with_polarization(pol), n, window, seed)?;
                Ok(histogram(&taus, grid))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Vec::new();
    for stream in 0..2 {
        let mut total = CorrelationHistogram::empty(grid);
        for (si, (&seed, &n)) in s.seeds.iter().zip(&per_seed).enumerate() {
            let mut realization = CorrelationHistogram::empty(grid).with_metadata(s.span_ps, n, n, &[seed]);
            for (job, part) in jobs.iter().zip(&parts) {
                if job.0 == stream && job.2 == si {
                    realization.merge(part)?;
                }
            }
            total.merge(&realization)?;
        }
        out.push(total);
    }

    let (par_path, perp_path) = simulation_paths(cli, a);
    write_atomic(&par_path, format!("{}\n", histogram_to_json(&out[0])).as_bytes())?;
    if let Err(e) = write_atomic(&perp_path, format!("{}\n", histogram_to_json(&out[1])).as_bytes()) {
        let _ = std::fs::remove_file(&par_path);
        return Err(e);
    }
    Ok(vec![format!(
        "simulated {} pairs per polarization ({} seed(s), {} in range par / {} perp) -> {}, {}",
        a.pairs,
        s.seeds.len(),
        out[0].total_in_range(),
        out[1].total_in_range(),
        par_path.display(),
        perp_path.display()
    )])
}

fn load_pair(a: &PairArgs) -> Result<(NormalizedG2, NormalizedG2)> {
    let hp = read_histogram(&a.par)?;
    let hq = read_histogram(&a.perp)?;
    if hp.grid() != hq.grid() {
        return Err(Error::GridMismatch(format!(
            "{} and {} use different bins",
            a.par.display(),
            a.perp.display()
        )));
    }
    let tail = a.tail_window.unwrap_or_else(|| default_tail_window(hp.grid()));
    Ok((normalize_histogram(&hp, tail)?, normalize_histogram(&hq, tail)?))
}

fn parse_params(field: &str, names: &[String]) -> Result<Vec<ModelParam>> {
    names
        .iter()
        .filter(|n| !n.trim().is_empty())
        .map(|n| {
            ModelParam::from_name(n.trim()).ok_or_else(|| Error::Validation {
                field: field.into(),
                constraint: format!("unknown parameter `{n}`"),
            })
        })
        .collect()
}

fn fit_table(fit: &FitResult) -> Vec<String> {
    fit.params
        .iter()
        .map(|p| {
            if p.free {
                format!("  {:<16} {:>12.5} +- {:<10.5} {}", p.name, p.value, p.std_error, p.unit)
            } else {
                format!("  {:<16} {:>12.5} (fixed)     {}", p.name, p.value, p.unit)
            }
        })
        .collect()
}

fn fit(cli: &Cli, a: &FitArgs) -> Result<Vec<String>> {
    let s = scenario(cli)?;
    let frozen = parse_params("freeze", &a.freeze)?;
    let free: Vec<ModelParam> = parse_params("free", &a.free)?
        .into_iter()
        .filter(|q| !frozen.contains(q))
        .collect();
    let (par, perp) = load_pair(&a.pair)?;
    let options = G2FitOptions {
        free,
        lm: LmSettings {
            max_iterations: a.max_iterations,
            ..LmSettings::default()
        },
        ..G2FitOptions::default()
    };
    let init = s.tpi_params();
    let result = fit_g2_model(&par, &perp, &init, &options)?;

    let mut report = serde_json::to_value(&result).map_err(|e| Error::Parse(e.to_string()))?;
    report["settings"] = json!({
        "par": a.pair.par,
        "perp": a.pair.perp,
        "tail_window_ps": a.pair.tail_window.unwrap_or_else(|| default_tail_window(&par.grid)),
        "free": options.free.iter().map(|q| q.name()).collect::<Vec<_>>(),
        "phi_perp_rad": options.phi_perp,
        "max_step_ps": options.max_step,
        "lm": options.lm,
        "init": init,
    });
    let path = a.report.clone().unwrap_or_else(|| out_path(cli, "fit_report.json"));
    write_json(&path, &report)?;

    let mut lines = fit_table(&result);
    lines.push(format!(
        "fit converged in {} iterations: chi2 = {:.2}, dof = {}, chi2/dof = {:.3} -> {}",
        result.n_iterations,
        result.chi2,
        result.dof,
        result.reduced_chi2().unwrap_or(f64::NAN),
        path.display()
    ));
    Ok(lines)
}

fn visibility(cli: &Cli, a: &PairArgs) -> Result<Vec<String>> {
    let (par, perp) = load_pair(a)?;
    let v = visibility_from_histograms(&par, &perp)?;
    let rows: Vec<CurveRow> = (0..v.v.len())
        .map(|i| CurveRow {
            tau_ps: v.tau_centers[i],
            value: v.v[i],
            sigma: v.sigma_v[i],
        })
        .collect();
    let path = out_path(cli, "visibility.csv");
    write_curve_csv(&path, &rows)?;
    let summary = match v.peak() {
        Some((tau, vmax, s)) => format!("peak visibility {vmax:.4} +- {s:.4} at {tau} ps"),
        None => "no bins with nonzero cross-polarized counts".to_string(),
    };
    Ok(vec![format!(
        "{summary}; {} bins excluded -> {}",
        v.excluded.len(),
        path.display()
    )])
}

fn optimize_ratio(cli: &Cli) -> Result<Vec<String>> {
    let s = scenario(cli)?;
    let p = s.tpi_params();
    let search = s.ratio_search();
    let r = optimal_ratio(&p, &search)?;
    let v0 = zero_delay_visibility(&p, r, search.beta_over_eta)?;
    let path = out_path(cli, "optimal_ratio.json");
    write_json(
        &path,
        &json!({
            "alpha2_over_eta": r,
            "visibility_at_zero_delay": v0,
            "ideal_max_visibility": ideal_max_visibility(r)?,
            "beta_over_eta": search.beta_over_eta,
            "tau_c_ps": p.tau_c,
            "g0": p.emitter.g0,
            "tau_r_ps": p.emitter.tau_r,
            "sigma_j_ps": p.sigma_j,
            "search": search,
        }),
    )?;
    Ok(vec![format!(
        "optimal alpha^2/eta = {r:.4} (zero-delay visibility {v0:.4}) -> {}",
        path.display()
    )])
}

fn coherence_fit(cli: &Cli, a: &CoherenceArgs) -> Result<Vec<String>> {
    let points = read_coherence_points(&a.points)?;
    let options = ExpFitOptions {
        free_amplitude: !a.fixed_amplitude,
        ..ExpFitOptions::default()
    };
    let result = fit_exponential_visibility(&points, &options)?;
    let tau_c = result.value("tau_c_ps").expect("fit reports tau_c");
    let err = result.std_error("tau_c_ps").expect("fit reports tau_c");
    let mut report = serde_json::to_value(&result).map_err(|e| Error::Parse(e.to_string()))?;
    report["settings"] = json!({ "points": a.points, "options": options });
    report["bandwidth_uev"] = json!(coherence_to_bandwidth(tau_c)?);
    let path = out_path(cli, "coherence_fit.json");
    write_json(&path, &report)?;
    Ok(vec![format!(
        "tau_c = {tau_c:.2} +- {err:.2} ps from {} points (bandwidth {:.3} ueV) -> {}",
        points.len(),
        coherence_to_bandwidth(tau_c)?,
        path.display()
    )])
}

fn bandwidth(cli: &Cli, tau_c: f64) -> Result<Vec<String>> {
    let e = coherence_to_bandwidth(tau_c)?;
    let path = out_path(cli, "bandwidth.json");
    write_json(&path, &json!({ "tau_c_ps": tau_c, "bandwidth_uev": e }))?;
    Ok(vec![format!(
        "tau_c = {tau_c} ps -> Fourier-limited bandwidth {e:.3} μeV -> {}",
        path.display()
    )])
}
