//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::time::{Duration, Instant};

use homlab_core::estimate::{
    default_tail_window, fit_exponential_visibility, fit_g2_model, fraction_of_max, normalize_histogram,
    visibility_from_histograms, CoherencePoint, ExpFitOptions, G2FitOptions,
};
use homlab_core::io::{self, CurveRow, Scenario};
use homlab_core::model::{
    coherence_to_bandwidth, convolve_irf, g2_tpi, g2_tpi_convolved, ideal_max_visibility, optimal_ratio,
    symmetric_grid, visibility_curve, BinnedModel, ModelCurve, RatioSearch,
};
use homlab_core::simulate::{correlate_streams, histogram, sample_coincidences};
use homlab_core::{
    Channel, CorrelationHistogram, DetectionRecord, EmitterModel, HistogramGrid, JitterConvention, Polarization,
    TpiParams,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erfc;

const PAIRS: u64 = 1_000_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t0 = Instant::now();
    let mut o = f();
    let dt = t0.elapsed();
    if dt > limit {
        o.pass = false;
    }
    o.detail = format!("{} [{:.2} s, limit {} s]", o.detail, dt.as_secs_f64(), limit.as_secs_f64());
    o
}

fn oband_params(convention: JitterConvention) -> TpiParams {
    TpiParams {
        eta: 1.0,
        alpha2: 0.63,
        beta: 0.02,
        tau_c: 150.0,
        emitter: EmitterModel { g0: 0.21, tau_r: 500.0 },
        sigma_j: convention.sigma_from(101.9),
        phi: 0.0,
    }
}

fn a1() -> Outcome {
    let v = ideal_max_visibility(0.63).unwrap();
    outcome(
        (v - 0.7605).abs() < 5e-5 && (v - 0.762).abs() <= 0.005,
        format!("V(0.63) = {v:.5}, reported 0.762"),
    )
}

fn a2() -> Outcome {
    let search = RatioSearch {
        beta_over_eta: 0.02,
        ..RatioSearch::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for conv in [JitterConvention::Fwhm, JitterConvention::Sigma] {
        match optimal_ratio(&oband_params(conv), &search) {
            Ok(r) => {
                pass &= (0.3..=0.7).contains(&r);
                parts.push(format!("{conv:?}: r* = {r:.4}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{conv:?}: {e}"));
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn a3() -> Outcome {
    // ideal value of 0.762 corresponds to r = 2/0.762 - 2
    let r = 2.0 / 0.762 - 2.0;
    let f = fraction_of_max(0.60, r).unwrap();
    outcome(
        (f - 0.787).abs() < 5e-4 && (f - 0.79).abs() <= 0.08,
        format!("0.60 / 0.762 = {f:.4}, reported 0.79 +- 0.08"),
    )
}

fn a4() -> Outcome {
    let e = coherence_to_bandwidth(150.0).unwrap();
    outcome(
        format!("{e:.3}") == "4.388" && (e - 4.0).abs() < 0.5,
        format!("hbar / 150 ps = {e:.3} ueV"),
    )
}

struct McData {
    grid: HistogramGrid,
    params: TpiParams,
    par: CorrelationHistogram,
    perp: CorrelationHistogram,
}

fn simulate_pair() -> McData {
    let s = Scenario::paper_oband();
    let params = s.tpi_params();
    let grid = s.grid().unwrap();
    let w = grid.half_range();
    let draw = |pol: Polarization, seed: u64| {
        let taus = sample_coincidences(&params.with_polarization(pol), PAIRS, w, seed).unwrap();
        histogram(&taus, grid).with_metadata(0, PAIRS, PAIRS, &[seed])
    };
    McData {
        grid,
        params,
        par: draw(Polarization::Parallel, s.seeds[0]),
        perp: draw(Polarization::Perpendicular, s.seeds[0] + 1),
    }
}

fn reduced_chi2(h: &CorrelationHistogram, shape: &[f64]) -> f64 {
    let n = h.total_in_range() as f64;
    let total: f64 = shape.iter().sum();
    let chi2: f64 = h
        .counts()
        .iter()
        .zip(shape)
        .map(|(&c, &m)| {
            let e = n * m / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    chi2 / (shape.len() - 1) as f64
}

fn a5(data: &McData) -> Outcome {
    let model = BinnedModel::new(data.grid.layout()).unwrap();
    let m_par = model.evaluate(&data.params).unwrap();
    let m_perp = model
        .evaluate(&data.params.with_polarization(Polarization::Perpendicular))
        .unwrap();
    let chi_par = reduced_chi2(&data.par, &m_par);
    let chi_perp = reduced_chi2(&data.perp, &m_perp);

    let tail = default_tail_window(&data.grid);
    let g_par = normalize_histogram(&data.par, tail).unwrap();
    let g_perp = normalize_histogram(&data.perp, tail).unwrap();
    let vis = visibility_from_histograms(&g_par, &g_perp).unwrap();
    let centre = vis.tau_centers.iter().position(|&t| t == 0.0).unwrap();
    let (v0, s0) = (vis.v[centre], vis.sigma_v[centre]);
    let v_model = visibility_curve(&data.params, &[0.0]).unwrap().values()[0];
    let v_bin = (m_par[centre] - m_perp[centre]) / m_perp[centre];

    let chi_ok = (0.8..=1.2).contains(&chi_par) && (0.8..=1.2).contains(&chi_perp);
    let v_ok = (v0 - v_model).abs() <= 3.0 * s0;
    outcome(
        chi_ok && v_ok,
        format!(
            "chi2/dof par {chi_par:.3} perp {chi_perp:.3}; V(0) = {v0:.3} +- {s0:.3}, model {v_model:.3} (bin-averaged {v_bin:.3})"
        ),
    )
}

fn a6(data: &McData) -> Outcome {
    let tail = default_tail_window(&data.grid);
    let g_par = normalize_histogram(&data.par, tail).unwrap();
    let g_perp = normalize_histogram(&data.perp, tail).unwrap();
    let truth = data.params;
    let init = TpiParams {
        alpha2: 0.45,
        emitter: EmitterModel { g0: 0.3, tau_r: 400.0 },
        sigma_j: 50.0,
        ..truth
    };
    let fit = match fit_g2_model(&g_par, &g_perp, &init, &G2FitOptions::default()) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let checks = [
        ("alpha2_over_eta", truth.alpha2 / truth.eta),
        ("g0", truth.emitter.g0),
        ("sigma_j_ps", truth.sigma_j),
        ("tau_r_ps", truth.emitter.tau_r),
    ];
    let mut pass = fit.converged;
    let mut parts = Vec::new();
    for (name, want) in checks {
        let got = fit.value(name).unwrap();
        let se = fit.std_error(name).unwrap();
        let ok = (got - want).abs() <= (0.05 * want.abs()).max(2.0 * se);
        pass &= ok;
        parts.push(format!("{name} {got:.4} +- {se:.4} (true {want})"));
    }
    let b = fit.value("beta_over_eta").unwrap();
    pass &= (b - truth.beta / truth.eta).abs() < 1e-12;
    parts.push(format!("beta_over_eta {b} held; chi2/dof {:.3}", fit.reduced_chi2().unwrap()));
    outcome(pass, parts.join(", "))
}

fn exp_gauss(tau: f64, tau_c: f64, s: f64) -> f64 {
    let pre = 0.5 * (s * s / (2.0 * tau_c * tau_c)).exp();
    let a = (-tau / tau_c).exp() * erfc((s * s / tau_c - tau) / (s * SQRT_2));
    let b = (tau / tau_c).exp() * erfc((s * s / tau_c + tau) / (s * SQRT_2));
    pre * (a + b)
}

fn a7() -> Outcome {
    let (tau_c, sigma) = (150.0, 43.27);
    // 0.25 ps steps; the grid must extend until the exponential is flat to 1e-9
    let curve = ModelCurve::sample(symmetric_grid(3500.0, 0.25), |t| (-t.abs() / tau_c).exp()).unwrap();
    let conv = match convolve_irf(&curve, sigma) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let max_err = conv
        .tau()
        .iter()
        .zip(conv.values())
        .filter(|(t, _)| t.abs() <= 2000.0)
        .map(|(&t, &v)| (v - exp_gauss(t, tau_c, sigma)).abs())
        .fold(0.0f64, f64::max);
    outcome(max_err < 1e-6, format!("max |error| over |tau| <= 2000 ps = {max_err:.2e}"))
}

fn a8() -> Outcome {
    let (truth, amp, noise) = (150.0, 0.9, 0.041);
    let delays: Vec<f64> = (0..=15).map(|k| 40.0 * k as f64).collect();
    let dist = Normal::new(0.0, noise).unwrap();
    let mut covered = 0usize;
    let mut estimates = Vec::with_capacity(500);
    let mut errors = Vec::with_capacity(500);
    for rep in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE + rep);
        let points: Vec<CoherencePoint> = delays
            .iter()
            .map(|&d| CoherencePoint {
                delay_ps: d,
                visibility: amp * (-d / truth).exp() + dist.sample(&mut rng),
                sigma: noise,
            })
            .collect();
        let fit = match fit_exponential_visibility(&points, &ExpFitOptions::default()) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("replication {rep}: {e}")),
        };
        let (t, se) = (fit.value("tau_c_ps").unwrap(), fit.std_error("tau_c_ps").unwrap());
        if (t - truth).abs() <= se {
            covered += 1;
        }
        estimates.push(t);
        errors.push(se);
    }
    estimates.sort_by(f64::total_cmp);
    errors.sort_by(f64::total_cmp);
    let median = 0.5 * (estimates[249] + estimates[250]);
    let coverage = covered as f64 / 500.0;
    outcome(
        (0.60..=0.76).contains(&coverage) && (median - truth).abs() <= 0.02 * truth,
        format!(
            "coverage {:.1}%, median {median:.2} ps, median std error {:.2} ps",
            100.0 * coverage,
            0.5 * (errors[249] + errors[250])
        ),
    )
}

fn random_stream(rng: &mut ChaCha8Rng, n: usize, span: i64, channel: Channel) -> Vec<DetectionRecord> {
    let mut t: Vec<i64> = (0..n).map(|_| rng.random_range(0..span)).collect();
    t.sort_unstable();
    t.into_iter().map(|time_ps| DetectionRecord { time_ps, channel }).collect()
}

fn a9() -> Outcome {
    let grid = HistogramGrid::symmetric(48, 6264).unwrap();
    let span = 2_000_000;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d1 = random_stream(&mut rng, 1000, span, Channel::D1);
        let d2 = random_stream(&mut rng, 1000, span, Channel::D2);
        let fast = correlate_streams(&d1, &d2, grid, span).unwrap();
        let mut brute = CorrelationHistogram::empty(grid);
        let mut outside = 0u64;
        for a in &d1 {
            for b in &d2 {
                let tau = b.time_ps - a.time_ps;
                if grid.bin_of(tau).is_some() {
                    brute.add(tau);
                } else {
                    outside += 1;
                }
            }
        }
        if fast.counts() != brute.counts() {
            return outcome(false, format!("seed {seed}: counts differ"));
        }
        if fast.total_in_range() + outside != 1_000_000 {
            return outcome(false, format!("seed {seed}: pair total mismatch"));
        }
    }
    outcome(true, "5 stream pairs of 1000 events, counts identical")
}

fn arb_params() -> impl Strategy<Value = TpiParams> {
    (
        0.05f64..5.0,
        0.0f64..3.0,
        0.0f64..0.5,
        20.0f64..800.0,
        0.0f64..1.0,
        50.0f64..1500.0,
        0.0f64..80.0,
        0.0f64..FRAC_PI_2,
    )
        .prop_map(|(eta, alpha2, beta, tau_c, g0, tau_r, sigma_j, phi)| TpiParams {
            eta,
            alpha2,
            beta,
            tau_c,
            emitter: EmitterModel { g0, tau_r },
            sigma_j,
            phi,
        })
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn a10() -> Outcome {
    let taus = symmetric_grid(600.0, 12.0);
    let props: Vec<Result<(), String>> = vec![
        run_property("evenness", (arb_params(), 0.0f64..3000.0), |(p, t)| {
            prop_assert_eq!(g2_tpi(t, &p).unwrap(), g2_tpi(-t, &p).unwrap());
            let c = g2_tpi_convolved(&[-t, t], &p).unwrap();
            prop_assert!(rel_close(c[0], c[1], 1e-12), "{:?}", c);
            Ok(())
        }),
        run_property("poisson limits", arb_params(), |p| {
            let far = 50.0 * p.tau_c.max(p.emitter.tau_r);
            prop_assert!((g2_tpi(far, &p).unwrap() - 1.0).abs() < 1e-9);
            let laser = TpiParams { eta: 0.0, alpha2: p.alpha2 + 0.1, ..p };
            prop_assert_eq!(g2_tpi(p.tau_c * 0.3, &laser).unwrap(), 1.0);
            Ok(())
        }),
        run_property("visibility non-negative", arb_params(), |p| {
            // keep the cross-polarized curve away from zero
            let p = TpiParams { beta: p.beta + 0.01, ..p };
            let v = visibility_curve(&p, &taus).unwrap();
            prop_assert!(v.values().iter().all(|&x| x >= -1e-12), "{:?}", v.values());
            Ok(())
        }),
        run_property("intensity scale invariance", (arb_params(), 0.01f64..100.0), |(p, c)| {
            let q = TpiParams {
                eta: c * p.eta,
                alpha2: c * p.alpha2,
                beta: c * p.beta,
                ..p
            };
            let p = TpiParams { beta: p.beta + 0.01, ..p };
            let q = TpiParams { beta: q.beta + 0.01 * c, ..q };
            let a = visibility_curve(&p, &taus).unwrap();
            let b = visibility_curve(&q, &taus).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(rel_close(*x, *y, 1e-10), "{} vs {}", x, y);
            }
            let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
            let (ia, ib) = (argmax(a.values()), argmax(b.values()));
            prop_assert!(ia == ib || rel_close(a.values()[ia], a.values()[ib], 1e-10));
            for t in [0.0, 100.0, 900.0] {
                prop_assert!(rel_close(g2_tpi(t, &p).unwrap(), g2_tpi(t, &q).unwrap(), 1e-12));
            }
            Ok(())
        }),
        run_property(
            "histogram conservation and merge",
            (
                prop::collection::vec(-3000i64..3000, 0..400),
                prop::collection::vec(-3000i64..3000, 0..400),
                prop::collection::vec(-3000i64..3000, 0..400),
            ),
            |(a, b, c)| {
                let grid = HistogramGrid::symmetric(48, 2400).unwrap();
                let (ha, hb, hc) = (histogram(&a, grid), histogram(&b, grid), histogram(&c, grid));
                prop_assert_eq!(ha.total_in_range() + ha.overflow(), a.len() as u64);
                let mut left = ha.clone();
                left.merge(&hb).unwrap();
                left.merge(&hc).unwrap();
                let mut bc = hb.clone();
                bc.merge(&hc).unwrap();
                let mut right = bc;
                right.merge(&ha).unwrap();
                prop_assert_eq!(&left, &right);
                let all: Vec<i64> = a.iter().chain(&b).chain(&c).copied().collect();
                let whole = histogram(&all, grid);
                prop_assert_eq!(left.counts(), whole.counts());
                Ok(())
            },
        ),
        run_property(
            "I/O round trips",
            (
                prop::collection::vec((0i64..1 << 50, 1u8..=2), 0..300),
                prop::collection::vec(0u64..1000, 21),
                any::<u64>(),
                prop::collection::vec((-1e6f64..1e6, -10.0f64..10.0, 0.0f64..1.0), 0..50),
            ),
            |(recs, counts, seed, rows)| {
                let dir = tempfile::tempdir().unwrap();
                let mut recs: Vec<DetectionRecord> = recs
                    .into_iter()
                    .map(|(t, c)| DetectionRecord {
                        time_ps: t,
                        channel: Channel::from_code(c).unwrap(),
                    })
                    .collect();
                recs.sort_by_key(|r| r.time_ps);
                let bin = dir.path().join("t.bin");
                io::write_timestamps_bin(&bin, &recs).unwrap();
                prop_assert_eq!(&io::read_timestamps_bin(&bin).unwrap(), &recs);
                let csv = dir.path().join("t.csv");
                io::write_timestamps_csv(&csv, &recs).unwrap();
                prop_assert_eq!(&io::read_timestamps_csv(&csv).unwrap(), &recs);

                let grid = HistogramGrid::symmetric(10, 105).unwrap();
                let h = CorrelationHistogram::from_parts(grid, counts, seed % 7, 1234, 5, 6, vec![seed]).unwrap();
                let hp = dir.path().join("h.json");
                io::write_histogram(&hp, &h).unwrap();
                prop_assert_eq!(&io::read_histogram(&hp).unwrap(), &h);

                let rows: Vec<CurveRow> = rows
                    .into_iter()
                    .map(|(tau_ps, value, sigma)| CurveRow { tau_ps, value, sigma })
                    .collect();
                let cp = dir.path().join("c.csv");
                io::write_curve_csv(&cp, &rows).unwrap();
                prop_assert_eq!(&io::read_curve_csv(&cp).unwrap(), &rows);

                let mut s = Scenario::paper_oband();
                s.params.tau_c_ps = 100.0 + (seed % 1000) as f64 * 0.37;
                s.seeds = vec![seed, seed / 3];
                let sp = dir.path().join("s.json");
                io::save_scenario(&sp, &s).unwrap();
                prop_assert_eq!(&io::load_scenario(&sp).unwrap(), &s);
                Ok(())
            },
        ),
    ];
    let failures: Vec<String> = props.into_iter().filter_map(Result::err).collect();
    if failures.is_empty() {
        outcome(true, "6 properties x 100 cases")
    } else {
        outcome(false, failures.join("; "))
    }
}

fn main() {
    let quick = Duration::from_secs(1);
    let mc = Instant::now();
    let data = simulate_pair();
    let mc_time = mc.elapsed();
    let results = [
        ("A1 ideal visibility", timed(quick, a1)),
        ("A2 optimal ratio", timed(quick, a2)),
        ("A3 fraction of maximum", timed(quick, a3)),
        ("A4 bandwidth", timed(quick, a4)),
        (
            "A5 Monte Carlo vs model",
            timed(Duration::from_secs(60).saturating_sub(mc_time), || a5(&data)),
        ),
        ("A6 parameter recovery", timed(Duration::from_secs(30), || a6(&data))),
        ("A7 convolution oracle", timed(quick, a7)),
        ("A8 coherence-fit replication", timed(Duration::from_secs(10), a8)),
        ("A9 correlator oracle", timed(quick, a9)),
        ("A10 property suite", timed(Duration::from_secs(120), a10)),
    ];
    println!("(sampling 2 x {PAIRS} pairs took {:.2} s)", mc_time.as_secs_f64());
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
