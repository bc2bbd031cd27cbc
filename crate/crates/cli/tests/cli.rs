use std::path::Path;
use std::process::{Command, Output};

fn homlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn curve(p: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect()
}

#[test]
fn bandwidth_of_150_ps() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["bandwidth", "--tau-c", "150"]);
    assert!(o.status.success());
    let line = stdout(&o);
    assert_eq!(line.lines().count(), 1);
    assert!(line.contains("4.388"), "{line}");
    let v = read_json(&dir.path().join("bandwidth.json"));
    assert!((v["bandwidth_uev"].as_f64().unwrap() - 4.388).abs() < 1e-3);
}

#[test]
fn quiet_suppresses_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["--quiet", "bandwidth", "--tau-c", "150", "--out", "b.json"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(dir.path().join("b.json").exists());
}

#[test]
fn simulation_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_homlab"))
            .current_dir(dir.path())
            .env("HOMLAB_THREADS", threads)
            .args(["simulate", "--pairs", "600000", "--seed", "11", "--out", out])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("1", "a.json");
    run("4", "b.json");
    run("4", "c.json");
    for pol in ["par", "perp"] {
        let a = std::fs::read(dir.path().join(format!("a_{pol}.json"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b_{pol}.json"))).unwrap();
        let c = std::fs::read(dir.path().join(format!("c_{pol}.json"))).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
    let other = homlab(dir.path(), &["simulate", "--pairs", "600000", "--seed", "12", "--out", "d.json"]);
    assert!(other.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a_par.json")).unwrap(),
        std::fs::read(dir.path().join("d_par.json")).unwrap()
    );
}

#[test]
fn single_pair_lands_in_one_bin() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["simulate", "--pairs", "1", "--seed", "5"]);
    assert!(o.status.success());
    for pol in ["par", "perp"] {
        let v = read_json(&dir.path().join(format!("hist_{pol}.json")));
        let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
        assert_eq!(total + v["overflow"].as_u64().unwrap(), 1);
        assert_eq!(v["n_start"], 1);
        assert_eq!(v["seed_list"], serde_json::json!([5]));
    }
}

#[test]
fn simulate_then_fit_and_visibility() {
    let dir = tempfile::tempdir().unwrap();
    assert!(homlab(dir.path(), &["simulate", "--pairs", "1000000", "--seed", "2"]).status.success());
    let args = ["--par", "hist_par.json", "--perp", "hist_perp.json"];

    let o = homlab(dir.path(), &[&["visibility"][..], &args].concat());
    assert!(o.status.success());
    let v = curve(&dir.path().join("visibility.csv"));
    assert_eq!(v.len(), 261);
    let peak = v.iter().map(|r| r.1).fold(f64::MIN, f64::max);
    assert!((0.35..0.8).contains(&peak), "{peak}");

    let o = homlab(dir.path(), &[&["fit"][..], &args].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("fit_report.json"));
    assert!(r["converged"].as_bool().unwrap());
    assert_eq!(r["settings"]["free"].as_array().unwrap().len(), 4);
    assert!(r["settings"]["init"].is_object());
}

#[test]
fn identical_histograms_have_zero_visibility() {
    let dir = tempfile::tempdir().unwrap();
    assert!(homlab(dir.path(), &["simulate", "--pairs", "300000", "--seed", "8"]).status.success());
    let o = homlab(dir.path(), &["visibility", "--par", "hist_perp.json", "--perp", "hist_perp.json"]);
    assert!(o.status.success());
    assert!(curve(&dir.path().join("visibility.csv")).iter().all(|r| r.1 == 0.0));
}

#[test]
fn optimal_ratio_is_in_expected_range() {
    let dir = tempfile::tempdir().unwrap();
    assert!(homlab(dir.path(), &["optimize-ratio"]).status.success());
    let v = read_json(&dir.path().join("optimal_ratio.json"));
    let r = v["alpha2_over_eta"].as_f64().unwrap();
    assert!((0.3..0.7).contains(&r), "{r}");
}

#[test]
fn model_curves_bunch_and_dip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(homlab(dir.path(), &["model-curve", "--out", "par.csv"]).status.success());
    assert!(homlab(dir.path(), &["model-curve", "--phi", "perp", "--out", "perp.csv"]).status.success());
    let at_zero = |name: &str| {
        curve(&dir.path().join(name))
            .into_iter()
            .find(|r| r.0 == 0.0)
            .unwrap()
            .1
    };
    assert!(at_zero("par.csv") > 1.0);
    assert!(at_zero("perp.csv") < 1.0);

    let mut s = homlab_core::io::Scenario::paper_oband();
    s.params.eta = 0.0;
    homlab_core::io::save_scenario(dir.path().join("laser.json"), &s).unwrap();
    let o = homlab(dir.path(), &["--scenario", "laser.json", "model-curve", "--out", "flat.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(curve(&dir.path().join("flat.csv")).iter().all(|r| (r.1 - 1.0).abs() < 1e-12));
}

#[test]
fn validation_errors_exit_1_without_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["bandwidth", "--tau-c", "-5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = homlab(dir.path(), &["simulate", "--pairs", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = homlab(dir.path(), &["fit", "--par", "a", "--perp", "b", "--free", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    let o = homlab(dir.path(), &["bandwidth"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn runtime_errors_exit_2_without_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["visibility", "--par", "missing.json", "--perp", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));

    let mut s = homlab_core::io::Scenario::paper_oband();
    s.qd_rate = 1e9;
    homlab_core::io::save_scenario(dir.path().join("bright.json"), &s).unwrap();
    let o = homlab(dir.path(), &["--scenario", "bright.json", "simulate", "--pairs", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn non_convergence_exits_3_without_artifact() {
    let dir = tempfile::tempdir().unwrap();
    assert!(homlab(dir.path(), &["simulate", "--pairs", "200000", "--seed", "4"]).status.success());
    let o = homlab(
        dir.path(),
        &["fit", "--par", "hist_par.json", "--perp", "hist_perp.json", "--max-iterations", "1"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("fit_report.json").exists());
}

#[test]
fn help_documents_units() {
    let dir = tempfile::tempdir().unwrap();
    let o = homlab(dir.path(), &["--help"]);
    assert!(o.status.success());
    let top = stdout(&o);
    for flag in ["--scenario", "--seed", "--out", "--quiet"] {
        assert!(top.contains(flag), "{flag}");
    }
    let sim = stdout(&homlab(dir.path(), &["simulate", "--help"]));
    assert!(sim.contains("[pairs]") && sim.contains("[JSON]"));
    let fit = stdout(&homlab(dir.path(), &["fit", "--help"]));
    assert!(fit.contains("[ps]") && fit.contains("[count]"));
    let bw = stdout(&homlab(dir.path(), &["bandwidth", "--help"]));
    assert!(bw.contains("[ps]"));
}
