use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use detequiv::data_gen::{sample_design, DesignDistribution, RadialLaw};
use detequiv::det_equiv::solve_alpha_gamma;
use detequiv::linalg::{write_matrix_csv, ShrinkagePlan, SymMatrix};
use nalgebra::{DMatrix, DVector};
use serde_json::Value;
use tempfile::TempDir;

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detequiv"))
        .arg(command)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_owned)
        .collect()
}

fn write_group(dir: &Path, name: &str, rows: usize, p: usize, shift: f64, seed: u64) -> PathBuf {
    let dist = DesignDistribution::gaussian(SymMatrix::identity(p)).unwrap();
    let mut mu = DVector::zeros(p);
    mu[0] = shift;
    let obs = sample_design(&dist, &RadialLaw::constant_one(), &mu, rows, seed)
        .unwrap()
        .observations();
    let path = dir.join(name);
    write_matrix_csv(&obs, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn json_path(p: &Path) -> String {
    serde_json::to_string(p.to_str().unwrap()).unwrap()
}

#[test]
fn zero_replications_exit_with_precondition_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "verify.json",
        r#"{"experiment": "replication", "form": "f",
            "dist_x": {"kind": "gaussian", "sigma": {"kind": "identity"}},
            "target": {"kind": "identity"}, "n": 20, "p": 5, "replications": 0}"#,
    );
    let out = run("verify", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("replications must be at least 2"),
        "{stderr}"
    );
}

#[test]
fn malformed_config_exits_with_precondition_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"sigma": {"kind": "identity"}}"#);
    let out = run("detequiv", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match the schema"));
}

#[test]
fn detequiv_reports_the_solver_output() {
    let dir = TempDir::new().unwrap();
    let (n, p) = (400, 100);
    let cfg = write_config(
        dir.path(),
        "de.json",
        &format!(
            r#"{{"sigma": {{"kind": "identity"}}, "target": {{"kind": "identity"}}, "n": {n}, "p": {p},
                "sandwich": {{"kind": "identity"}}}}"#
        ),
    );
    let out_dir = dir.path().join("out");
    let out = run("detequiv", &cfg, &out_dir, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let sol = solve_alpha_gamma(
        &SymMatrix::identity(p),
        &ShrinkagePlan::scaled_identity(p, 1.0).unwrap(),
        &DVector::from_element(n, 1.0),
        n,
        1e-12,
        10_000,
    )
    .unwrap();
    let r = report(&out_dir);
    assert_eq!(r["command"], "detequiv");
    assert_eq!(
        r["report"]["result"]["gamma_bar"].as_f64().unwrap(),
        sol.gamma_bar
    );
    assert_eq!(
        r["report"]["result"]["alpha_bar"].as_f64().unwrap(),
        sol.alpha_bar
    );
    assert!(r["report"]["result"]["sandwich"].as_f64().is_some());

    let hash = r["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    {
        let file = "results.csv";
        let first = fs::read_to_string(out_dir.join(file)).unwrap();
        assert!(
            first.starts_with(&format!("# config_hash={hash} version=")),
            "{file}"
        );
    }
    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["config_hash"], hash.as_str());
    assert_eq!(resolved["config"]["tol"].as_f64(), Some(1e-12));
    assert!(resolved["config"]["x"].is_object());
    assert!(out_dir.join("timing.json").exists());
}

#[test]
fn lda_thresholds_coincide_for_balanced_groups() {
    let dir = TempDir::new().unwrap();
    let g1 = write_group(dir.path(), "g1.csv", 80, 20, 0.0, 1);
    let g2 = write_group(dir.path(), "g2.csv", 80, 20, 1.0, 2);
    let cfg = write_config(
        dir.path(),
        "lda.json",
        &format!(
            r#"{{"group1": {}, "group2": {}, "pi1": 0.5}}"#,
            json_path(&g1),
            json_path(&g2)
        ),
    );
    let out_dir = dir.path().join("out");
    let out = run("lda", &cfg, &out_dir, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = report(&out_dir);
    let res = &r["report"]["result"];
    assert_eq!(
        res["t_star"].as_f64().unwrap(),
        res["t_naive"].as_f64().unwrap()
    );
    assert_eq!(res["n1"], 80);
}

#[test]
fn singular_pooled_covariance_exits_with_numerical_code() {
    let dir = TempDir::new().unwrap();
    let duplicate = |name: &str, seed: u64| {
        let base = write_group(dir.path(), name, 10, 2, 0.5 * seed as f64, seed);
        let m = detequiv::linalg::read_matrix_csv(std::io::BufReader::new(
            fs::File::open(&base).unwrap(),
        ))
        .unwrap();
        let wide = DMatrix::from_fn(m.nrows(), 3, |i, j| m[(i, j.min(1))]);
        write_matrix_csv(&wide, fs::File::create(&base).unwrap()).unwrap();
        base
    };
    let g1 = duplicate("a.csv", 1);
    let g2 = duplicate("b.csv", 2);
    let cfg = write_config(
        dir.path(),
        "lda.json",
        &format!(
            r#"{{"group1": {}, "group2": {}}}"#,
            json_path(&g1),
            json_path(&g2)
        ),
    );
    let out = run("lda", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn rda_sweep_gives_one_curve_row_per_weight() {
    let dir = TempDir::new().unwrap();
    let g1 = write_group(dir.path(), "g1.csv", 60, 15, 0.0, 3);
    let g2 = write_group(dir.path(), "g2.csv", 40, 15, 1.5, 4);
    let grid: Vec<String> = (0..11).map(|k| format!("{}", k as f64 * 0.09)).collect();
    let cfg = write_config(
        dir.path(),
        "rda.json",
        &format!(
            r#"{{"group1": {}, "group2": {}, "pi1": 0.6, "target": {{"kind": "identity"}}, "w_grid": [{}]}}"#,
            json_path(&g1),
            json_path(&g2),
            grid.join(",")
        ),
    );
    let out_dir = dir.path().join("out");
    let out = run("rda", &cfg, &out_dir, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(data_lines(&out_dir.join("plot_rda_curve.csv")).len(), 11);
    assert_eq!(data_lines(&out_dir.join("results.csv")).len(), 11);
}

#[test]
fn rate_experiment_gives_three_rows_per_series_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "rate.json",
        r#"{"experiment": "rate", "n_grid": [250, 500, 1000], "form": "f",
            "dist_x": {"kind": "gaussian", "sigma": {"kind": "identity"}},
            "target": {"kind": "identity"}, "n": 250, "p": 10, "replications": 20}"#,
    );
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    for (out_dir, threads) in [(&first, "1"), (&second, "3")] {
        let out = run(
            "verify",
            &cfg,
            out_dir,
            &["--seed", "5", "--threads", threads],
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let rows = data_lines(&first.join("plot_variance_vs_n.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",f")));
    for file in [
        "report.json",
        "results.csv",
        "resolved_config.json",
        "plot_variance_vs_n.csv",
    ] {
        assert_eq!(
            fs::read(first.join(file)).unwrap(),
            fs::read(second.join(file)).unwrap(),
            "{file}"
        );
    }
    assert!(!first.join("plot_rda_curve.csv").exists());
    assert!(!first.join("plot_invariance_gap.csv").exists());
}

#[test]
fn seed_changes_the_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "est.json",
        r#"{"dist": {"kind": "gaussian", "sigma": {"kind": "identity"}}, "target": {"kind": "identity"},
            "n": 200, "p": 40, "replications": 3}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        run("estimate", &cfg, &a, &["--seed", "1"]).status.code(),
        Some(0)
    );
    assert_eq!(
        run("estimate", &cfg, &b, &["--seed", "2"]).status.code(),
        Some(0)
    );
    let (ra, rb) = (report(&a), report(&b));
    assert_ne!(ra["config_hash"], rb["config_hash"]);
    let est = &ra["report"]["result"];
    assert!(
        (est["mean"].as_f64().unwrap() / est["population_value"].as_f64().unwrap() - 1.0).abs()
            < 0.1
    );
}

#[test]
fn portfolio_and_ridge_emit_risk_curves() {
    let dir = TempDir::new().unwrap();
    let pcfg = write_config(
        dir.path(),
        "portfolio.json",
        r#"{"sigma": {"kind": "linear_spectrum", "low": 0.5, "high": 1.5}, "target": {"kind": "identity", "scale": 0.5},
            "n": 200, "p": 50, "scales": [0.5, 1.0, 2.0], "replications": 10}"#,
    );
    let pout = dir.path().join("p");
    let out = run("portfolio", &pcfg, &pout, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(data_lines(&pout.join("plot_risk_curve.csv")).len(), 12);

    let rcfg = write_config(
        dir.path(),
        "ridge.json",
        r#"{"design": {"kind": "sampled", "dist": {"kind": "gaussian", "sigma": {"kind": "identity"}}, "n": 60, "p": 20},
            "penalty": {"kind": "identity"}, "lambdas": [0.1, 1.0], "beta0": 1.0}"#,
    );
    let rout = dir.path().join("r");
    let out = run("ridge", &rcfg, &rout, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(data_lines(&rout.join("plot_risk_curve.csv")).len(), 6);
    let rows = &report(&rout)["report"]["result"]["rows"];
    let row = &rows[0];
    let (v, id) = (
        row["variance"].as_f64().unwrap(),
        row["variance_identity"].as_f64().unwrap(),
    );
    assert!((v - id).abs() < 1e-10);
}
