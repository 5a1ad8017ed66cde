use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use stacked_rmst::simgen::{generate_replication, Scenario};
use stacked_rmst_cli::run;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("stacked-rmst").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn small_sim(out: &Path, nsim: &str, extra: &[&str]) -> Outcome {
    let mut args = vec![
        "simulate", "--n", "120", "--nsim", nsim, "--tau", "20", "--B", "4", "--oracle-draws", "5000", "--out", p(out),
    ];
    args.extend(extra);
    cli(&args)
}

#[test]
fn simulate_smoke_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = [
        "--scenario", "1", "--n", "300", "--nsim", "5", "--tau", "20", "--B", "10", "--seed", "7", "--oracle-draws",
        "20000",
    ];
    for out in [&a, &b] {
        let mut v = vec!["simulate"];
        v.extend(args);
        v.extend(["--out", p(out)]);
        let r = cli(&v);
        assert_eq!(r.code, 0, "{}", r.stderr);
        assert!(r.stdout.contains("Scenario 1, tau = 20"));
    }
    let recs = csv_rows(&a.join("records.csv"));
    assert_eq!(recs.len(), 15);
    for est in ["cox-linear", "cox-spline", "stacked"] {
        assert_eq!(recs.iter().filter(|r| &r[3] == est).count(), 5);
    }
    for f in ["records.csv", "truths.csv", "summary.csv", "table.txt", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["nsim"], 5);
    assert!(manifest["version"].is_string());
    let header = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(header.starts_with(
        "scenario,tau,estimator,rel_bias_pct,mse_ratio,acl_ratio,coverage,isse_ratio,bound_mse,isse_bound,bound_ok"
    ));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [&["--B", "1"][..], &["--tau", "-3"], &["--scenario", "7"], &["--candidates", "rsf"]] {
        let r = small_sim(dir.path(), "3", bad);
        assert_eq!(r.code, 1, "{bad:?}: {}", r.stderr);
        assert!(r.stderr.starts_with("error:"));
    }
    assert_eq!(small_sim(dir.path(), "0", &[]).code, 1);
    assert_eq!(cli(&["simulate", "--bogus"]).code, 1);
    assert_eq!(cli(&["report"]).code, 1);
    let help = cli(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.stdout.contains("simulate") && help.stdout.contains("report"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small study\nnsim = 3\ntau = 20\nB = 4\nn = 120\noracle-draws = 5000\nscenario = 3\n").unwrap();
    let out = dir.path().join("o");
    let r = cli(&["--config", p(&cfg), "simulate", "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let recs = csv_rows(&out.join("records.csv"));
    assert_eq!(recs.len(), 9);
    assert!(recs.iter().all(|r| &r[0] == "3"));
    let r = cli(&["--config", p(&cfg), "simulate", "--nsim", "2", "--out", p(&out)]);
    assert_eq!(r.code, 0);
    assert_eq!(csv_rows(&out.join("records.csv")).len(), 6);
    fs::write(&cfg, "nsimm = 3\n").unwrap();
    assert_eq!(cli(&["--config", p(&cfg), "simulate", "--out", p(&out)]).code, 1);
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_stacked-rmst"))
        .args(["simulate", "--n", "100", "--nsim", "1", "--tau", "20", "--B", "2", "--oracle-draws", "1000"])
        .env("RMST_STACK_OUT", dir.path())
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(dir.path().join("records.csv").exists());
    let status = Command::new(env!("CARGO_BIN_EXE_stacked-rmst"))
        .args(["simulate", "--nsim", "0"])
        .env("RMST_STACK_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

fn write_scenario_csv(path: &Path, b: u8, n: usize, seed: u64) {
    let s = generate_replication(&Scenario::new(b).unwrap(), n, seed, 0).unwrap();
    s.write_csv(fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn fit_recovers_the_linear_exponential_effect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s1.csv");
    write_scenario_csv(&data, 1, 300, 2024);
    let out = dir.path().join("fit");
    let r = cli(&["fit", p(&data), "--tau", "20", "--B", "20", "--seed", "3", "--out", p(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let json: Value = serde_json::from_str(&r.stdout).unwrap();
    let est = &json["estimates"][0];
    let gamma = est["gamma"].as_f64().unwrap();
    assert!((gamma + 2.965).abs() < 1.0, "{gamma}");
    let ci = est["ci"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= ci[1].as_f64().unwrap());
    for key in ["tau", "mu0", "mu1", "B", "weights0", "weights1"] {
        assert!(!est[key].is_null(), "missing {key}");
    }
    let w: f64 = est["weights0"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((w - 1.0).abs() < 1e-12);
    assert!(json.get("diagnostics").is_none());
    let on_disk: Value = serde_json::from_slice(&fs::read(out.join("effect.json")).unwrap()).unwrap();
    assert_eq!(on_disk, json);
    let curve = csv_rows(&out.join("curve.csv"));
    assert!(!curve.is_empty());
    let header = fs::read_to_string(out.join("curve.csv")).unwrap();
    assert!(header.starts_with("t,S0_bar,S1_bar\n"));
    let s0: Vec<f64> = curve.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(s0.windows(2).all(|w| w[1] <= w[0] + 1e-12));

    let r = cli(&["-v", "fit", p(&data), "--tau", "20", "--B", "4", "--out", p(&out)]);
    let json: Value = serde_json::from_str(&r.stdout).unwrap();
    let diag = json["diagnostics"].as_array().unwrap();
    assert_eq!(diag.len(), 2);
    assert_eq!(diag[0]["weights"].as_array().unwrap().len(), 4);
    assert!(diag[1]["grid"].is_array() && diag[1]["arm"] == 1);
}

#[test]
fn two_record_file_runs_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("two.csv");
    fs::write(&data, "time,status,arm,x1\n3.0,1,0,0.5\n2.0,1,1,-0.2\n").unwrap();
    let r = cli(&["fit", p(&data), "--tau", "2.5", "--B", "10", "--out", p(dir.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("WARNING: small sample"));
    let json: Value = serde_json::from_str(&r.stdout).unwrap();
    assert!(json["warnings"].as_array().unwrap().len() >= 2);
    assert!(json["estimates"][0]["gamma"].as_f64().unwrap().is_finite());
}

#[test]
fn sweep_reports_gamma_over_tau() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s2.csv");
    write_scenario_csv(&data, 2, 200, 5);
    let r = cli(&["fit", p(&data), "--sweep", "0.5:4:0.5", "--B", "5", "--out", p(dir.path())]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = csv_rows(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        let tau: f64 = row[0].parse().unwrap();
        assert_eq!(tau, 0.5 * (i + 1) as f64);
        let gamma: f64 = row[1].parse().unwrap();
        let scaled: f64 = row[4].parse().unwrap();
        assert_eq!(scaled, gamma / tau);
    }
    let header = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(header.starts_with("tau,gamma,ci_lower,ci_upper,gamma_over_tau"));
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "time,status,arm,x1\n1.0,1,0,0.3\n2.0,1,1,oops\n-1.0,0,1,0.2\n").unwrap();
    let r = cli(&["fit", p(&data), "--tau", "2", "--B", "2", "--out", p(dir.path())]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("row 1 field `x1`"), "{}", r.stderr);
    fs::write(&data, "time,status,arm\n1.0,1,0\n2.0,1,0\n3.0,0,0\n").unwrap();
    let r = cli(&["fit", p(&data), "--tau", "2", "--B", "2", "--out", p(dir.path())]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    fs::write(&data, "time,arm,x1\n1.0,0,0.3\n2.0,1,0.1\n").unwrap();
    let r = cli(&["fit", p(&data), "--tau", "2", "--B", "2", "--out", p(dir.path())]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("status"), "{}", r.stderr);
    let missing = dir.path().join("absent.csv");
    assert_eq!(cli(&["fit", p(&missing), "--tau", "2"]).code, 1);
    assert_eq!(cli(&["fit", p(&data)]).code, 1);
}

#[test]
fn oracle_prints_every_cell() {
    let r = cli(&["oracle", "--scenario", "1,3", "--tau", "20,50", "--draws", "20000"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 5);
    let first: Vec<&str> = lines[1].split_whitespace().collect();
    assert_eq!(first[0], "1");
    let gamma: f64 = first[2].parse().unwrap();
    assert!((gamma + 2.965).abs() < 0.05);
}

#[test]
fn report_merges_shards() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s);
    assert_eq!(small_sim(&d("all"), "3", &["--scenario", "1,3"]).code, 0);
    assert_eq!(small_sim(&d("s1"), "3", &["--scenario", "1"]).code, 0);
    assert_eq!(small_sim(&d("s3"), "3", &["--scenario", "3"]).code, 0);
    let r = cli(&["report", p(&d("s1/records.csv")), p(&d("s3/records.csv")), "--out", p(&d("merged"))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let single = fs::read(d("all/summary.csv")).unwrap();
    assert_eq!(fs::read(d("merged/summary.csv")).unwrap(), single);
    assert_eq!(fs::read(d("merged/table.txt")).unwrap(), fs::read(d("all/table.txt")).unwrap());

    // replication shards, given out of order
    assert_eq!(small_sim(&d("r0"), "2", &["--scenario", "1,3"]).code, 0);
    assert_eq!(small_sim(&d("r2"), "1", &["--scenario", "1,3", "--first-rep", "2"]).code, 0);
    let r = cli(&["report", p(&d("r2/records.csv")), p(&d("r0/records.csv")), "--out", p(&d("reps"))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(fs::read(d("reps/summary.csv")).unwrap(), single);

    // union of different scenario sets
    let r = cli(&["report", p(&d("s3/records.csv")), "--out", p(&d("one"))]);
    assert_eq!(r.code, 0);
    assert_eq!(csv_rows(&d("one/summary.csv")).len(), 3);

    // overlapping shards and foreign files are rejected
    let r = cli(&["report", p(&d("s1/records.csv")), p(&d("all/records.csv")), "--out", p(&d("x"))]);
    assert_eq!(r.code, 1);
    let r = cli(&["report", p(&d("s1/summary.csv")), "--out", p(&d("x"))]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("not a record file"));
}
