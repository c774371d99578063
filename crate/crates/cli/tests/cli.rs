use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_migrate-sim"));
    c.env_remove("MIGRATE_SIM_SEED");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// Rows of a CSV file with `#` comment lines, keyed by header.
fn table(path: &Path) -> Vec<HashMap<String, String>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().expect("header").split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}={} is not a number", row[key]))
}

#[test]
fn balance_mean_stays_below_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(
        tmp.path(),
        &["balance", "--m", "16", "--n", "16", "--initial", "all-at-one", "--stop", "exact", "--reps", "200", "--seed", "7", "--out", "b"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table(&tmp.path().join("b/balance.csv"));
    assert_eq!(rows.len(), 1);
    assert!(num(&rows[0], "mean") <= num(&rows[0], "bound"));
    assert_eq!(num(&rows[0], "censored"), 0.0);
    assert_eq!(table(&tmp.path().join("b/times.csv")).len(), 200);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("b/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "balance");
    assert_eq!(manifest["seed_lo"], 7);
    assert_eq!(manifest["seed_hi"], 206);
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["finished_at"].is_string());
}

#[test]
fn balance_two_servers_matches_exponential_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["balance", "--m", "2", "--n", "2", "--initial", "all-at-one", "--reps", "10000", "--out", "b"]);
    assert_eq!(code(&o), 0);
    let row = &table(&tmp.path().join("b/balance.csv"))[0];
    let se = num(row, "sd") / 100.0;
    assert!((num(row, "mean") - 1.0).abs() <= 3.0 * se, "mean {}", row["mean"]);
}

#[test]
fn missing_flag_is_a_usage_error_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["balance", "--m", "4"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn invalid_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["balance", "--m", "4", "--n", "8", "--stop", "eps=2"][..],
        &["open", "--lambda", "0.5,0.5", "--m", "3"][..],
        &["meanfield", "--lambda", "0.8", "--policy", "xyz"][..],
        &["open", "--lambda", "0.5", "--m", "4", "--reps", "5"][..],
    ] {
        let o = run_in(tmp.path(), args);
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn every_subcommand_refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["balance", "--m", "3", "--n", "6", "--reps", "5"],
        &["open", "--m", "3", "--lambda", "0.5", "--horizon", "50"],
        &["meanfield", "--lambda", "0.5", "--bcap", "20"],
        &["verify", "lyapunov", "--max-n", "3"],
    ];
    for (k, args) in cases.iter().enumerate() {
        let out = format!("run{k}");
        let mut full: Vec<&str> = args.to_vec();
        full.extend(["--out", &out]);
        assert_eq!(code(&run_in(tmp.path(), &full)), 0, "{args:?}");
        let second = run_in(tmp.path(), &full);
        assert_eq!(code(&second), 1, "{args:?}");
        assert!(String::from_utf8_lossy(&second.stderr).contains("already exists"));
        full.push("--force");
        assert_eq!(code(&run_in(tmp.path(), &full)), 0, "{args:?}");
    }
}

#[test]
fn open_reports_throughput_with_interval_and_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["open", "--m", "10", "--lambda", "0.8", "--policy", "rlo", "--horizon", "500", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let row = &table(&tmp.path().join("o/throughput.csv"))[0];
    let (t, lo, hi) = (num(row, "throughput"), num(row, "ci_lo"), num(row, "ci_hi"));
    assert!(lo <= t && t <= hi);
    assert!((num(row, "prediction") - 0.3956).abs() < 1e-3);
    assert!(num(row, "rel_error") < 0.1);
}

#[test]
fn single_entry_heterogeneous_system_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(
        tmp.path(),
        &["open", "--lambda", "4.5,0,0,0,0", "--mu", "1,1,1,1,1", "--horizon", "5000", "--sample-interval", "1", "--probe", "--out", "o"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let row = &table(&tmp.path().join("o/stability.csv"))[0];
    assert_eq!(row["verdict"], "stable");
    assert_eq!(num(row, "m"), 5.0);
}

#[test]
fn overloaded_open_system_warns_and_suggests_the_probe() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["open", "--m", "10", "--lambda", "1.2", "--horizon", "100", "--out", "o"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unreliable") && err.contains("--probe"), "{err}");
    assert!(!tmp.path().join("o/throughput.csv").exists());
}

#[test]
fn trace_writes_trajectory_and_sojourns() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["open", "--m", "3", "--lambda", "0.5", "--horizon", "20", "--trace", "--out", "o"]);
    assert_eq!(code(&o), 0);
    let traj = fs::read_to_string(tmp.path().join("o/trajectory.csv")).unwrap();
    assert!(traj.starts_with("# seed=1\nt,N_1,N_2,N_3\n"));
    assert!(tmp.path().join("o/sojourns.csv").exists());
}

#[test]
fn config_file_describes_the_system() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("sys.toml"), "policy = \"rlo\"\nbeta = 0.5\nlambda = [0.4, 0.8, 0.2]\nmu = [1.0, 1.0, 1.0]\n").unwrap();
    let o = run_in(tmp.path(), &["open", "--config", "sys.toml", "--horizon", "100", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = &table(&tmp.path().join("o/throughput.csv"))[0];
    assert_eq!(num(row, "m"), 3.0);
    assert!((num(row, "total_lambda") - 1.4).abs() < 1e-12);
    let clash = run_in(tmp.path(), &["open", "--config", "sys.toml", "--lambda", "0.3", "--out", "o2"]);
    assert_eq!(code(&clash), 1);
}

#[test]
fn seed_defaults_to_environment_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .current_dir(tmp.path())
        .env("MIGRATE_SIM_SEED", "99")
        .args(["balance", "--m", "3", "--n", "9", "--reps", "4", "--out", "b"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(tmp.path().join("b/balance.csv")).unwrap();
    assert!(text.starts_with("# seed=99\n"));
}

#[test]
fn rlo_fixed_point_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["meanfield", "--policy", "rlo", "--mode", "fixedpoint", "--lambda", "0.8", "--beta", "0.5", "--bcap", "100", "--out", "m"]);
    assert_eq!(code(&o), 0);
    let xi = table(&tmp.path().join("m/xi.csv"));
    assert_eq!(xi.len(), 101);
    let mass: f64 = xi.iter().map(|r| num(r, "xi_k")).sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let s = &table(&tmp.path().join("m/summary.csv"))[0];
    assert!(num(s, "residual") < 1e-8);
    assert!((num(s, "throughput") - 0.8 / num(s, "y")).abs() < 1e-12);
}

#[test]
fn zero_load_fixed_point_is_all_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["meanfield", "--lambda", "0", "--mode", "fixedpoint", "--bcap", "10", "--out", "m"]);
    assert_eq!(code(&o), 0);
    let xi: Vec<f64> = table(&tmp.path().join("m/xi.csv")).iter().map(|r| num(r, "xi_k")).collect();
    assert_eq!(xi[0], 1.0);
    assert!(xi[1..].iter().all(|&v| v == 0.0));
}

#[test]
fn rls_relaxation_reports_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["meanfield", "--policy", "rls", "--mode", "fixedpoint", "--lambda", "0.5", "--bcap", "30", "--out", "m"]);
    assert_eq!(code(&o), 0);
    let row = &table(&tmp.path().join("m/relaxation.csv"))[0];
    assert!(num(row, "agreement") < 1e-6);
    assert!(String::from_utf8_lossy(&o.stdout).contains("L1 distance"));
}

#[test]
fn integration_mode_writes_a_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["meanfield", "--lambda", "0.8", "--mode", "integrate", "--t-end", "2", "--bcap", "20", "--out", "m"]);
    assert_eq!(code(&o), 0);
    let rows = table(&tmp.path().join("m/trajectory.csv"));
    assert_eq!(rows.len(), 21);
    assert_eq!(num(&rows[20], "t"), 2.0);
}

#[test]
fn verify_coupling_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["verify", "coupling", "--seed", "3", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("coupling  PASS") && out.contains("p="));
    let row = &table(&tmp.path().join("v/coupling.csv"))[0];
    assert!(num(row, "p_value") > 0.01);
}

#[test]
fn verify_lyapunov_small_table() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["verify", "lyapunov", "--m", "3", "--max-n", "6", "--out", "v"]);
    assert_eq!(code(&o), 0);
    let rows = table(&tmp.path().join("v/drift.csv"));
    assert_eq!(rows.len(), 7 * 7 * 7);
    assert!(rows.iter().filter(|r| r["checked"] == "true").all(|r| r["negative"] == "true"));
}

#[test]
fn verify_monotone_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_in(tmp.path(), &["verify", "monotone", "--pairs", "20", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn help_exits_successfully() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(tmp.path(), &["--help"])), 0);
    assert_eq!(code(&run_in(tmp.path(), &["verify", "--help"])), 0);
}
