use std::path::Path;
use std::process::{Command, Output};

fn hardy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Data rows of a CSV output, skipping the config comment and header.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(2)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn solve_first_and_second_constants() {
    let out = hardy(&["solve", "--alpha", "0", "--p", "2", "--n", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["result"]["mu"].as_f64().unwrap() - 1.0).abs() < 1e-12);

    let out = hardy(&["solve", "--alpha", "0", "--n", "2"]);
    let v = json(&out);
    assert!((v["result"]["mu"].as_f64().unwrap() - 1.3090169943749475).abs() < 1e-11);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["config"]["task"]["name"], "solve");
    assert!(v["predicted_mu"].is_number());
}

#[test]
fn solve_linear_weights_stays_below_limit() {
    let out = hardy(&["solve", "--alpha", "1", "--n", "100000"]);
    assert_eq!(out.status.code(), Some(0));
    let mu = json(&out)["result"]["mu"].as_f64().unwrap();
    assert!(mu < 16.0 / 9.0 && mu > 1.5);
}

#[test]
fn check_weights_verdicts_and_exit_codes() {
    let out = hardy(&["check-weights", "--alpha", "1", "--p", "2", "--horizon", "1000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["report"]["l"], 0.5);
    assert_eq!(v["all_exact_hold"], true);

    let out = hardy(&["check-weights", "--alpha", "0", "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["report"]["l"], 1.0);

    // Pointwise condition fails at k = 1 for alpha = 3.
    let out = hardy(&["check-weights", "--alpha", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["all_exact_hold"], false);
}

#[test]
fn decreasing_table_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "lambda\n3\n2\n1\n").unwrap();
    let out = hardy(&["check-weights", "--table", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-decreasing"));

    let out = hardy(&["solve", "--table", "/nonexistent.csv", "--n", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_two() {
    assert_eq!(hardy(&["solve", "--n", "3", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(hardy(&["solve", "--n", "0"]).status.code(), Some(2));
    assert_eq!(hardy(&["solve"]).status.code(), Some(2));
    assert_eq!(hardy(&[]).status.code(), Some(2));
    assert_eq!(hardy(&["oracle-compare", "--n-max", "5000"]).status.code(), Some(2));
    assert_eq!(hardy(&["solve", "--alpha", "1", "--table", "x.csv", "--n", "2"]).status.code(), Some(2));
}

#[test]
fn sweep_rows_follow_input_order() {
    let out = hardy(&["sweep", "--alpha", "0", "--n", "1000,10,100"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("# config: {"));
    assert_eq!(text.lines().nth(1), Some("N,mu_N,predicted,c_N"));
    let rows = csv_rows(&text);
    let ns: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ns, ["1000", "10", "100"]);
    let c: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(c[1] < c[2] && c[2] < c[0]);
}

#[test]
fn single_row_sweep() {
    let out = hardy(&["sweep", "--n", "2"]);
    assert_eq!(csv_rows(&stdout(&out)).len(), 1);
}

#[test]
fn oracle_compare_agrees() {
    let out = hardy(&["oracle-compare", "--p", "2", "--alpha", "0", "--n-max", "64"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 64);
    for r in &rows {
        assert!(r[3].parse::<f64>().unwrap().abs() <= 1e-9, "{r:?}");
    }

    let out = hardy(&["oracle-compare", "--p", "3", "--alpha", "0", "--n-max", "32"]);
    for r in csv_rows(&stdout(&out)) {
        let (a, b): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((a - b).abs() / b <= 1e-7, "{r:?}");
    }

    let out = hardy(&["oracle-compare", "--n-max", "1"]);
    let rows = csv_rows(&stdout(&out));
    assert!(rows[0][3].parse::<f64>().unwrap().abs() < 1e-11);
}

#[test]
fn oracle_non_convergence_marks_rows() {
    let out = hardy(&["oracle-compare", "--p", "3", "--n-max", "6", "--oracle-tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().skip(1).any(|r| r[2] == "NaN"));
}

#[test]
fn breakdown_rows() {
    let out = hardy(&["breakdown", "--mu", "1,3.08,4", "--cap", "1000000"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&stdout(&out));
    assert_eq!(rows[0][1], "1");
    let n: usize = rows[1][1].parse().unwrap();
    let n0: usize = rows[1][2].parse().unwrap();
    assert!(n0 <= n);
    assert_eq!(rows[2][1], ">1000000");
    assert_eq!(rows[2][4], "NaN");
}

fn rerun_reproduces(args: &[&str], dir: &Path, name: &str, code: i32) {
    let path = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--output", path.to_str().unwrap()]);
    assert_eq!(hardy(&full).status.code(), Some(code));
    let first = std::fs::read(&path).unwrap();
    let out = hardy(&["--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(code));
    assert_eq!(out.stdout, first, "{name}");
}

#[test]
fn config_echo_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    rerun_reproduces(&["sweep", "--alpha", "1", "--p", "2.5", "--n", "5,50"], dir.path(), "sweep.csv", 0);
    rerun_reproduces(&["solve", "--alpha", "2", "--n", "30"], dir.path(), "solve.json", 0);
    rerun_reproduces(&["breakdown", "--mu", "2,3", "--cap", "100000"], dir.path(), "b.csv", 0);
    rerun_reproduces(&["oracle-compare", "--p", "2.5", "--n-max", "5"], dir.path(), "o.csv", 0);
    rerun_reproduces(&["check-weights", "--alpha", "1", "--horizon", "500"], dir.path(), "c.json", 0);
    // Sublinear powers fail the pointwise condition, and the rerun fails the same way.
    rerun_reproduces(&["check-weights", "--alpha", "0.5", "--horizon", "500"], dir.path(), "c2.json", 1);
}

#[test]
fn thread_count_does_not_change_output() {
    let a = hardy(&["--threads", "1", "sweep", "--n", "3,30,300"]);
    let b = hardy(&["sweep", "--n", "3,30,300", "--threads", "2"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(hardy(&["--threads", "0", "sweep", "--n", "3"]).status.code(), Some(2));
}
