use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iscreen::cli::{run_cli_with, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use iscreen::report::RunReport;
use iscreen::verify::FastPath;
use iscreen::ActiveSetState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_iscreen"));
    c.env("ISCREEN_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// `n x p` Gaussian predictors plus `y = 3 x0 - 2 x3 + noise`, with a header.
fn write_dataset(dir: &Path, n: usize, p: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut s = String::new();
    let names: Vec<String> = (0..p).map(|j| format!("g{j}")).collect();
    s.push_str(&names.join(","));
    s.push_str(",y\n");
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = 3.0 * row[0] - 2.0 * row[3] + 0.5 * e;
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push_str(&format!(",{y}\n"));
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, s).unwrap();
    path
}

fn report(out: &Output) -> RunReport {
    RunReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

#[test]
fn fr_smoke_gives_five_steps() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 60, 20);
    let out = run(&["screen", "--input", data.to_str().unwrap(), "--preset", "fr", "--max-iters", "5"]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r.trajectory.records.len(), 5);
    assert_eq!(r.input.n, 60);
    assert_eq!(r.input.p, 20);
    assert_eq!(r.input.sha256.len(), 64);
    let names: Vec<&str> = r.selected.iter().map(|c| c.name.as_str()).collect();
    assert!(names.contains(&"g0") && names.contains(&"g3"), "{names:?}");
}

#[test]
fn missing_lambda_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 30, 8);
    let out = run(&["screen", "--input", data.to_str().unwrap(), "--preset", "isis"]);
    assert_eq!(code(&out), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--lambda"));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&run(&["screen"])), EXIT_USAGE);
    assert_eq!(code(&run(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&run(&["verify", "--instances", "0"])), EXIT_USAGE);
    assert_eq!(
        code(&run(&["screen", "--input", "x.csv", "--preset", "fr", "--sel", "1"])),
        EXIT_USAGE
    );
    assert_eq!(code(&run(&["screen", "--input", "x.csv", "--scr", "4", "--sel", "1"])), EXIT_USAGE);
    assert_eq!(code(&run(&["--help"])), EXIT_OK);
}

#[test]
fn preset_and_explicit_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 50, 30);
    let path = data.to_str().unwrap();
    let a = run(&["screen", "--input", path, "--preset", "isis", "--lambda", "0.1"]);
    let b = run(&["screen", "--input", path, "--scr", "1", "--sel", "2", "--penalty", "lasso", "--lambda", "0.1"]);
    assert_eq!(code(&a), EXIT_OK);
    assert_eq!(code(&b), EXIT_OK);
    let (ra, rb) = (report(&a), report(&b));
    assert_eq!(ra.trajectory, rb.trajectory);
    assert_eq!(ra.config, rb.config);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "a,b,y\n1,2,3\n4,NaN,6\n7,8,9\n").unwrap();
    let out = run(&["screen", "--input", nan.to_str().unwrap(), "--preset", "fr"]);
    assert_eq!(code(&out), EXIT_DATA);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3, column 2"));

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&run(&["screen", "--input", empty.to_str().unwrap(), "--preset", "fr"])), EXIT_DATA);

    let ok = write_dataset(dir.path(), 10, 4);
    let out = run(&["screen", "--input", ok.to_str().unwrap(), "--response", "zz", "--preset", "fr"]);
    assert_eq!(code(&out), EXIT_DATA);

    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&run(&["screen", "--input", missing.to_str().unwrap(), "--preset", "fr"])), EXIT_DATA);
}

#[test]
fn unusable_design_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let zeros = dir.path().join("zeros.csv");
    std::fs::write(&zeros, "a,b,y\n0,0,1\n0,0,2\n0,0,3\n").unwrap();
    let out = run(&[
        "screen", "--input", zeros.to_str().unwrap(), "--preset", "fr", "--standardize", "off",
    ]);
    assert_eq!(code(&out), EXIT_NUMERICAL);
    // Standardizing a constant column is a data error instead.
    let out = run(&["screen", "--input", zeros.to_str().unwrap(), "--preset", "fr"]);
    assert_eq!(code(&out), EXIT_DATA);
}

#[test]
fn csv_format_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 40, 10);
    let dest = dir.path().join("traj.csv");
    let out = run(&[
        "screen", "--input", data.to_str().unwrap(), "--preset", "fr", "--max-iters", "3", "--format", "csv",
        "--output", dest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&dest).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,model,rss");
    assert_eq!(lines.len(), 4);
}

#[test]
fn crlf_input_gives_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 30, 6);
    let text = std::fs::read_to_string(&data).unwrap();
    let crlf = dir.path().join("crlf.csv");
    std::fs::write(&crlf, text.replace('\n', "\r\n")).unwrap();
    let a = report(&run(&["screen", "--input", data.to_str().unwrap(), "--preset", "fr"]));
    let b = report(&run(&["screen", "--input", crlf.to_str().unwrap(), "--preset", "fr"]));
    assert_eq!(a.trajectory, b.trajectory);
}

fn strip_timing(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn simulate_smoke_and_repeatability() {
    let args = [
        "simulate", "--n", "100", "--p", "200", "--t", "3", "--cov", "identity", "--reps", "10", "--preset", "fr",
        "--max-iters", "10", "--seed", "1",
    ];
    let a = run(&args);
    assert_eq!(code(&a), EXIT_OK, "{}", String::from_utf8_lossy(&a.stderr));
    let v = strip_timing(&a.stdout);
    let rate = v["success_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(v["records"].as_array().unwrap().len(), 10);
    let b = run(&args);
    assert_eq!(v, strip_timing(&b.stdout));
}

#[test]
fn simulate_adversarial_and_bad_cov() {
    let out = run(&[
        "simulate", "--n", "80", "--p", "100", "--t", "4", "--adversarial", "--cov", "cs:0.5", "--reps", "3",
        "--preset", "sis",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["simulate", "--n", "80", "--p", "100", "--cov", "ar1:2", "--reps", "1", "--preset", "fr"]);
    assert_eq!(code(&out), EXIT_USAGE);
    let out = run(&["simulate", "--n", "80", "--p", "100", "--cov", "banded", "--reps", "1", "--preset", "fr"]);
    assert_eq!(code(&out), EXIT_USAGE);
    let out = bin()
        .args(["simulate", "--n", "80", "--p", "100", "--reps", "1", "--preset", "fr"])
        .env("ISCREEN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), EXIT_USAGE);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let dest = dir.path().join("verify.json");
    let out = run(&["verify", "--instances", "50", "--seed", "7", "--output", dest.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("PASS") && !table.contains("FAIL"), "{table}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    for s in v["suites"].as_array().unwrap() {
        assert!(s["max_error"].as_f64().unwrap() <= 1e-8, "{s}");
    }
}

struct FlippedCoefficient;

impl FastPath for FlippedCoefficient {
    fn beta_last(&self, state: &ActiveSetState<'_>, j: usize) -> iscreen::Result<f64> {
        state.beta_hat_last(j).map(|b| -b)
    }
}

#[test]
fn injected_bug_is_caught_and_named() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_cli_with(
        ["iscreen", "verify", "--instances", "5", "--seed", "7"],
        &FlippedCoefficient,
        &mut out,
        &mut err,
    );
    assert_ne!(code, EXIT_OK);
    let table = String::from_utf8(out).unwrap();
    let failing: Vec<&str> = table.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{table}");
    assert!(failing[0].starts_with("joint_coefficient_identity"));
}
