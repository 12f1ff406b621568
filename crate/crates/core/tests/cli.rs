use std::path::PathBuf;
use std::process::{Command, Output};

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchdiff")).args(args).output().expect("spawn")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn certify_exit_codes_follow_verdict() {
    let ok = run(&["certify", "--model", &model("switched_ou.json")]);
    assert_eq!(ok.status.code(), Some(0));
    let v = json(&ok);
    assert_eq!(v["certificate"]["verdict"], "POSITIVE_RECURRENT_CERTIFIED");
    assert_eq!(v["meta"]["tool"], "switchdiff");
    assert_eq!(v["meta"]["config_sha256"].as_str().unwrap().len(), 64);

    let open = run(&["certify", "--model", &model("controlled_scalar_open.json")]);
    assert_eq!(open.status.code(), Some(1));
    assert_eq!(json(&open)["certificate"]["verdict"], "INCONCLUSIVE");
}

#[test]
fn missing_model_is_a_config_error_naming_the_path() {
    let out = run(&["certify", "--model", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/definitely/not/here.json"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["certify"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--model", &model("switched_ou.json"), "--scheme", "rk4"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    // Bernoulli needs dt * M < 0.5
    let coarse = run(&["simulate", "--model", &model("switched_ou.json"), "--scheme", "bernoulli", "--dt", "0.1"]);
    assert_eq!(coarse.status.code(), Some(2));
    // wrong state dimension
    let dim = run(&["simulate", "--model", &model("switched_ou.json"), "--x0", "1,2"]);
    assert_eq!(dim.status.code(), Some(2));
}

#[test]
fn stabilize_without_input_is_an_error() {
    let out = run(&["stabilize", "--model", &model("switched_ou.json")]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["stabilize", "--model", &model("controlled_scalar_open.json")]);
    assert_eq!(out.status.code(), Some(0));
    let g = json(&out)["gain"].as_f64().unwrap();
    assert!(g > 2.0 && g < 3.0, "{g}");
}

#[test]
fn simulate_writes_csv_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["simulate", "--model", &model("switched_ou.json"), "--T", "1", "--seed", "4", "--out", out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# switchdiff"));
    assert_eq!(lines.next().unwrap(), "t,x1,mode");
    assert!(lines.next().unwrap().starts_with("0,1,1"));
    assert!(dir.path().join("jumps.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["meta"]["seed"], 4);

    let stdout = run(&["simulate", "--model", &model("switched_ou.json"), "--T", "1", "--seed", "4"]);
    let body = String::from_utf8(stdout.stdout).unwrap();
    assert_eq!(body, csv);
}

#[test]
fn seeds_change_output_threads_do_not() {
    let base = ["verify", "hitting", "--model", &model("switched_ou.json"), "--x0", "4", "--T", "20", "--paths", "300"];
    let a = run(&[&base[..], &["--seed", "1", "--threads", "1"]].concat());
    let b = run(&[&base[..], &["--seed", "1", "--threads", "4"]].concat());
    let c = run(&[&base[..], &["--seed", "2"]].concat());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let v = json(&a);
    assert!(v["estimate"]["mean"].as_f64().unwrap() > 0.0);
    assert_eq!(v["estimate"]["n_samples"], 300);
}

#[test]
fn stationary_accepts_generator_files() {
    let out = run(&["stationary", "--generator", &model("three_state_generator.json")]);
    assert_eq!(out.status.code(), Some(0));
    let nu: Vec<f64> = serde_json::from_value(json(&out)["nu"].clone()).unwrap();
    for (a, b) in nu.iter().zip([0.25, 0.25, 0.5]) {
        assert!((a - b).abs() < 1e-12);
    }
    let out = run(&["stationary", "--generator", &model("reset_two_generator.json"), "--N", "20", "--sweep", "5,10"]);
    let v = json(&out);
    assert_eq!(v["level"], 20);
    assert_eq!(v["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn occupation_writes_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "verify", "occupation", "--model", &model("switched_ou.json"), "--start", "1", "--start", "30",
        "--T", "10", "--paths", "40", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(dir.path().join("occupation.csv")).unwrap();
    assert!(csv.starts_with("# switchdiff"));
    assert!(dir.path().join("occupation.json").exists());
}
