//! End-to-end runs of the command line.

use std::fs;
use std::path::Path;

use ktrap::trajectory::Trajectory;
use ktrap_cli::run_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(std::iter::once("ktrap").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const ENV: &str =
    "volumes = [3, 2]\n\n[[level]]\ngamma = [0.5, 1.0, 2.0]\n\n[[level]]\ngamma = [1.0, 0.5, 2.0, 0.25, 1.5, 3.0]\n";

fn write_config(dir: &Path, body: &str) -> String {
    fs::write(dir.join("env.toml"), ENV).unwrap();
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn compare_matches_golden_output() {
    let (code, out, _) = run(&[
        "compare",
        "--k",
        "2",
        "--volumes",
        "2,2",
        "--seed",
        "7",
        "--jumps",
        "100000",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out, include_str!("golden/compare_k2_seed7.json"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["no-such-command"]).0, 2);
    assert_eq!(run(&["simulate-mark", "--config", "/nonexistent/exp.toml"]).0, 2);
    let bad = write_config(
        tmp.path(),
        "horizon = -1.0\nreplicas = 1\nseed = 1\nenv_file = \"env.toml\"\n",
    );
    let (code, _, err) = run(&["simulate-mark", "--config", &bad]);
    assert_eq!(code, 2);
    assert!(err.contains("horizon"), "{err}");
    let div = tmp.path().join("div.toml");
    fs::write(&div, "[[level]]\ngamma_formula = { kind = \"power\", param = 1.0 }\n").unwrap();
    assert_eq!(
        run(&["expected-theta", "--env", div.to_str().unwrap(), "--r", "1"]).0,
        1
    );
}

#[test]
fn trajectories_round_trip_and_distance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "horizon = 10.0\nreplicas = 2\nseed = 3\nenv_file = \"env.toml\"\n",
    );
    let out = tmp.path().join("out");
    let (code, _, err) = run(&["simulate-coin", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(out.join("replica-0000.csv")).unwrap();
    let t = Trajectory::from_csv(&text).unwrap();
    assert_eq!(t.horizon(), 10.0);
    assert_eq!(t.to_csv(), text);
    let summary = fs::read_to_string(out.join("summary.ndjson")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    let a = out.join("replica-0000.csv");
    let (code, same, _) = run(&["distance", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&same).unwrap();
    assert_eq!(v["bound"], 0.0);
}

#[test]
fn summary_does_not_depend_on_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "horizon = 20.0\nreplicas = 6\nseed = 11\ntheta_r = 1.0\nenv_file = \"env.toml\"\n",
    );
    let one = run(&["simulate-mark", "--config", &cfg, "--workers", "1"]);
    let four = run(&["simulate-mark", "--config", &cfg, "--workers", "4"]);
    assert_eq!(one.0, 0);
    assert_eq!(one.1, four.1);
    assert_eq!(one.1.lines().count(), 6);
}
