use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn examples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/examples")
}

fn example(name: &str) -> String {
    examples_dir().join(format!("{name}.json")).display().to_string()
}

fn chancert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chancert"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a command and returns its exit code and parsed report.
fn report(args: &[&str]) -> (i32, Value) {
    let out = chancert(args);
    let text = String::from_utf8(out.stdout).unwrap();
    let value = serde_json::from_str(&text).unwrap_or_else(|e| {
        panic!(
            "{args:?}: {e}\nstdout: {text}\nstderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    });
    (out.status.code().unwrap(), value)
}

fn num(v: &Value, path: &str) -> f64 {
    v.pointer(path)
        .and_then(Value::as_f64)
        .unwrap_or_else(|| panic!("missing {path} in {v}"))
}

#[test]
fn check_jm_xz_is_incompatible_with_witness() {
    let (code, r) = report(&[
        "check-jm",
        &example("xz-family"),
        "--witness",
        &example("pauli-xz-witness"),
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "incompatible");
    assert!(r["results"]["witness"].is_object());
    assert!(num(&r, "/results/witnessValue") > num(&r, "/results/witness/bound") + 1e-3);
    assert_eq!(num(&r, "/results/witnessCheck/value"), 4.0);
    assert!((num(&r, "/results/witnessCheck/jointlyMeasurableMaximum") - 2.0 * SQRT_2).abs() < 1e-4);
    assert_eq!(r["results"]["witnessCheck"]["violated"], true);
}

#[test]
fn check_jm_single_povm_is_compatible() {
    let (code, r) = report(&["check-jm", &example("single-povm")]);
    assert_eq!(code, 1);
    assert_eq!(r["verdict"], "jointly-measurable");
    assert!(num(&r, "/results/certificateResidual") < 1e-7);
}

#[test]
fn check_jm_specker_structure() {
    let (_, r) = report(&["check-jm", &example("specker-triple"), "--structure", "0.65"]);
    assert_eq!(
        r["results"]["structure"]["maximalCompatibleSubsets"],
        serde_json::json!([[1, 2], [1, 3], [2, 3]])
    );
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\"dim\": 2,\n \"povms\": [[}").unwrap();
    let out = chancert(&["check-jm", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn invalid_family_and_missing_file_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("notpovm.json");
    fs::write(&path, r#"{"dim":1,"povms":[[[[[0.5,0.0]]]]]}"#).unwrap();
    assert_eq!(chancert(&["check-jm", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(
        chancert(&["check-jm", "/nonexistent/family.json"]).status.code(),
        Some(2)
    );
    assert_eq!(chancert(&["weight"]).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let out = chancert(&["--tol", "1e-15", "check-jm", &example("xz-family")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("solver"));
}

#[test]
fn weights() {
    let (code, r) = report(&["weight", &example("single-povm")]);
    assert_eq!((code, r["verdict"].as_str()), (1, Some("jointly-measurable")));
    assert!(num(&r, "/results/weight").abs() < 1e-6);

    // A sharp incompatible pair admits no jointly measurable component under
    // its rank-one projectors, so its weight is 1.
    let (code, r) = report(&["weight", &example("xz-family")]);
    assert_eq!(code, 0);
    assert!((num(&r, "/results/weight") - 1.0).abs() < 1e-6);

    let (code, r) = report(&["weight", &example("chsh-counterexample"), "--kind", "steerable"]);
    assert_eq!((code, r["verdict"].as_str()), (0, Some("steerable")));
    assert!(num(&r, "/results/weight") > 1e-3);
    let chsh = num(&r, "/results/chshBestResponse");
    assert!((chsh - 1.6971).abs() < 5e-4 && chsh <= 2.0);
}

#[test]
fn channel_thresholds() {
    let (code, r) = report(&["channel", &example("eb-threshold"), "--test", "threshold"]);
    assert_eq!(code, 0);
    assert!((num(&r, "/results/threshold") - 1.0 / 3.0).abs() < 1e-5);
    let (_, r) = report(&[
        "--jobs",
        "3",
        "channel",
        &example("xz-threshold"),
        "--test",
        "threshold",
    ]);
    assert!((num(&r, "/results/threshold") - FRAC_1_SQRT_2).abs() < 1e-5);
    assert_eq!(num(&r, "/results/pointsPerRound"), 3.0);
}

#[test]
fn channel_eb_and_induce() {
    let (code, r) = report(&["channel", &example("depolarizing-half"), "--test", "eb"]);
    assert_eq!((code, r["verdict"].as_str()), (0, Some("not-entanglement-breaking")));
    assert!((num(&r, "/results/pptMargin") + 0.25).abs() < 1e-12);

    let (code, r) = report(&[
        "channel",
        &example("identity-channel"),
        "--test",
        "induce",
        "--device",
        &example("xz-family"),
    ]);
    assert_eq!(code, 0);
    let family: Value = serde_json::from_str(&fs::read_to_string(example("xz-family")).unwrap()).unwrap();
    assert_eq!(r["results"]["induced"], family);

    let out = chancert(&["channel", &example("identity-channel"), "--test", "induce"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bb84_game_commands() {
    let target = 0.5 + 1.0 / (2.0 * SQRT_2);
    let (_, r) = report(&["game", &example("bb84-game"), "--bound"]);
    assert!((num(&r, "/results/bound") - 0.85355).abs() < 1e-5);
    assert!((num(&r, "/results/bound") - target).abs() < 1e-12);

    let (code, r) = report(&["game", &example("bb84-game"), "--play", &example("bb84-strategy")]);
    assert_eq!((code, r["verdict"].as_str()), (0, Some("within-bound")));
    assert!((num(&r, "/results/value") - target).abs() < 1e-9);

    let (_, r) = report(&["game", &example("bb84-game"), "--uncertainty"]);
    assert!((num(&r, "/results/uncertaintyBound") - 1.70711).abs() < 1e-5);
    let (code, r) = report(&[
        "game",
        &example("bb84-game"),
        "--uncertainty",
        &example("broadcast-channel"),
    ]);
    assert_eq!((code, r["verdict"].as_str()), (0, Some("holds")));
    assert!((num(&r, "/results/uncertainty/sum") - (1.0 + FRAC_1_SQRT_2)).abs() < 1e-6);

    assert_eq!(chancert(&["game", &example("bb84-game")]).status.code(), Some(2));
}

#[test]
fn b92_commands() {
    let (psi1, psi2) = (example("b92-psi1"), example("b92-psi2"));
    let (code, r) = report(&[
        "b92",
        "--psi1",
        &psi1,
        "--psi2",
        &psi2,
        "--family",
        &example("b92-canonical-family"),
    ]);
    assert_eq!((code, r["verdict"].as_str()), (0, Some("certified")));
    assert_eq!(r["results"]["report"]["jointlyMeasurable"], false);

    let (code, r) = report(&["b92", "--psi1", "[1, 0]", "--psi2", &psi2, "--attack"]);
    assert_eq!((code, r["verdict"].as_str()), (1, Some("partial-only")));
    let s = (std::f64::consts::PI / 4.0).cos();
    assert!((num(&r, "/results/attackSuccess") - (1.0 - s)).abs() < 1e-9);
    assert!((num(&r, "/results/requiredSuccess") - (1.0 - s * s)).abs() < 1e-9);
    for p in r["results"]["report"]["success"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - (1.0 - s)).abs() < 1e-9);
    }
    assert_eq!(r["results"]["inducedJointlyMeasurable"], true);

    let out = chancert(&["b92", "--psi1", "[1, 0]", "--psi2", "[0, 1]", "--attack"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reports_are_byte_identical() {
    let cases: [&[&str]; 3] = [
        &["check-jm", &example("specker-triple"), "--structure", "0.65"],
        &["weight", &example("chsh-counterexample"), "--kind", "steerable"],
        &["--jobs", "4", "monte-carlo", "busch", "--trials", "40"],
    ];
    for args in cases {
        let a = chancert(args);
        let b = chancert(args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert!(!a.stdout.is_empty());
    }
    // Thread count changes only the command echo.
    let (_, one) = report(&["--jobs", "1", "monte-carlo", "equivalence", "--trials", "30"]);
    let (_, four) = report(&["--jobs", "4", "monte-carlo", "equivalence", "--trials", "30"]);
    assert_eq!(one["results"], four["results"]);
    assert_eq!(one["inputDigest"], four["inputDigest"]);
}

#[test]
fn report_fields_and_timing() {
    let (_, r) = report(&["--tol", "1e-6", "check-jm", &example("xz-family")]);
    let mut keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["command", "inputDigest", "results", "tolerances", "verdict"]);
    assert_eq!(r["command"][0], "--tol");
    assert_eq!(num(&r, "/tolerances/acceptable"), 1e-6);
    assert_eq!(r["inputDigest"].as_str().unwrap().len(), 64);
    let (_, timed) = report(&["--timing", "check-jm", &example("xz-family")]);
    assert!(num(&timed, "/wallTimeSeconds") >= 0.0);
    assert_eq!(timed["inputDigest"], r["inputDigest"]);
}

#[test]
fn dump_sdp_writes_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problems.json");
    let out = chancert(&[
        "--jobs",
        "4",
        "--dump-sdp",
        path.to_str().unwrap(),
        "check-jm",
        &example("xz-family"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let problems: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let problems = problems.as_array().unwrap();
    assert!(!problems.is_empty());
    assert!(problems[0]["constraints"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn monte_carlo_suites_pass() {
    for suite in [
        "werner",
        "busch",
        "cndo",
        "bb84",
        "uncertainty",
        "equivalence",
        "simulators",
        "solver",
    ] {
        let (code, r) = report(&["--jobs", "4", "monte-carlo", suite, "--trials", "5"]);
        assert_eq!(
            (code, r["verdict"].as_str()),
            (0, Some("pass")),
            "{suite}: {}",
            r["results"]
        );
    }
}

#[test]
fn shipped_examples_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = chancert(&["example", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut generated: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    let mut shipped: Vec<_> = fs::read_dir(examples_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    generated.sort();
    shipped.sort();
    assert_eq!(generated, shipped);
    for name in generated {
        assert_eq!(
            fs::read(dir.path().join(&name)).unwrap(),
            fs::read(examples_dir().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}
