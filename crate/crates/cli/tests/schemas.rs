use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use jsonschema::{Registry, Validator};
use serde_json::Value;

const BASE: &str = "file:///schemas/";

fn docs(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(sub)
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn schema_files() -> Vec<(String, Value)> {
    let mut out: Vec<(String, Value)> = fs::read_dir(docs("schemas"))
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), read(&path))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn validators() -> Vec<(String, Validator)> {
    let files = schema_files();
    let registry = Registry::new()
        .extend(files.iter().map(|(name, v)| (format!("{BASE}{name}"), v.clone())))
        .unwrap()
        .prepare()
        .unwrap();
    files
        .iter()
        .map(|(name, v)| {
            let validator = jsonschema::options()
                .with_base_uri(BASE)
                .with_registry(&registry)
                .build(v)
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            (name.clone(), validator)
        })
        .collect()
}

fn check(validators: &[(String, Validator)], schema: &str, instance: &Value, what: &str) {
    let (_, v) = validators
        .iter()
        .find(|(n, _)| n == &format!("{schema}.schema.json"))
        .unwrap_or_else(|| panic!("no schema {schema}"));
    let errors: Vec<String> = v.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{what} against {schema}: {errors:?}");
}

#[test]
fn shipped_examples_conform() {
    let validators = validators();
    let schema_for = |name: &str| match name {
        n if n.ends_with("-family") || n == "single-povm" || n == "specker-triple" => "measurement-family",
        n if n.ends_with("-threshold") => "threshold",
        n if n.ends_with("-witness") => "witness",
        n if n.starts_with("b92-psi") => "pure-state",
        "chsh-counterexample" => "assemblage",
        "depolarizing-half" | "identity-channel" => "channel",
        "bb84-game" => "game",
        "bb84-strategy" => "strategy",
        "broadcast-channel" => "strategy-channel",
        other => panic!("no schema assigned to example {other}"),
    };
    for entry in fs::read_dir(docs("examples")).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        check(&validators, schema_for(&stem), &read(&path), &stem);
    }
}

#[test]
fn reports_conform() {
    let validators = validators();
    let ex = |n: &str| docs("examples").join(format!("{n}.json")).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["check-jm".into(), ex("xz-family")],
        vec![
            "--timing".into(),
            "weight".into(),
            ex("chsh-counterexample"),
            "--kind".into(),
            "steerable".into(),
        ],
        vec!["game".into(), ex("bb84-game"), "--bound".into()],
        vec![
            "b92".into(),
            "--psi1".into(),
            "[1,0]".into(),
            "--psi2".into(),
            ex("b92-psi2"),
            "--attack".into(),
        ],
    ];
    for args in runs {
        let out = Command::new(env!("CARGO_BIN_EXE_chancert"))
            .args(&args)
            .output()
            .unwrap();
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        check(&validators, "report", &report, &args.join(" "));
    }
}

#[test]
fn schemas_reject_malformed_inputs() {
    let validators = validators();
    let bad_family: Value = serde_json::json!({ "dim": 2, "povms": [[{ "dim": 2, "entries": [[[1.0]]] }]] });
    let (_, v) = validators
        .iter()
        .find(|(n, _)| n == "measurement-family.schema.json")
        .unwrap();
    assert!(!v.is_valid(&bad_family));
    let (_, v) = validators.iter().find(|(n, _)| n == "threshold.schema.json").unwrap();
    assert!(!v.is_valid(&serde_json::json!({ "channel": "amplitude-damping", "property": "entanglement-breaking" })));
}
