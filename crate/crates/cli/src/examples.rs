use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use chancert::channels::{depolarizing, Channel};
use chancert::incompat::pauli_pair_witness;
use chancert::qkd::{b92_canonical_family, bb84_game, bb84_optimal_strategy};
use chancert::qmat::{HermOp, MeasurementFamily, Povm, PureState};
use chancert::steering::chsh_counterexample;
use clap::Args;
use serde_json::Value;

use crate::commands::{NamedChannel, ThresholdProperty, ThresholdSpec};
use crate::error::{CliError, CliResult};

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("target").required(true))]
pub struct ExampleArgs {
    /// Print one example input to stdout.
    #[arg(group = "target")]
    pub name: Option<String>,
    /// Write every example input as NAME.json into DIR.
    #[arg(long, value_name = "DIR", group = "target")]
    pub out: Option<PathBuf>,
    /// List the available names.
    #[arg(long, group = "target")]
    pub list: bool,
}

fn qb(r: [f64; 3]) -> Povm {
    Povm::qubit_binary(r).expect("unit Bloch vector")
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn b92_states() -> (PureState, PureState) {
    let t = PI / 8.0;
    (
        PureState::from_real(&[1.0, 0.0]).expect("normalized"),
        PureState::from_real(&[(2.0 * t).cos(), (2.0 * t).sin()]).expect("normalized"),
    )
}

fn threshold(property: ThresholdProperty, device: Option<MeasurementFamily>) -> Value {
    to_value(&ThresholdSpec {
        channel: NamedChannel::Depolarizing,
        property,
        device,
        resolution: 1e-7,
    })
}

/// Every example input, by name.
pub fn all() -> chancert::Result<Vec<(&'static str, Value)>> {
    let x = qb([1.0, 0.0, 0.0]);
    let y = qb([0.0, 1.0, 0.0]);
    let z = qb([0.0, 0.0, 1.0]);
    let xz = MeasurementFamily::new(vec![x.clone(), z.clone()])?;
    let specker = MeasurementFamily::new(vec![x, y, z.clone()])?;
    let (psi1, psi2) = b92_states();
    let bb84 = bb84_optimal_strategy(1)?;
    Ok(vec![
        ("xz-family", to_value(&xz)),
        ("single-povm", to_value(&MeasurementFamily::new(vec![z])?)),
        ("specker-triple", to_value(&specker)),
        (
            "pauli-xz-witness",
            to_value(&pauli_pair_witness(HermOp::pauli_x(), HermOp::pauli_z())),
        ),
        ("chsh-counterexample", to_value(&chsh_counterexample())),
        ("depolarizing-half", to_value(&depolarizing(0.5)?)),
        ("identity-channel", to_value(&Channel::identity(2))),
        ("eb-threshold", threshold(ThresholdProperty::EntanglementBreaking, None)),
        (
            "xz-threshold",
            threshold(ThresholdProperty::JointlyMeasurable, Some(xz)),
        ),
        (
            "specker-pair-threshold",
            threshold(ThresholdProperty::JointlyMeasurable, Some(specker.subfamily(&[0, 1])?)),
        ),
        (
            "specker-threshold",
            threshold(ThresholdProperty::JointlyMeasurable, Some(specker)),
        ),
        ("bb84-game", to_value(&bb84_game(1)?)),
        ("bb84-strategy", to_value(&bb84)),
        ("broadcast-channel", to_value(&bb84.channel)),
        ("b92-psi1", to_value(&psi1)),
        ("b92-psi2", to_value(&psi2)),
        ("b92-canonical-family", to_value(&b92_canonical_family(&psi1, &psi2)?)),
    ])
}

pub fn run(args: &ExampleArgs) -> CliResult<()> {
    let examples = all()?;
    if args.list {
        for (name, _) in &examples {
            println!("{name}");
        }
        return Ok(());
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })?;
        for (name, value) in &examples {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, pretty(value)).map_err(|source| CliError::Io { path, source })?;
        }
        return Ok(());
    }
    let name = args.name.as_deref().unwrap_or_default();
    let (_, value) = examples
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::Usage(format!("unknown example {name:?}; try --list")))?;
    print!("{}", pretty(value));
    Ok(())
}

pub fn pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
