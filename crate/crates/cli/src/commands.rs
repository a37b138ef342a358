use std::path::PathBuf;

use chancert::channels::{
    depolarizing, induced_measurements, is_entanglement_breaking, ppt_margin, Channel, EbVerdict,
};
use chancert::incompat::{
    incompatible_weight, is_jointly_measurable, jm_inequality_value, jm_structure, max_jm_value, Witness,
};
use chancert::qkd::{
    b92_certify, b92_usd_attack, check_uncertainty, game_params, game_value, theorem4_bound, uncertainty_bound,
    B92Verdict, GameStrategy, MonogamyGame, StrategyChannel,
};
use chancert::qmat::{MeasurementFamily, PureState};
use chancert::sdp::{bisect, multisect, Tolerances};
use chancert::steering::{chsh_best_response, is_unsteerable, steerable_weight, Assemblage};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::report::{Inputs, Outcome, Verdict};

pub struct Ctx {
    pub tol: Tolerances,
    /// Points evaluated per bisection round.
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct CheckJmArgs {
    /// Measurement family JSON.
    pub file: PathBuf,
    /// Also evaluate this witness `{operators, bound}` and maximize it over jointly measurable families.
    #[arg(long, value_name = "FILE")]
    pub witness: Option<PathBuf>,
    /// Also list the maximal jointly measurable subsets after depolarizing every POVM by ETA.
    #[arg(long, value_name = "ETA")]
    pub structure: Option<f64>,
}

pub fn check_jm(args: &CheckJmArgs, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    let fam: MeasurementFamily = inputs.parse_file(&args.file, "measurement family")?;
    let rep = is_jointly_measurable(&fam, &ctx.tol)?;
    let mut results = json!({
        "jointlyMeasurable": rep.jointly_measurable,
        "margin": rep.margin,
        "certificate": rep.certificate,
        "certificateResidual": rep.certificate.as_ref().map(|c| c.residual(&fam)),
        "witness": rep.witness,
        "witnessValue": rep.witness_value,
    });
    if let Some(path) = &args.witness {
        let w: Witness = inputs.parse_file(path, "witness")?;
        let value = jm_inequality_value(&fam, &w.operators)?;
        let max = max_jm_value(&w.operators, fam.dim(), &ctx.tol)?;
        results["witnessCheck"] = json!({
            "value": value,
            "bound": w.bound,
            "violated": value > w.bound + ctx.tol.acceptable,
            "jointlyMeasurableMaximum": max.value,
            "dualBound": max.dual_bound,
            "dualCertificate": max.certificate,
        });
    }
    if let Some(eta) = args.structure {
        let subsets = jm_structure(fam.povms(), eta, &ctx.tol)?;
        let one_based: Vec<Vec<usize>> = subsets.iter().map(|s| s.iter().map(|i| i + 1).collect()).collect();
        results["structure"] = json!({ "eta": eta, "maximalCompatibleSubsets": one_based });
    }
    Ok(Outcome {
        verdict: Verdict::either(!rep.jointly_measurable, "incompatible", "jointly-measurable"),
        results,
    })
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum WeightKind {
    Incompatible,
    Steerable,
}

#[derive(Args, Debug)]
pub struct WeightArgs {
    /// Measurement family JSON (incompatible) or assemblage JSON (steerable).
    pub file: PathBuf,
    #[arg(long, value_enum, default_value = "incompatible")]
    pub kind: WeightKind,
}

/// Weights below this count as zero in the verdict.
const WEIGHT_FLOOR: f64 = 1e-6;

pub fn weight(args: &WeightArgs, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    match args.kind {
        WeightKind::Incompatible => {
            let fam: MeasurementFamily = inputs.parse_file(&args.file, "measurement family")?;
            let w = incompatible_weight(&fam, &ctx.tol)?;
            Ok(Outcome {
                verdict: Verdict::either(w.weight > WEIGHT_FLOOR, "incompatible", "jointly-measurable"),
                results: json!({ "kind": "incompatible", "weight": w.weight, "freeWeight": w.free_weight }),
            })
        }
        WeightKind::Steerable => {
            let a: Assemblage = inputs.parse_file(&args.file, "assemblage")?;
            let w = steerable_weight(&a, &ctx.tol)?;
            let rep = is_unsteerable(&a, &ctx.tol)?;
            let chsh = if a.outcome_counts() == [2, 2] {
                Some(chsh_best_response(&a)?)
            } else {
                None
            };
            Ok(Outcome {
                verdict: Verdict::either(!rep.unsteerable, "steerable", "unsteerable"),
                results: json!({
                    "kind": "steerable",
                    "weight": w.weight,
                    "freeWeight": w.free_weight,
                    "unsteerable": rep.unsteerable,
                    "margin": rep.margin,
                    "witness": rep.witness,
                    "witnessValue": rep.witness_value,
                    "chshBestResponse": chsh,
                    "chshLocalBound": chsh.map(|_| 2.0),
                }),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ChannelTest {
    /// PPT test on the Choi operator.
    Eb,
    /// Bisection over a named channel family.
    Threshold,
    /// Measurements induced by a device family (requires --device).
    Induce,
}

#[derive(Args, Debug)]
pub struct ChannelArgs {
    /// Channel JSON, or a threshold specification for `--test threshold`.
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub test: ChannelTest,
    /// Device measurement family for `--test induce`.
    #[arg(long, value_name = "FILE")]
    pub device: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedChannel {
    Depolarizing,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdProperty {
    EntanglementBreaking,
    JointlyMeasurable,
}

/// `{"channel": "depolarizing", "property": ..., "device": family?, "resolution": 1e-7}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ThresholdSpec {
    pub channel: NamedChannel,
    pub property: ThresholdProperty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<MeasurementFamily>,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

fn default_resolution() -> f64 {
    1e-7
}

pub fn channel(args: &ChannelArgs, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    match args.test {
        ChannelTest::Eb => {
            let c: Channel = inputs.parse_file(&args.file, "channel")?;
            let verdict = is_entanglement_breaking(&c);
            let label = match verdict {
                EbVerdict::Yes => "entanglement-breaking",
                EbVerdict::No => "not-entanglement-breaking",
                EbVerdict::Undetermined => "undetermined",
            };
            Ok(Outcome {
                verdict: Verdict::either(verdict == EbVerdict::No, label, label),
                results: json!({
                    "dimIn": c.dim_in(),
                    "dimOut": c.dim_out(),
                    "pptMargin": ppt_margin(&c),
                    "exact": c.dim_in() * c.dim_out() <= 6,
                    "entanglementBreaking": verdict,
                }),
            })
        }
        ChannelTest::Induce => {
            let Some(device) = &args.device else {
                return Err(CliError::Usage("--test induce requires --device FILE".into()));
            };
            let c: Channel = inputs.parse_file(&args.file, "channel")?;
            let fam: MeasurementFamily = inputs.parse_file(device, "device family")?;
            let induced = induced_measurements(&c, &fam)?;
            let jm = is_jointly_measurable(&induced, &ctx.tol)?;
            Ok(Outcome {
                verdict: None,
                results: json!({
                    "induced": induced,
                    "jointlyMeasurable": jm.jointly_measurable,
                    "margin": jm.margin,
                }),
            })
        }
        ChannelTest::Threshold => {
            let spec: ThresholdSpec = inputs.parse_file(&args.file, "threshold specification")?;
            if spec.resolution.is_nan() || spec.resolution <= 0.0 {
                return Err(CliError::Usage("resolution must be positive".into()));
            }
            let NamedChannel::Depolarizing = spec.channel;
            let tol = ctx.tol;
            let pred = |p: f64| -> chancert::Result<bool> {
                let c = depolarizing(p)?;
                match (spec.property, &spec.device) {
                    (ThresholdProperty::EntanglementBreaking, _) => Ok(ppt_margin(&c) >= 0.0),
                    (ThresholdProperty::JointlyMeasurable, Some(fam)) => {
                        Ok(is_jointly_measurable(&induced_measurements(&c, fam)?, &tol)?.jointly_measurable)
                    }
                    (ThresholdProperty::JointlyMeasurable, None) => Err(chancert::Error::InvalidArgument(
                        "the jointly-measurable property needs a device family".into(),
                    )),
                }
            };
            let threshold = if ctx.points > 1 {
                multisect(pred, 0.0, 1.0, spec.resolution, ctx.points)?
            } else {
                bisect(pred, 0.0, 1.0, spec.resolution)?
            };
            Ok(Outcome {
                verdict: None,
                results: json!({
                    "channel": spec.channel,
                    "property": spec.property,
                    "threshold": threshold,
                    "resolution": spec.resolution,
                    "pointsPerRound": ctx.points.max(1),
                }),
            })
        }
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true))]
pub struct GameArgs {
    /// Game JSON `{"d", "bases", "n"}`.
    pub file: PathBuf,
    /// Evaluate the product bound.
    #[arg(long, group = "mode")]
    pub bound: bool,
    /// Play a strategy file `{channel, bob, charlie}` and compare with the bound.
    #[arg(long, value_name = "STRATEGY", group = "mode")]
    pub play: Option<PathBuf>,
    /// Uncertainty bound, checked against a strategy channel when one is given.
    #[arg(long, value_name = "CHANNEL", num_args = 0..=1, group = "mode")]
    pub uncertainty: Option<Option<PathBuf>>,
    /// Event-count factor |Q| in the bound.
    #[arg(long, default_value_t = 1)]
    pub events: usize,
}

pub fn game(args: &GameArgs, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    let g: MonogamyGame = inputs.parse_file(&args.file, "game")?;
    if args.events == 0 {
        return Err(CliError::Usage("--events must be at least 1".into()));
    }
    let shape = json!({ "d": g.d(), "bases": g.num_bases(), "outcomes": g.outcomes(), "n": g.n() });
    if let Some(channel) = &args.uncertainty {
        let bound = uncertainty_bound(&g)?;
        let Some(path) = channel else {
            return Ok(Outcome {
                verdict: None,
                results: json!({ "game": shape, "uncertaintyBound": bound }),
            });
        };
        let c: StrategyChannel = inputs.parse_file(path, "strategy channel")?;
        let rep = check_uncertainty(&g, &c, &ctx.tol)?;
        return Ok(Outcome {
            verdict: Verdict::either(rep.holds, "holds", "violated"),
            results: json!({ "game": shape, "uncertainty": rep }),
        });
    }
    let mut params = game_params(&g)?;
    params.q = args.events;
    let bound = theorem4_bound(&g, &params);
    if let Some(path) = &args.play {
        let s: GameStrategy = inputs.parse_file(path, "strategy")?;
        let value = game_value(&g, &s)?;
        let within = value <= bound + ctx.tol.acceptable;
        return Ok(Outcome {
            verdict: Verdict::either(within, "within-bound", "exceeds-bound"),
            results: json!({ "game": shape, "params": params, "bound": bound, "value": value }),
        });
    }
    Ok(Outcome {
        verdict: None,
        results: json!({ "game": shape, "params": params, "bound": bound }),
    })
}

/// Pure state as `{"dim", "amps"}` or a plain array of real amplitudes.
#[derive(Deserialize)]
#[serde(untagged)]
enum StateArg {
    Full(PureState),
    Real(Vec<f64>),
}

fn parse_state(inputs: &mut Inputs, arg: &str) -> CliResult<PureState> {
    match inputs.parse_arg::<StateArg>(arg, "pure state")? {
        StateArg::Full(s) => Ok(s),
        StateArg::Real(v) => Ok(PureState::from_real(&v)?),
    }
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("mode").required(true))]
pub struct B92Args {
    /// First signal state: inline JSON or a file.
    #[arg(long)]
    pub psi1: String,
    /// Second signal state: inline JSON or a file.
    #[arg(long)]
    pub psi2: String,
    /// Induced measurement family to certify.
    #[arg(long, value_name = "FILE", group = "mode")]
    pub family: Option<PathBuf>,
    /// Build the unambiguous-discrimination attack and certify its induced family.
    #[arg(long, group = "mode")]
    pub attack: bool,
    /// Tolerance on the zero-error and success constraints.
    #[arg(long, default_value_t = 1e-9)]
    pub data_tol: f64,
}

pub fn b92(args: &B92Args, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    let psi1 = parse_state(inputs, &args.psi1)?;
    let psi2 = parse_state(inputs, &args.psi2)?;
    let label = |v: B92Verdict| match v {
        B92Verdict::Certified => Verdict::positive("certified"),
        B92Verdict::PartialOnly => Verdict::negative("partial-only"),
        B92Verdict::Fail => Verdict::negative("fail"),
    };
    if let Some(path) = &args.family {
        let fam: MeasurementFamily = inputs.parse_file(path, "measurement family")?;
        let rep = b92_certify(&fam, &psi1, &psi2, args.data_tol, &ctx.tol)?;
        return Ok(Outcome {
            verdict: label(rep.verdict),
            results: json!({ "report": rep }),
        });
    }
    let attack = b92_usd_attack(&psi1, &psi2)?;
    let rep = b92_certify(&attack.induced, &psi1, &psi2, args.data_tol, &ctx.tol)?;
    let jm = is_jointly_measurable(&attack.induced, &ctx.tol)?;
    let s = psi1.overlap(&psi2).norm();
    Ok(Outcome {
        verdict: label(rep.verdict),
        results: json!({
            "attack": attack,
            "report": rep,
            "attackSuccess": 1.0 - s,
            "requiredSuccess": 1.0 - s * s,
            "inducedJointlyMeasurable": jm.jointly_measurable,
        }),
    })
}
