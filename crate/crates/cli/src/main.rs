mod commands;
mod error;
mod examples;
mod montecarlo;
mod report;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use chancert::sdp::{capture_problems, Tolerances};
use clap::{Parser, Subcommand};

use commands::{B92Args, ChannelArgs, CheckJmArgs, Ctx, GameArgs, WeightArgs};
use error::{CliError, CliResult};
use examples::ExampleArgs;
use montecarlo::MonteCarloArgs;
use report::{Inputs, Outcome, Report};

/// Certify incompatibility, steering and channel properties from JSON inputs.
#[derive(Parser, Debug)]
#[command(name = "chancert", version)]
struct Cli {
    /// Override every solver tolerance.
    #[arg(long, global = true, value_name = "TOL")]
    tol: Option<f64>,
    /// Write every SDP solved by the command to FILE as a JSON array.
    #[arg(long, global = true, value_name = "FILE")]
    dump_sdp: Option<PathBuf>,
    /// Worker threads for independent sub-instances.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,
    /// Include wall time in the report.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide joint measurability of a measurement family.
    CheckJm(CheckJmArgs),
    /// Incompatible or steerable weight.
    Weight(WeightArgs),
    /// Entanglement-breaking test, parameter thresholds, induced measurements.
    Channel(ChannelArgs),
    /// Monogamy-of-entanglement games: bound, play a strategy, uncertainty relation.
    Game(GameArgs),
    /// Certify B92 measurement data or build the unambiguous-discrimination attack.
    B92(B92Args),
    /// Randomized consistency suites.
    MonteCarlo(MonteCarloArgs),
    /// Print or write example input files.
    Example(ExampleArgs),
}

fn tolerances(tol: Option<f64>) -> CliResult<Tolerances> {
    match tol {
        None => Ok(Tolerances::default()),
        Some(t) if t.is_finite() && t > 0.0 => Ok(Tolerances::uniform(t)),
        Some(t) => Err(CliError::Usage(format!("--tol must be positive and finite, got {t}"))),
    }
}

fn dispatch(command: &Command, ctx: &Ctx, inputs: &mut Inputs) -> CliResult<Outcome> {
    match command {
        Command::CheckJm(a) => commands::check_jm(a, ctx, inputs),
        Command::Weight(a) => commands::weight(a, ctx, inputs),
        Command::Channel(a) => commands::channel(a, ctx, inputs),
        Command::Game(a) => commands::game(a, ctx, inputs),
        Command::B92(a) => commands::b92(a, ctx, inputs),
        Command::MonteCarlo(a) => montecarlo::run(a, ctx),
        Command::Example(_) => unreachable!("handled before dispatch"),
    }
}

fn run(cli: &Cli) -> CliResult<u8> {
    if let Command::Example(a) = &cli.command {
        examples::run(a)?;
        return Ok(0);
    }
    let start = Instant::now();
    let tol = tolerances(cli.tol)?;
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    // Problem capture is per thread, so dumping runs everything on one worker.
    let threads = if cli.dump_sdp.is_some() { 1 } else { cli.jobs };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let ctx = Ctx { tol, points: threads };
    let mut inputs = Inputs::default();
    let (outcome, problems) = pool.install(|| capture_problems(|| dispatch(&cli.command, &ctx, &mut inputs)));
    if let Some(path) = &cli.dump_sdp {
        let text = serde_json::to_string_pretty(&problems).expect("problems serialize");
        fs::write(path, text + "\n").map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    let outcome = outcome?;
    let report = Report {
        command: std::env::args().skip(1).collect(),
        input_digest: inputs.digest(),
        verdict: outcome.verdict.as_ref().map(|v| v.label.to_string()),
        results: outcome.results,
        tolerances: tol,
        wall_time_seconds: cli.timing.then(|| start.elapsed().as_secs_f64()),
    };
    let mut out = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    writeln!(out, "{text}").map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })?;
    Ok(match outcome.verdict {
        Some(v) if !v.positive => 1,
        _ => 0,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
