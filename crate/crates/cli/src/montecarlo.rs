use std::f64::consts::SQRT_2;

use chancert::channels::{
    depolarizing, from_eb, induced_measurements, is_entanglement_breaking, outcome_table, simulate_both_untrusted,
    simulate_untrusted_alice, steered_assemblage_from_choi, EbVerdict,
};
use chancert::incompat::{
    busch_value, cndo_apply, cndo_convertible_qubit_pairs, incompatible_weight, is_jointly_measurable, jm_margin,
};
use chancert::qkd::{
    bb84_game, bb84_optimal_strategy, check_uncertainty, game_params, game_value, theorem4_bound, uncertainty_bound,
    GameStrategy, StrategyChannel, TwoReceiverChannel,
};
use chancert::qmat::{ConditionalDistribution, HermOp, MeasurementFamily, Povm};
use chancert::random;
use chancert::sdp::{solve, verify_infeasibility_certificate, SdpProblem, SdpStatus};
use clap::{Args, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::commands::Ctx;
use crate::error::{CliError, CliResult};
use crate::report::{Outcome, Verdict};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    /// Depolarized random qubit families at p = 1/2 (projective) and p = 5/12 (POVMs) are jointly measurable.
    Werner,
    /// SDP verdicts on random unbiased qubit pairs agree with the Busch criterion.
    Busch,
    /// Incompatible weight never increases under random CNDOs; convertibility verdicts.
    Cndo,
    /// Random strategies stay below the BB84 bound; the optimal strategy saturates it for n = 1..4.
    Bb84,
    /// Random channels on random ensemble pairs satisfy the uncertainty relation.
    Uncertainty,
    /// Joint measurability of induced families agrees with unsteerability of the Choi assemblage.
    Equivalence,
    /// Scenario simulators reproduce random and PR-box tables with EB channels.
    Simulators,
    /// Random feasible and infeasible SDPs round-trip.
    Solver,
}

#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Number of random instances (suite-specific default).
    #[arg(long)]
    pub trials: Option<u64>,
    /// Base seed; instance i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
}

type Rows<T> = chancert::Result<Vec<T>>;

pub fn run(args: &MonteCarloArgs, ctx: &Ctx) -> CliResult<Outcome> {
    let (default_trials, default_seed) = match args.suite {
        Suite::Werner => (50, 3000),
        Suite::Busch => (500, 4000),
        Suite::Cndo => (100, 7000),
        Suite::Bb84 => (200, 8000),
        Suite::Uncertainty => (20, 9000),
        Suite::Equivalence => (200, 11_000),
        Suite::Simulators => (20, 12_000),
        Suite::Solver => (100, 13_000),
    };
    let trials = args.trials.unwrap_or(default_trials);
    let seed = args.seed.unwrap_or(default_seed);
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let (pass, mut results) = match args.suite {
        Suite::Werner => werner(trials, seed, ctx)?,
        Suite::Busch => busch(trials, seed, ctx)?,
        Suite::Cndo => cndo(trials, seed, ctx)?,
        Suite::Bb84 => bb84(trials, seed)?,
        Suite::Uncertainty => uncertainty(trials, seed, ctx)?,
        Suite::Equivalence => equivalence(trials, seed, ctx)?,
        Suite::Simulators => simulators(trials, seed)?,
        Suite::Solver => solver(trials, seed, ctx)?,
    };
    results["trials"] = json!(trials);
    results["seed"] = json!(seed);
    Ok(Outcome {
        verdict: Verdict::either(pass, "pass", "fail"),
        results,
    })
}

fn rng_for(seed: u64, i: u64) -> impl Rng {
    random::rng(seed.wrapping_add(i))
}

fn werner(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let tol = &ctx.tol;
    let sharp: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let k = rng.random_range(2..=4);
            let fam = MeasurementFamily::new((0..k).map(|_| random::projective_qubit(&mut rng)).collect())?;
            Ok(is_jointly_measurable(&induced_measurements(&depolarizing(0.5)?, &fam)?, tol)?.jointly_measurable)
        })
        .collect::<Rows<_>>()?;
    let general: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed.wrapping_add(500), i);
            let k = rng.random_range(2..=3);
            let counts: Vec<usize> = (0..k).map(|_| rng.random_range(2..=3)).collect();
            let fam = random::family(2, &counts, &mut rng);
            let induced = induced_measurements(&depolarizing(5.0 / 12.0)?, &fam)?;
            Ok(is_jointly_measurable(&induced, tol)?.jointly_measurable)
        })
        .collect::<Rows<_>>()?;
    let a = sharp.iter().filter(|x| **x).count();
    let b = general.iter().filter(|x| **x).count();
    let n = trials as usize;
    Ok((
        a == n && b == n,
        json!({ "projectiveAtHalf": { "jointlyMeasurable": a, "total": n }, "povmAtFiveTwelfths": { "jointlyMeasurable": b, "total": n } }),
    ))
}

fn busch(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let rows: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let a = random::unit_vector3(&mut rng).map(|x| x * rng.random_range(0.5..1.0));
            let b = random::unit_vector3(&mut rng).map(|x| x * rng.random_range(0.5..1.0));
            let oracle = busch_value(a, b);
            if (oracle - 2.0).abs() < 1e-4 {
                return Ok(None);
            }
            let fam = MeasurementFamily::new(vec![Povm::qubit_binary(a)?, Povm::qubit_binary(b)?])?;
            Ok(Some(
                is_jointly_measurable(&fam, &ctx.tol)?.jointly_measurable == (oracle <= 2.0),
            ))
        })
        .collect::<Rows<_>>()?;
    let tested = rows.iter().flatten().count();
    let agree = rows.iter().flatten().filter(|x| **x).count();
    Ok((
        agree == tested,
        json!({ "tested": tested, "agree": agree, "nearBoundarySkipped": trials as usize - tested }),
    ))
}

fn cndo(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let tol = &ctx.tol;
    let rows: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let eta = rng.random_range(0.6..1.0);
            let fam = MeasurementFamily::new(vec![
                random::projective_qubit(&mut rng),
                random::projective_qubit(&mut rng),
            ])?
            .depolarized(eta)?;
            let spec = random::cndo(&mut rng);
            let before = incompatible_weight(&fam, tol)?.weight;
            let after = incompatible_weight(&cndo_apply(&spec, &fam)?, tol)?.weight;
            Ok((before, after - before))
        })
        .collect::<Rows<_>>()?;
    let worst = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let interior = rows.iter().filter(|r| r.0 > 1e-3 && r.0 < 1.0 - 1e-3).count();

    let qb = |r: [f64; 3]| Povm::qubit_binary(r);
    let t: f64 = 0.7;
    let (x, z) = (qb([1.0, 0.0, 0.0])?, qb([0.0, 0.0, 1.0])?);
    let (xr, zr) = (qb([t.cos(), 0.0, -t.sin()])?, qb([t.sin(), 0.0, t.cos()])?);
    let tilted = qb([0.96f64.sqrt(), 0.0, 0.2])?;
    let rotated =
        cndo_convertible_qubit_pairs((&x, &z), (&xr, &zr))? && cndo_convertible_qubit_pairs((&xr, &zr), (&x, &z))?;
    let forward = cndo_convertible_qubit_pairs((&x, &z), (&x, &tilted))?;
    let backward = cndo_convertible_qubit_pairs((&x, &tilted), (&x, &z))?;
    Ok((
        worst <= 1e-6 && rotated && !forward && !backward,
        json!({
            "maxWeightIncrease": worst,
            "interiorInstances": interior,
            "rotatedCopyConvertible": rotated,
            "xzToTilted": forward,
            "tiltedToXz": backward,
        }),
    ))
}

fn bb84(trials: u64, seed: u64) -> CliResult<(bool, serde_json::Value)> {
    let target = 0.5 + 1.0 / (2.0 * SQRT_2);
    let g = bb84_game(1)?;
    let params = game_params(&g)?;
    let bound = theorem4_bound(&g, &params);
    let value = game_value(&g, &bb84_optimal_strategy(1)?)?;
    let excess: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let rank = rng.random_range(1..=8);
            let channel = TwoReceiverChannel::new(random::channel(2, 4, rank, &mut rng), 2, 2)?;
            let bob = random::family(2, &[2, 2], &mut rng);
            let charlie = random::family(2, &[2, 2], &mut rng);
            game_value(&g, &GameStrategy::new(StrategyChannel::Choi(channel), bob, charlie)?).map(|v| v - bound)
        })
        .collect::<Rows<_>>()?;
    let worst = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut rounds = Vec::new();
    let mut saturates = (bound - target).abs() <= 1e-9 && (value - target).abs() <= 1e-9;
    for n in 2..=4 {
        let gn = bb84_game(n)?;
        let bn = theorem4_bound(&gn, &params);
        let vn = game_value(&gn, &bb84_optimal_strategy(n)?)?;
        let expected = target.powi(n as i32);
        saturates &= (bn - expected).abs() <= 1e-9 && (vn - expected).abs() <= 1e-9;
        rounds.push(json!({ "n": n, "bound": bn, "optimalValue": vn }));
    }
    Ok((
        saturates && worst <= 1e-7,
        json!({ "bound": bound, "optimalValue": value, "maxExcess": worst, "rounds": rounds }),
    ))
}

fn uncertainty(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let tol = &ctx.tol;
    let g = bb84_game(1)?;
    let bound = uncertainty_bound(&g)?;
    let sat = check_uncertainty(&g, &bb84_optimal_strategy(1)?.channel, tol)?;
    let rows: Vec<(f64, f64, bool)> = (0..trials)
        .into_par_iter()
        .flat_map_iter(|pair| {
            let mut rng = rng_for(seed, pair);
            let game = random::ensemble_pair(2, &mut rng);
            (0..10u64)
                .map(|k| {
                    let mut rng = rng_for(seed.wrapping_add(100), 10 * pair + k);
                    let rank = rng.random_range(1..=8);
                    let c =
                        StrategyChannel::Choi(TwoReceiverChannel::new(random::channel(2, 4, rank, &mut rng), 2, 2)?);
                    let r = check_uncertainty(&game, &c, tol)?;
                    let differs = game.bases()[0].average().max_abs_diff(&game.bases()[1].average()) > 1e-3;
                    Ok((r.sum - r.bound, r.h_min_bound - r.h_min_sum, differs))
                })
                .collect::<Vec<chancert::Result<_>>>()
        })
        .collect::<Rows<_>>()?;
    let worst = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let worst_h = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let differing = rows.iter().filter(|r| r.2).count() / 10;
    let saturated = (sat.sum - bound).abs() <= 1e-6 && (sat.h_min_sum - sat.h_min_bound).abs() <= 1e-6;
    Ok((
        saturated && worst <= 1e-7 && worst_h <= 1e-7,
        json!({
            "bb84Bound": bound,
            "broadcastSum": sat.sum,
            "channels": rows.len(),
            "pairsWithDifferingAverages": differing,
            "maxExcess": worst,
            "maxMinEntropyDeficit": worst_h,
        }),
    ))
}

fn equivalence(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let tol = &ctx.tol;
    let rows: Vec<Option<(bool, bool)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let rank = rng.random_range(1..=4);
            let c = random::channel(2, 2, rank, &mut rng);
            let k = rng.random_range(2..=3);
            let fam = MeasurementFamily::new((0..k).map(|_| random::projective_qubit(&mut rng)).collect())?;
            let m1 = jm_margin(&induced_measurements(&c, &fam)?, tol)?;
            let m2 = chancert::steering::lhs_margin(&steered_assemblage_from_choi(&c, &fam)?, tol)?;
            if m1.abs() < 1e-5 || m2.abs() < 1e-5 {
                return Ok(None);
            }
            Ok(Some(((m1 >= 0.0) == (m2 >= 0.0), m1 >= 0.0)))
        })
        .collect::<Rows<_>>()?;
    let tested = rows.iter().flatten().count();
    let agree = rows.iter().flatten().filter(|r| r.0).count();
    let compatible = rows.iter().flatten().filter(|r| r.1).count();
    Ok((
        agree == tested,
        json!({ "tested": tested, "agree": agree, "compatible": compatible, "nearBoundarySkipped": trials as usize - tested }),
    ))
}

fn table_error(target: &ConditionalDistribution, got: &ConditionalDistribution) -> f64 {
    let [nx, ny] = target.input_sizes() else {
        return f64::INFINITY;
    };
    let mut worst: f64 = 0.0;
    for x in 0..*nx {
        for y in 0..*ny {
            for b in 0..target.outputs() {
                worst = worst.max((got.prob(b, &[x, y]) - target.prob(b, &[x, y])).abs());
            }
        }
    }
    worst
}

fn simulators(trials: u64, seed: u64) -> CliResult<(bool, serde_json::Value)> {
    let rows: Vec<(f64, bool)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let nx = rng.random_range(2..=3);
            let targets: Vec<HermOp> = (0..nx).map(|_| random::density(2, 2, &mut rng)).collect();
            let eb = simulate_untrusted_alice(&targets)?;
            let mut worst: f64 = 0.0;
            for (x, t) in targets.iter().enumerate() {
                worst = worst.max(eb.apply(&HermOp::basis_projector(nx, x))?.max_abs_diff(t));
            }
            let mut eb_ok = is_entanglement_breaking(&from_eb(&eb)?) == EbVerdict::Yes;
            let table =
                random::conditional_distribution(vec![2, rng.random_range(2..=4)], rng.random_range(2..=3), &mut rng);
            let (c, fam) = simulate_both_untrusted(&table)?;
            worst = worst.max(table_error(&table, &outcome_table(&c, &fam)?));
            eb_ok &= is_entanglement_breaking(&from_eb(&c)?) == EbVerdict::Yes;
            Ok((worst, eb_ok))
        })
        .collect::<Rows<_>>()?;
    // Deterministic b = x·y, the winning behaviour of a PR box.
    let pr = ConditionalDistribution::deterministic(vec![2, 2], 2, |i| i[0] * i[1])?;
    let (c, fam) = simulate_both_untrusted(&pr)?;
    let pr_error = table_error(&pr, &outcome_table(&c, &fam)?);
    let pr_eb = is_entanglement_breaking(&from_eb(&c)?) == EbVerdict::Yes;
    let worst = rows.iter().map(|r| r.0).fold(pr_error, f64::max);
    let eb = pr_eb && rows.iter().all(|r| r.1);
    Ok((
        worst <= 1e-12 && eb,
        json!({ "maxReproductionError": worst, "prBoxError": pr_error, "allEntanglementBreaking": eb }),
    ))
}

fn primal_violation(p: &SdpProblem, x: &[HermOp]) -> f64 {
    p.constraint_values(x)
        .iter()
        .zip(p.rhs())
        .map(|(v, b)| (v - b).abs())
        .fold(0.0, f64::max)
}

fn solver(trials: u64, seed: u64, ctx: &Ctx) -> CliResult<(bool, serde_json::Value)> {
    let tol = &ctx.tol;
    let feasible: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, i);
            let p = random::feasible_sdp(&mut rng);
            let sol = solve(&p, tol)?;
            let min_eig = sol
                .primal
                .iter()
                .map(HermOp::min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            Ok(sol.status == SdpStatus::Optimal
                && primal_violation(&p, &sol.primal) <= 1e-7
                && min_eig >= -1e-7
                && sol.gap <= 1e-7)
        })
        .collect::<Rows<_>>()?;
    let infeasible: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed.wrapping_add(500), i);
            let p = random::infeasible_sdp(&mut rng);
            let sol = solve(&p, tol)?;
            Ok(match (&sol.status, &sol.certificate) {
                (SdpStatus::Infeasible, Some(y)) => {
                    let (by, lam) = verify_infeasibility_certificate(&p, y);
                    by > 0.0 && lam <= 1e-7
                }
                _ => false,
            })
        })
        .collect::<Rows<_>>()?;
    let a = feasible.iter().filter(|x| **x).count();
    let b = infeasible.iter().filter(|x| **x).count();
    let n = trials as usize;
    Ok((
        a == n && b == n,
        json!({ "feasibleRoundTrips": a, "infeasibilityCertificates": b, "total": n }),
    ))
}
