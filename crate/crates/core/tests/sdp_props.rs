mod common;

use chancert::qmat::HermOp;
use chancert::random;
use chancert::sdp::{
    bisect, multisect, solve, verify_infeasibility_certificate, SdpProblem, SdpStatus, Sense, Tolerances,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasible_round_trip(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let p = random::feasible_sdp(&mut rng);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        prop_assert_eq!(sol.status, SdpStatus::Optimal);
        prop_assert!(common::primal_violation(&p, &sol.primal) <= 1e-7);
        for x in &sol.primal {
            prop_assert!(x.min_eigenvalue() >= -1e-7);
        }
        // Weak duality for minimization, up to the reported gap.
        let slack = 1e-7 * (1.0 + sol.primal_objective.abs() + sol.dual_objective.abs());
        prop_assert!(sol.primal_objective >= sol.dual_objective - slack);
        let dual_slack = p.adjoint_apply(&sol.dual);
        let objective_blocks: Vec<HermOp> = (0..p.blocks.len())
            .map(|k| p.objective[k].clone())
            .collect();
        for (c, a) in objective_blocks.iter().zip(&dual_slack) {
            prop_assert!((c - a).min_eigenvalue() >= -1e-6);
        }
    }

    #[test]
    fn infeasible_certificate(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let p = random::infeasible_sdp(&mut rng);
        let sol = solve(&p, &Tolerances::default()).unwrap();
        prop_assert_eq!(sol.status, SdpStatus::Infeasible);
        let (by, lam) = verify_infeasibility_certificate(&p, sol.certificate.as_ref().unwrap());
        prop_assert!(by > 0.0);
        prop_assert!(lam <= 1e-7);
    }
}

#[test]
fn maximization_matches_minimization() {
    let mut rng = random::rng(5);
    let c = random::hermitian(3, &mut rng);
    let build = |sense: Sense, obj: HermOp| {
        let mut p = SdpProblem::new(sense);
        let k = p.add_block(3);
        p.set_objective(k, obj);
        p.add_constraint(vec![(k, HermOp::identity(3))], 1.0);
        p
    };
    let max = solve(&build(Sense::Maximize, c.clone()), &Tolerances::default()).unwrap();
    let min = solve(&build(Sense::Minimize, -c.clone()), &Tolerances::default()).unwrap();
    assert!((max.primal_objective - c.max_eigenvalue()).abs() < 1e-7);
    assert!((max.primal_objective + min.primal_objective).abs() < 1e-7);
}

#[test]
fn unbounded_detected() {
    let mut p = SdpProblem::new(Sense::Maximize);
    let k = p.add_block(2);
    p.set_objective(k, HermOp::identity(2));
    p.add_constraint(vec![(k, HermOp::pauli_z())], 0.0);
    let sol = solve(&p, &Tolerances::default()).unwrap();
    assert_eq!(sol.status, SdpStatus::Unbounded);
}

#[test]
fn bisection_and_multisection_agree() {
    let pred = |x: f64| Ok(x * x <= 0.5);
    let a = bisect(pred, 0.0, 1.0, 1e-9).unwrap();
    let b = multisect(|x| Ok(x * x <= 0.5), 0.0, 1.0, 1e-9, 8).unwrap();
    assert!((a - 0.5f64.sqrt()).abs() < 1e-8);
    assert!((a - b).abs() < 1e-8);
    assert!(bisect(pred, 0.9, 1.0, 1e-9).is_err());
}
