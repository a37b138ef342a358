mod common;

use chancert::incompat::{
    busch_pair_compatible, cndo_apply, incompatible_weight, is_jointly_measurable, jm_inequality_value, jm_margin,
    CndoSpec,
};
use chancert::qmat::{HermOp, MeasurementFamily, Povm};
use chancert::random;
use chancert::sdp::Tolerances;
use proptest::prelude::*;
use rand::Rng;

/// Jointly measurable family obtained by post-processing a random parent.
fn compatible_family<R: Rng>(settings: usize, outcomes: usize, rng: &mut R) -> MeasurementFamily {
    let parent = random::povm(2, rng.random_range(2..=4), rng);
    let povms = (0..settings)
        .map(|_| {
            let maps: Vec<Vec<f64>> = parent
                .effects()
                .iter()
                .map(|_| random::simplex(outcomes, rng))
                .collect();
            let effects = (0..outcomes)
                .map(|b| {
                    parent
                        .effects()
                        .iter()
                        .zip(&maps)
                        .fold(HermOp::zeros(2), |acc, (g, p)| &acc + &(g * p[b]))
                })
                .collect();
            Povm::new(effects).unwrap()
        })
        .collect();
    MeasurementFamily::new(povms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn busch_agreement(
        a in prop::array::uniform3(-1.0f64..1.0),
        b in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let clip = |v: [f64; 3]| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1.0 { v.map(|x| x / n) } else { v }
        };
        let (a, b) = (clip(a), clip(b));
        let value = chancert::incompat::busch_value(a, b);
        prop_assume!((value - 2.0).abs() >= 1e-4);
        let fam = MeasurementFamily::new(vec![Povm::qubit_binary(a).unwrap(), Povm::qubit_binary(b).unwrap()]).unwrap();
        let sdp = is_jointly_measurable(&fam, &Tolerances::default()).unwrap().jointly_measurable;
        prop_assert_eq!(sdp, busch_pair_compatible(a, b).unwrap());
    }
}

#[test]
fn zero_weight_iff_compatible() {
    let tol = Tolerances::default();
    for i in 0..60u64 {
        let mut rng = random::rng(30_000 + i);
        let eta = rng.random_range(0.4..1.0);
        let fam = MeasurementFamily::new(vec![
            random::projective_qubit(&mut rng),
            random::projective_qubit(&mut rng),
        ])
        .unwrap()
        .depolarized(eta)
        .unwrap();
        let margin = jm_margin(&fam, &tol).unwrap();
        if margin.abs() < 1e-5 {
            continue;
        }
        let w = incompatible_weight(&fam, &tol).unwrap().weight;
        assert_eq!(w <= 1e-6, margin >= 0.0, "instance {i}: weight {w}, margin {margin}");
    }
}

#[test]
fn weight_monotone_under_cndo() {
    let tol = Tolerances::default();
    for i in 0..100u64 {
        let mut rng = random::rng(31_000 + i);
        let fam = random::family(2, &[2, 2], &mut rng);
        let sharp = MeasurementFamily::new(vec![
            random::projective_qubit(&mut rng),
            random::projective_qubit(&mut rng),
        ])
        .unwrap()
        .depolarized(rng.random_range(0.6..1.0))
        .unwrap();
        for f in [fam, sharp] {
            let spec = random::cndo(&mut rng);
            let before = incompatible_weight(&f, &tol).unwrap().weight;
            let after = incompatible_weight(&cndo_apply(&spec, &f).unwrap(), &tol)
                .unwrap()
                .weight;
            assert!(after <= before + 1e-6, "instance {i}: {before} -> {after}");
        }
    }
}

#[test]
fn cndo_preserves_compatibility() {
    let tol = Tolerances::default();
    for i in 0..50u64 {
        let mut rng = random::rng(32_000 + i);
        let fam = compatible_family(2, 2, &mut rng);
        let spec = random::cndo(&mut rng);
        let out = cndo_apply(&spec, &fam).unwrap();
        assert!(
            is_jointly_measurable(&out, &tol).unwrap().jointly_measurable,
            "instance {i}"
        );
    }
}

#[test]
fn identity_and_discard_cndo() {
    let tol = Tolerances::default();
    let mut rng = random::rng(33);
    let square = random::family(2, &[3, 3], &mut rng);
    let id = CndoSpec::identity(2, &[3, 3]).unwrap();
    assert!(cndo_apply(&id, &square).unwrap().max_abs_diff(&square) < 1e-12);
    // Ragged families come back padded with zero effects.
    let fam = random::family(2, &[2, 3], &mut rng);
    let padded = cndo_apply(&CndoSpec::identity(2, &[2, 3]).unwrap(), &fam).unwrap();
    assert_eq!(padded.outcome_counts(), vec![3, 3]);
    assert!(padded.effect(0, 2).max_abs_diff(&HermOp::zeros(2)) < 1e-15);

    // Any family can be converted into any jointly measurable one.
    let target = compatible_family(2, 2, &mut rng);
    let cert = is_jointly_measurable(&target, &tol).unwrap().certificate.unwrap();
    let spec = CndoSpec::discard_and_remeasure(&cert, &[2, 2], 2, &[2, 3]).unwrap();
    let out = cndo_apply(&spec, &fam).unwrap();
    assert!(out.max_abs_diff(&target) < 1e-6);
}

#[test]
fn witnesses_separate() {
    let tol = Tolerances::default();
    let mut violations = Vec::new();
    for i in 0..60u64 {
        let mut rng = random::rng(34_000 + i);
        let k = rng.random_range(2..=3);
        let fam = MeasurementFamily::new((0..k).map(|_| random::projective_qubit(&mut rng)).collect()).unwrap();
        let rep = is_jointly_measurable(&fam, &tol).unwrap();
        if rep.jointly_measurable {
            continue;
        }
        let w = rep.witness.unwrap();
        let value = rep.witness_value.unwrap();
        assert!(
            value - w.bound >= 1e-6,
            "instance {i}: value {value}, bound {}",
            w.bound
        );
        violations.push(value - w.bound);
        for j in 0..5 {
            let mut rng = random::rng(35_000 + 10 * i + j);
            let jm = compatible_family(k, 2, &mut rng);
            assert!(jm_inequality_value(&jm, &w.operators).unwrap() <= w.bound + 1e-7);
        }
    }
    assert!(violations.len() >= 30);
}

#[test]
fn unitary_invariance() {
    let tol = Tolerances::default();
    for i in 0..40u64 {
        let mut rng = random::rng(36_000 + i);
        let eta = rng.random_range(0.5..1.0);
        let fam = MeasurementFamily::new(vec![
            random::projective_qubit(&mut rng),
            random::projective_qubit(&mut rng),
        ])
        .unwrap()
        .depolarized(eta)
        .unwrap();
        let u = random::unitary(2, &mut rng);
        let rotated = fam.map_effects(|e| e.conjugate_by(&u)).unwrap();
        let (m1, m2) = (jm_margin(&fam, &tol).unwrap(), jm_margin(&rotated, &tol).unwrap());
        assert!((m1 - m2).abs() < 1e-6, "instance {i}: {m1} vs {m2}");
    }
}
