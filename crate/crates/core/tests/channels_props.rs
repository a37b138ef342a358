mod common;

use chancert::channels::{
    from_eb, induced_measurements, is_entanglement_breaking, steered_assemblage_from_choi, Channel, EbDecomposition,
    EbVerdict,
};
use chancert::incompat::jm_margin;
use chancert::qmat::{MeasurementFamily, Povm};
use chancert::random;
use chancert::sdp::Tolerances;
use chancert::steering::lhs_margin;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn apply_adjoint_duality(seed in any::<u64>(), din in 1usize..=3, dout in 1usize..=3) {
        let mut rng = random::rng(seed);
        let c = random::channel(din, dout, rng.random_range(1..=din * dout), &mut rng);
        let rho = random::hermitian(din, &mut rng);
        let e = random::hermitian(dout, &mut rng);
        let lhs = e.inner(&c.apply(&rho).unwrap());
        let rhs = c.adjoint_apply(&e).unwrap().inner(&rho);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn from_eb_is_entanglement_breaking(seed in any::<u64>(), din in 2usize..=3, k in 1usize..=4) {
        let mut rng = random::rng(seed);
        let dout = if din == 3 { 2 } else { rng.random_range(2..=3) };
        let d = EbDecomposition::new(
            random::povm(din, k, &mut rng),
            (0..k).map(|_| random::density(dout, rng.random_range(1..=dout), &mut rng)).collect(),
        ).unwrap();
        let c = from_eb(&d).unwrap();
        prop_assert_eq!(is_entanglement_breaking(&c), EbVerdict::Yes);
        let rho = random::density(din, din, &mut rng);
        prop_assert!(c.apply(&rho).unwrap().max_abs_diff(&d.apply(&rho).unwrap()) < 1e-12);
    }

    #[test]
    fn induced_families_are_valid(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let c = random::channel(2, 3, 3, &mut rng);
        let fam = random::family(3, &[2, 3], &mut rng);
        let induced = induced_measurements(&c, &fam).unwrap();
        // Closure under construction: re-validating every induced POVM succeeds.
        for p in induced.povms() {
            prop_assert!(Povm::new(p.effects().to_vec()).is_ok());
        }
    }
}

/// Boolean agreement of the two hidden-variable programs on random
/// channels and sharp device families, including qutrit inputs.
#[test]
fn induced_compatibility_matches_choi_steering() {
    let tol = Tolerances::default();
    let (mut tested, mut compatible) = (0, 0);
    for i in 0..120u64 {
        let mut rng = random::rng(20_000 + i);
        let (din, dout) = if i % 4 == 3 { (3, 2) } else { (2, 2) };
        let c: Channel = random::channel(din, dout, rng.random_range(1..=din * dout), &mut rng);
        let fam = MeasurementFamily::new((0..2).map(|_| random::projective(dout, &mut rng)).collect()).unwrap();
        let m1 = jm_margin(&induced_measurements(&c, &fam).unwrap(), &tol).unwrap();
        let m2 = lhs_margin(&steered_assemblage_from_choi(&c, &fam).unwrap(), &tol).unwrap();
        if m1.abs() < 1e-5 || m2.abs() < 1e-5 {
            continue;
        }
        tested += 1;
        compatible += usize::from(m1 >= 0.0);
        assert_eq!(m1 >= 0.0, m2 >= 0.0, "instance {i}: margins {m1} and {m2}");
    }
    assert!(tested >= 100, "only {tested} instances away from the boundary");
    assert!(compatible > 0 && compatible < tested);
}

#[test]
fn eb_channels_induce_compatible_families() {
    let tol = Tolerances::default();
    for i in 0..30u64 {
        let mut rng = random::rng(21_000 + i);
        let d = EbDecomposition::new(
            random::povm(2, 3, &mut rng),
            (0..3).map(|_| random::density(2, 1, &mut rng)).collect(),
        )
        .unwrap();
        let c = from_eb(&d).unwrap();
        let fam = MeasurementFamily::new((0..3).map(|_| random::projective_qubit(&mut rng)).collect()).unwrap();
        assert!(jm_margin(&induced_measurements(&c, &fam).unwrap(), &tol).unwrap() >= -tol.acceptable);
    }
}
