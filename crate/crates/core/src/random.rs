//! Seeded samplers for random states, measurements, channels and instruments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channels::Channel;
use crate::incompat::{CndoSpec, Instrument};
use crate::qkd::MonogamyGame;
use crate::qmat::{
    partial_trace, ConditionalDistribution, Ensemble, HermOp, MeasurementFamily, Povm, PureState, Subsystem, C64,
};
use crate::sdp::{SdpProblem, Sense};

/// Deterministic generator used throughout tests and the CLI.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `rows × cols` matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| C64::new(normal(rng), normal(rng)))
}

/// Haar-random unitary.
pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = ginibre(d, d, rng).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 {
            z / z.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> PureState {
    PureState::normalized(DVector::from_fn(d, |_, _| C64::new(normal(rng), normal(rng)))).expect("nonzero vector")
}

/// Density operator `GG†/tr(GG†)` with `G` of size `d × rank`.
pub fn density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> HermOp {
    let w = psd_from(&ginibre(d, rank, rng));
    let t = w.trace();
    w * (1.0 / t)
}

fn psd_from(g: &DMatrix<C64>) -> HermOp {
    let m = g * g.adjoint();
    let m = (&m + m.adjoint()).map(|z| z * 0.5);
    HermOp::new(m).expect("symmetrized product is Hermitian")
}

/// Random POVM `E_k = S^{-1/2} G_k G_k† S^{-1/2}` with `S = Σ_k G_k G_k†`.
pub fn povm<R: Rng + ?Sized>(d: usize, outcomes: usize, rng: &mut R) -> Povm {
    let raw: Vec<HermOp> = (0..outcomes).map(|_| psd_from(&ginibre(d, d, rng))).collect();
    let s = raw.iter().fold(HermOp::zeros(d), |acc, e| &acc + e);
    let inv = s.map_spectrum(|x| 1.0 / x.sqrt());
    let effects: Vec<HermOp> = raw.iter().map(|e| e.conjugate_by(inv.matrix())).collect();
    // Absorb rounding so the effects sum to the identity exactly.
    let last = effects[..outcomes - 1]
        .iter()
        .fold(HermOp::identity(d), |acc, e| &acc - e);
    let mut effects = effects;
    effects[outcomes - 1] = last;
    Povm::new(effects).expect("normalized random POVM")
}

pub fn unit_vector3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Sharp binary qubit measurement along a uniformly random axis.
pub fn projective_qubit<R: Rng + ?Sized>(rng: &mut R) -> Povm {
    Povm::qubit_binary(unit_vector3(rng)).expect("unit Bloch vector")
}

/// Random projective measurement in `d` dimensions with `d` rank-one outcomes.
pub fn projective<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Povm {
    let u = unitary(d, rng);
    let effects = (0..d)
        .map(|k| {
            let col = u.column(k).into_owned();
            HermOp::new(&col * col.adjoint()).expect("rank-one projector")
        })
        .collect::<Vec<_>>();
    let last = effects[..d - 1].iter().fold(HermOp::identity(d), |acc, e| &acc - e);
    let mut effects = effects;
    effects[d - 1] = last;
    Povm::new(effects).expect("orthonormal basis")
}

pub fn family<R: Rng + ?Sized>(d: usize, outcome_counts: &[usize], rng: &mut R) -> MeasurementFamily {
    MeasurementFamily::new(outcome_counts.iter().map(|&o| povm(d, o, rng)).collect()).expect("common dimension")
}

/// Channel from a random PSD operator `W` by `J = (M^{-1/2} ⊗ I) W (M^{-1/2} ⊗ I)`,
/// `M = tr_B W`. The Choi rank is raised to `⌈d_in/d_out⌉` when smaller, since
/// `M` is singular below that.
pub fn channel<R: Rng + ?Sized>(dim_in: usize, dim_out: usize, rank: usize, rng: &mut R) -> Channel {
    let rank = rank.max(dim_in.div_ceil(dim_out)).min(dim_in * dim_out);
    let w = psd_from(&ginibre(dim_in * dim_out, rank, rng));
    let m = partial_trace(&w, (dim_in, dim_out), Subsystem::A).expect("consistent dims");
    let inv = m.map_spectrum(|x| 1.0 / x.sqrt());
    let lift = inv.matrix().kronecker(&DMatrix::identity(dim_out, dim_out));
    Channel::new(dim_in, dim_out, w.conjugate_by(&lift)).expect("normalized random channel")
}

/// Instrument from grouped random Kraus operators normalized by `(Σ K†K)^{-1/2}`.
pub fn instrument<R: Rng + ?Sized>(
    dim_in: usize,
    dim_out: usize,
    outcomes: usize,
    kraus_per_outcome: usize,
    rng: &mut R,
) -> Instrument {
    let raw: Vec<Vec<DMatrix<C64>>> = (0..outcomes)
        .map(|_| (0..kraus_per_outcome).map(|_| ginibre(dim_out, dim_in, rng)).collect())
        .collect();
    let s = raw
        .iter()
        .flatten()
        .fold(DMatrix::<C64>::zeros(dim_in, dim_in), |acc, k| acc + k.adjoint() * k);
    let s = HermOp::new((&s + s.adjoint()).map(|z| z * 0.5)).expect("Hermitian");
    let inv = s.map_spectrum(|x| 1.0 / x.sqrt());
    let kraus: Vec<Vec<DMatrix<C64>>> = raw
        .iter()
        .map(|ks| ks.iter().map(|k| k * inv.matrix()).collect())
        .collect();
    Instrument::from_kraus(&kraus).expect("normalized random instrument")
}

/// Hermitian part of a Ginibre matrix.
pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> HermOp {
    let g = ginibre(d, d, rng);
    HermOp::new((&g + g.adjoint()).map(|z| z * 0.5)).expect("symmetrized matrix is Hermitian")
}

/// Uniform point of the probability simplex, last entry fixed by normalization.
pub fn simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = (1.0 - head).max(0.0);
    p
}

pub fn conditional_distribution<R: Rng + ?Sized>(
    input_sizes: Vec<usize>,
    outputs: usize,
    rng: &mut R,
) -> ConditionalDistribution {
    let rows: usize = input_sizes.iter().product();
    let probs = (0..rows).flat_map(|_| simplex(outputs, rng)).collect();
    ConditionalDistribution::new(input_sizes, outputs, probs).expect("rows on the simplex")
}

/// Random CNDO acting on qubit families with two binary settings.
pub fn cndo<R: Rng + ?Sized>(rng: &mut R) -> CndoSpec {
    let na = rng.random_range(1..=2);
    let kraus = rng.random_range(1..=2);
    let inst = instrument(2, 2, na, kraus, rng);
    let settings = conditional_distribution(vec![na, 2], 2, rng);
    let outcomes = conditional_distribution(vec![2, na, 2, 2], 2, rng);
    CndoSpec::new(inst, settings, outcomes).expect("consistent shapes")
}

/// Single-round game with two bases of two sub-normalized states each; the
/// basis averages generally differ.
pub fn ensemble_pair<R: Rng + ?Sized>(d: usize, rng: &mut R) -> MonogamyGame {
    let bases = (0..2)
        .map(|_| {
            let p = simplex(2, rng);
            let states = p
                .iter()
                .map(|&px| {
                    let rank = rng.random_range(1..=d);
                    density(d, rank, rng) * px
                })
                .collect();
            Ensemble::new(states).expect("weights on the simplex")
        })
        .collect();
    MonogamyGame::new(bases, 1).expect("matching bases")
}

/// Minimization with a strictly feasible planted point and a positive
/// definite objective, hence a finite optimum.
pub fn feasible_sdp<R: Rng + ?Sized>(rng: &mut R) -> SdpProblem {
    let mut p = SdpProblem::new(Sense::Minimize);
    let nblocks = rng.random_range(1..=2);
    let dims: Vec<usize> = (0..nblocks).map(|_| rng.random_range(1..=4)).collect();
    let x0: Vec<HermOp> = dims.iter().map(|&d| density(d, d, rng) * d as f64).collect();
    for &d in &dims {
        let k = p.add_block(d);
        let c = &density(d, d, rng) + &HermOp::identity(d);
        p.set_objective(k, c);
    }
    let dof: usize = dims.iter().map(|d| d * d).sum();
    let m = rng.random_range(1..=dof);
    for _ in 0..m {
        let terms: Vec<(usize, HermOp)> = dims.iter().enumerate().map(|(k, &d)| (k, hermitian(d, rng))).collect();
        let rhs = terms.iter().map(|(k, a)| a.inner(&x0[*k])).sum();
        p.add_constraint(terms, rhs);
    }
    p
}

/// Problem with a planted Farkas ray `y`: `Σ y_i A_i ⪯ −I` and `bᵀy = 1`.
pub fn infeasible_sdp<R: Rng + ?Sized>(rng: &mut R) -> SdpProblem {
    let mut p = SdpProblem::new(Sense::Minimize);
    let d = rng.random_range(1..=4);
    let k = p.add_block(d);
    p.set_objective(k, HermOp::identity(d));
    let m = rng.random_range(1..=d * d);
    let mut a: Vec<HermOp> = (0..m).map(|_| hermitian(d, rng)).collect();
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    let s = a
        .iter()
        .zip(&y)
        .fold(HermOp::zeros(d), |acc, (ai, yi)| &acc + &(ai * *yi));
    let shift = (s.max_eigenvalue() + 1.0) / y[m - 1];
    a[m - 1] = &a[m - 1] - &(HermOp::identity(d) * shift);
    let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let partial: f64 = b[..m - 1].iter().zip(&y).map(|(bi, yi)| bi * yi).sum();
    b[m - 1] = (1.0 - partial) / y[m - 1];
    for (ai, bi) in a.into_iter().zip(b) {
        p.add_constraint(vec![(k, ai)], bi);
    }
    p
}
