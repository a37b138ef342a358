//! Monogamy games for prepare-and-measure key distribution, ensemble
//! uncertainty relations and B92 certification.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_choi, Channel, EbDecomposition};
use crate::error::{Error, Result};
use crate::incompat::{is_jointly_measurable, solve_optimal};
use crate::qmat::{
    increment, partial_trace, spectral_norm, tensor, Ensemble, HermOp, MeasurementFamily, NormKind, Povm, PureState,
    Subsystem, C64, NORMALIZATION_TOL,
};
use crate::sdp::{AdjointMap, SdpProblem, Sense, Tolerances};

/// Game defined by single-round ensembles `ρ_{x|θ}`, played `n` times in parallel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GameJson", into = "GameJson")]
pub struct MonogamyGame {
    bases: Vec<Ensemble>,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct GameJson {
    d: usize,
    bases: Vec<Vec<HermOp>>,
    #[serde(default = "one")]
    n: usize,
}

fn one() -> usize {
    1
}

impl TryFrom<GameJson> for MonogamyGame {
    type Error = Error;
    fn try_from(j: GameJson) -> Result<Self> {
        let g = MonogamyGame::new(j.bases.into_iter().map(Ensemble::new).collect::<Result<_>>()?, j.n)?;
        if g.d() != j.d {
            return Err(Error::DimensionMismatch {
                expected: j.d,
                found: g.d(),
            });
        }
        Ok(g)
    }
}

impl From<MonogamyGame> for GameJson {
    fn from(g: MonogamyGame) -> Self {
        Self {
            d: g.d(),
            bases: g.bases.iter().map(|e| e.states().to_vec()).collect(),
            n: g.n,
        }
    }
}

impl MonogamyGame {
    pub fn new(bases: Vec<Ensemble>, n: usize) -> Result<Self> {
        let Some(first) = bases.first() else {
            return Err(Error::InvalidArgument("game needs at least one basis".into()));
        };
        if n == 0 {
            return Err(Error::InvalidArgument("repetition count must be at least 1".into()));
        }
        for e in &bases {
            if e.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: e.dim(),
                });
            }
            if e.len() != first.len() {
                return Err(Error::InvalidArgument(
                    "all bases need the same number of outcomes".into(),
                ));
            }
        }
        Ok(Self { bases, n })
    }

    /// Single-round input dimension.
    pub fn d(&self) -> usize {
        self.bases[0].dim()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bases(&self) -> &[Ensemble] {
        &self.bases
    }

    pub fn num_bases(&self) -> usize {
        self.bases.len()
    }

    pub fn outcomes(&self) -> usize {
        self.bases[0].len()
    }

    /// Single-round game with the repetition count replaced.
    pub fn with_rounds(&self, n: usize) -> Result<Self> {
        Self::new(self.bases.clone(), n)
    }

    /// Ensembles of the `n`-fold game: `ρ_{x|θ} = ⊗_i ρ_{x_i|θ_i}`, indexed
    /// by flattened `θ ∈ Θⁿ` (first round most significant) then `x ∈ Xⁿ`.
    pub fn product_ensembles(&self) -> Vec<Vec<HermOp>> {
        let (nt, nx, n) = (self.num_bases(), self.outcomes(), self.n);
        let mut thetas = vec![0usize; n];
        let mut out = Vec::with_capacity(nt.pow(n as u32));
        for _ in 0..nt.pow(n as u32) {
            let mut xs = vec![0usize; n];
            let mut row = Vec::with_capacity(nx.pow(n as u32));
            for _ in 0..nx.pow(n as u32) {
                let state = (1..n).fold(self.bases[thetas[0]].states()[xs[0]].clone(), |acc, i| {
                    tensor(&acc, &self.bases[thetas[i]].states()[xs[i]])
                });
                row.push(state);
                increment(&mut xs, &vec![nx; n]);
            }
            out.push(row);
            increment(&mut thetas, &vec![nt; n]);
        }
        out
    }
}

/// BB84 ensembles `|0⟩⟨0|/2, |1⟩⟨1|/2` and `|+⟩⟨+|/2, |−⟩⟨−|/2`.
pub fn bb84_game(n: usize) -> Result<MonogamyGame> {
    let z = Ensemble::new(vec![HermOp::diag(&[0.5, 0.0]), HermOp::diag(&[0.0, 0.5])])?;
    let x = Ensemble::new(vec![
        HermOp::qubit(0.5, [0.5, 0.0, 0.0]),
        HermOp::qubit(0.5, [-0.5, 0.0, 0.0]),
    ])?;
    MonogamyGame::new(vec![z, x], n)
}

/// Channel from `A` to `B ⊗ C` in Choi form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TwoReceiverChannel {
    pub channel: Channel,
    pub dim_b: usize,
    pub dim_c: usize,
}

impl TwoReceiverChannel {
    pub fn new(channel: Channel, dim_b: usize, dim_c: usize) -> Result<Self> {
        if channel.dim_out() != dim_b * dim_c {
            return Err(Error::DimensionMismatch {
                expected: dim_b * dim_c,
                found: channel.dim_out(),
            });
        }
        Ok(Self { channel, dim_b, dim_c })
    }
}

/// Strategy channel: general Choi form or the extended measure-and-prepare
/// form `ρ ↦ Σ_λ tr(E_λ ρ) ρ^B_λ ⊗ ρ^C_λ`, which stays compact for many rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum StrategyChannel {
    Choi(TwoReceiverChannel),
    #[serde(rename_all = "camelCase")]
    Broadcast {
        measure: Povm,
        bob_states: Vec<HermOp>,
        charlie_states: Vec<HermOp>,
    },
}

impl StrategyChannel {
    pub fn broadcast(measure: Povm, bob_states: Vec<HermOp>, charlie_states: Vec<HermOp>) -> Result<Self> {
        let k = measure.outcomes();
        if bob_states.len() != k || charlie_states.len() != k {
            return Err(Error::InvalidChannel(
                "one Bob and one Charlie state per outcome required".into(),
            ));
        }
        // Validation of every prepared state as a density operator.
        EbDecomposition::new(measure.clone(), bob_states.clone())?;
        EbDecomposition::new(measure.clone(), charlie_states.clone())?;
        Ok(Self::Broadcast {
            measure,
            bob_states,
            charlie_states,
        })
    }

    pub fn dim_in(&self) -> usize {
        match self {
            Self::Choi(c) => c.channel.dim_in(),
            Self::Broadcast { measure, .. } => measure.dim(),
        }
    }

    pub fn dims_out(&self) -> (usize, usize) {
        match self {
            Self::Choi(c) => (c.dim_b, c.dim_c),
            Self::Broadcast {
                bob_states,
                charlie_states,
                ..
            } => (bob_states[0].dim(), charlie_states[0].dim()),
        }
    }

    /// Output on `B ⊗ C`.
    pub fn apply(&self, rho: &HermOp) -> Result<HermOp> {
        match self {
            Self::Choi(c) => c.channel.apply(rho),
            Self::Broadcast {
                measure,
                bob_states,
                charlie_states,
            } => {
                let (db, dc) = self.dims_out();
                Ok(measure
                    .effects()
                    .iter()
                    .zip(bob_states.iter().zip(charlie_states))
                    .fold(HermOp::zeros(db * dc), |acc, (e, (b, c))| {
                        &acc + &(tensor(b, c) * e.inner(rho))
                    }))
            }
        }
    }

    /// Reduced output on one receiver.
    pub fn apply_marginal(&self, rho: &HermOp, side: Side) -> Result<HermOp> {
        match self {
            Self::Choi(c) => {
                let out = apply_choi(c.channel.choi(), c.channel.dim_in(), c.channel.dim_out(), rho);
                let keep = match side {
                    Side::B => Subsystem::A,
                    Side::C => Subsystem::B,
                };
                partial_trace(&out, (c.dim_b, c.dim_c), keep)
            }
            Self::Broadcast {
                measure,
                bob_states,
                charlie_states,
            } => {
                let states = match side {
                    Side::B => bob_states,
                    Side::C => charlie_states,
                };
                Ok(measure
                    .effects()
                    .iter()
                    .zip(states)
                    .fold(HermOp::zeros(states[0].dim()), |acc, (e, s)| &acc + &(s * e.inner(rho))))
            }
        }
    }

    /// Choi form of a broadcast strategy (only for small dimensions).
    pub fn to_choi(&self) -> Result<TwoReceiverChannel> {
        match self {
            Self::Choi(c) => Ok(c.clone()),
            Self::Broadcast {
                measure,
                bob_states,
                charlie_states,
            } => {
                let (db, dc) = self.dims_out();
                let joint = bob_states
                    .iter()
                    .zip(charlie_states)
                    .map(|(b, c)| tensor(b, c))
                    .collect();
                let channel = crate::channels::from_eb(&EbDecomposition::new(measure.clone(), joint)?)?;
                TwoReceiverChannel::new(channel, db, dc)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    B,
    C,
}

/// Channel plus guessing measurements `{F_{x|θ}}` for Bob and `{G_{x|θ}}` for Charlie.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameStrategy {
    pub channel: StrategyChannel,
    pub bob: MeasurementFamily,
    pub charlie: MeasurementFamily,
}

impl GameStrategy {
    pub fn new(channel: StrategyChannel, bob: MeasurementFamily, charlie: MeasurementFamily) -> Result<Self> {
        let (db, dc) = channel.dims_out();
        if bob.dim() != db || charlie.dim() != dc {
            return Err(Error::DimensionMismatch {
                expected: db,
                found: bob.dim(),
            });
        }
        Ok(Self { channel, bob, charlie })
    }
}

/// `p_win = |Θ|^{-n} Σ_{θ,x} tr((F_{x|θ} ⊗ G_{x|θ}) C(ρ_{x|θ}))`.
pub fn game_value(g: &MonogamyGame, s: &GameStrategy) -> Result<f64> {
    let ensembles = g.product_ensembles();
    let nt = ensembles.len();
    let nx = ensembles[0].len();
    let din = g.d().pow(g.n as u32);
    if s.channel.dim_in() != din {
        return Err(Error::DimensionMismatch {
            expected: din,
            found: s.channel.dim_in(),
        });
    }
    for fam in [&s.bob, &s.charlie] {
        if fam.settings() != nt || fam.outcome_counts().iter().any(|&o| o != nx) {
            return Err(Error::InvalidArgument(format!(
                "guessing families need {nt} settings with {nx} outcomes"
            )));
        }
    }
    let mut total = 0.0;
    for (theta, row) in ensembles.iter().enumerate() {
        for (x, rho) in row.iter().enumerate() {
            let (f, gg) = (s.bob.effect(theta, x), s.charlie.effect(theta, x));
            total += match &s.channel {
                StrategyChannel::Choi(_) => tensor(f, gg).inner(&s.channel.apply(rho)?),
                StrategyChannel::Broadcast {
                    measure,
                    bob_states,
                    charlie_states,
                } => measure
                    .effects()
                    .iter()
                    .zip(bob_states.iter().zip(charlie_states))
                    .map(|(e, (b, c))| e.inner(rho) * f.inner(b) * gg.inner(c))
                    .sum(),
            };
        }
    }
    Ok(total / nt as f64)
}

/// Measure `{|φ⟩⟨φ|, I − |φ⟩⟨φ|}` with `|φ⟩ = cos(π/8)|0⟩ + sin(π/8)|1⟩` on
/// every round and broadcast the outcome string to both guessers.
pub fn bb84_optimal_strategy(n: usize) -> Result<GameStrategy> {
    if n == 0 {
        return Err(Error::InvalidArgument("repetition count must be at least 1".into()));
    }
    let t = std::f64::consts::PI / 8.0;
    let phi = HermOp::projector(&PureState::from_real(&[t.cos(), t.sin()])?);
    let single = [phi.clone(), &HermOp::identity(2) - &phi];
    let k = 1usize << n;
    let effects: Vec<HermOp> = (0..k)
        .map(|s| {
            (1..n).fold(single[(s >> (n - 1)) & 1].clone(), |acc, i| {
                tensor(&acc, &single[(s >> (n - 1 - i)) & 1])
            })
        })
        .collect();
    let measure = Povm::new(effects)?;
    let register: Vec<HermOp> = (0..k).map(|s| HermOp::basis_projector(k, s)).collect();
    let channel = StrategyChannel::broadcast(measure, register.clone(), register)?;
    let guess = MeasurementFamily::new(vec![Povm::computational(k); 1 << n])?;
    GameStrategy::new(channel, guess.clone(), guess)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    /// `max_{θ≠θ', x, x'} ‖√ρ_{x|θ} √ρ_{x'|θ'}‖²`.
    pub c: f64,
    /// `max_{θ, x} tr ρ_{x|θ}`.
    pub m: f64,
    /// Event-count factor `|Q|`.
    pub q: usize,
}

/// Single-round overlap and maximal probability, with the operator norm.
pub fn game_params(g: &MonogamyGame) -> Result<GameParams> {
    game_params_with(g, NormKind::Operator)
}

pub fn game_params_with(g: &MonogamyGame, kind: NormKind) -> Result<GameParams> {
    if g.num_bases() < 2 {
        return Err(Error::InvalidArgument("overlap needs at least two bases".into()));
    }
    let roots: Vec<Vec<HermOp>> = g
        .bases
        .iter()
        .map(|e| e.states().iter().map(HermOp::sqrt_psd).collect())
        .collect();
    let mut c: f64 = 0.0;
    for (t1, r1) in roots.iter().enumerate() {
        for (t2, r2) in roots.iter().enumerate() {
            if t1 == t2 {
                continue;
            }
            for a in r1 {
                for b in r2 {
                    let prod = a.product(b);
                    let nrm = match kind {
                        NormKind::Operator => spectral_norm(&prod),
                        NormKind::Trace => trace_norm_general(&prod),
                    };
                    c = c.max(nrm * nrm);
                }
            }
        }
    }
    let m = g
        .bases
        .iter()
        .flat_map(|e| e.states().iter().map(HermOp::trace))
        .fold(0.0, f64::max);
    Ok(GameParams { c, m, q: 1 })
}

fn trace_norm_general(m: &DMatrix<C64>) -> f64 {
    HermOp::new(m.adjoint() * m)
        .map(|h| h.map_spectrum(|x| x.max(0.0).sqrt()).trace())
        .unwrap_or_else(|_| {
            let h = m.adjoint() * m;
            let h = (&h + h.adjoint()).map(|z| z * 0.5);
            HermOp::new(h)
                .expect("symmetrized")
                .map_spectrum(|x| x.max(0.0).sqrt())
                .trace()
        })
}

/// `|Q| dⁿ (m/|Θ| + (|Θ| − 1)/|Θ| · √c)ⁿ`.
pub fn theorem4_bound(g: &MonogamyGame, p: &GameParams) -> f64 {
    let t = g.num_bases() as f64;
    let per_round = g.d() as f64 * (p.m / t + (t - 1.0) / t * p.c.sqrt());
    p.q as f64 * per_round.powi(g.n as i32)
}

/// Optimal success probability `max Σ_x tr(M_x σ_x)` over POVMs, by SDP.
pub fn discrimination_probability(states: &[HermOp], tol: &Tolerances) -> Result<f64> {
    let Some(first) = states.first() else {
        return Err(Error::InvalidArgument("no states to discriminate".into()));
    };
    let d = first.dim();
    let mut p = SdpProblem::new(Sense::Maximize);
    let blocks: Vec<usize> = states
        .iter()
        .map(|s| {
            let k = p.add_block(d);
            p.set_objective(k, s.clone());
            k
        })
        .collect();
    let id = |h: &HermOp| h.clone();
    let terms: Vec<(usize, AdjointMap<'_>)> = blocks.iter().map(|&k| (k, &id as AdjointMap<'_>)).collect();
    p.add_matrix_equality(&terms, &HermOp::identity(d));
    Ok(solve_optimal(&p, tol)?.primal_objective)
}

/// `(tr(σ₀ + σ₁) + ‖σ₀ − σ₁‖₁)/2`.
pub fn helstrom(s0: &HermOp, s1: &HermOp) -> f64 {
    ((s0 + s1).trace() + (s0 - s1).trace_norm()) / 2.0
}

/// `p_guess(X|BΘ)` or `p_guess(X|CΘ)`, averaged uniformly over bases.
pub fn guessing_probability(g: &MonogamyGame, c: &StrategyChannel, side: Side, tol: &Tolerances) -> Result<f64> {
    let ensembles = g.product_ensembles();
    let mut total = 0.0;
    for row in &ensembles {
        let steered: Vec<HermOp> = row
            .iter()
            .map(|rho| c.apply_marginal(rho, side))
            .collect::<Result<_>>()?;
        total += if steered.len() == 2 {
            helstrom(&steered[0], &steered[1])
        } else {
            discrimination_probability(&steered, tol)?
        };
    }
    Ok(total / ensembles.len() as f64)
}

fn require_pair(g: &MonogamyGame) -> Result<()> {
    if g.num_bases() != 2 || g.n != 1 {
        return Err(Error::InvalidArgument(
            "the uncertainty relation needs a single-round game with exactly two bases".into(),
        ));
    }
    Ok(())
}

/// `d(m + √c)`.
pub fn uncertainty_bound(g: &MonogamyGame) -> Result<f64> {
    require_pair(g)?;
    let p = game_params(g)?;
    Ok(g.d() as f64 * (p.m + p.c.sqrt()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UncertaintyReport {
    pub p_guess_b: f64,
    pub p_guess_c: f64,
    pub sum: f64,
    pub bound: f64,
    pub h_min_b: f64,
    pub h_min_c: f64,
    pub h_min_sum: f64,
    /// `−2 log₂(d(m + √c)/2)`.
    pub h_min_bound: f64,
    pub holds: bool,
}

pub fn check_uncertainty(g: &MonogamyGame, c: &StrategyChannel, tol: &Tolerances) -> Result<UncertaintyReport> {
    let bound = uncertainty_bound(g)?;
    let pb = guessing_probability(g, c, Side::B, tol)?;
    let pc = guessing_probability(g, c, Side::C, tol)?;
    let (hb, hc) = (-pb.log2(), -pc.log2());
    let h_min_bound = -2.0 * (bound / 2.0).log2();
    let slack = tol.acceptable;
    Ok(UncertaintyReport {
        p_guess_b: pb,
        p_guess_c: pc,
        sum: pb + pc,
        bound,
        h_min_b: hb,
        h_min_c: hc,
        h_min_sum: hb + hc,
        h_min_bound,
        holds: pb + pc <= bound + slack && hb + hc >= h_min_bound - slack,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum B92Verdict {
    Certified,
    PartialOnly,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct B92Report {
    pub verdict: B92Verdict,
    /// `⟨ψ_j|E_{1|i}|ψ_j⟩` for `i = 1, 2` and `j ≠ i`.
    pub zero_error: [f64; 2],
    /// `⟨ψ_i|E_{1|i}|ψ_i⟩` for `i = 1, 2`.
    pub success: [f64; 2],
    /// `1 − |⟨ψ₁|ψ₂⟩|²`.
    pub required_success: f64,
    /// Largest entrywise deviation of `E_{1|i}` from `I − |ψ_j⟩⟨ψ_j|`.
    pub effect_deviation: Option<f64>,
    pub deviation_tolerance: Option<f64>,
    pub jointly_measurable: Option<bool>,
}

fn b92_overlap(psi1: &PureState, psi2: &PureState) -> Result<f64> {
    if psi1.dim() != 2 || psi2.dim() != 2 {
        return Err(Error::InvalidArgument("B92 states must be qubit states".into()));
    }
    let s = psi1.overlap(psi2).norm();
    if s < 1e-9 {
        return Err(Error::InvalidArgument("B92 states must not be orthogonal".into()));
    }
    if s > 1.0 - 1e-9 {
        return Err(Error::InvalidArgument("B92 states must be distinct".into()));
    }
    Ok(s)
}

/// The intended measurements `{I − |ψ₂⟩⟨ψ₂|, |ψ₂⟩⟨ψ₂|}` and `{I − |ψ₁⟩⟨ψ₁|, |ψ₁⟩⟨ψ₁|}`.
pub fn b92_canonical_family(psi1: &PureState, psi2: &PureState) -> Result<MeasurementFamily> {
    b92_overlap(psi1, psi2)?;
    MeasurementFamily::new(vec![
        Povm::binary(&HermOp::identity(2) - &psi2.projector())?,
        Povm::binary(&HermOp::identity(2) - &psi1.projector())?,
    ])
}

/// Checks the zero-error and success constraints on the induced family.
pub fn b92_certify(
    e: &MeasurementFamily,
    psi1: &PureState,
    psi2: &PureState,
    tol: f64,
    sdp_tol: &Tolerances,
) -> Result<B92Report> {
    let s = b92_overlap(psi1, psi2)?;
    if e.dim() != 2 || e.outcome_counts() != [2, 2] {
        return Err(Error::InvalidArgument(
            "B92 family needs two binary qubit measurements".into(),
        ));
    }
    let psi = [psi1, psi2];
    let zero_error = [psi[1].expectation(e.effect(0, 0)), psi[0].expectation(e.effect(1, 0))];
    let success = [psi[0].expectation(e.effect(0, 0)), psi[1].expectation(e.effect(1, 0))];
    let required_success = 1.0 - s * s;
    let mut report = B92Report {
        verdict: B92Verdict::Fail,
        zero_error,
        success,
        required_success,
        effect_deviation: None,
        deviation_tolerance: None,
        jointly_measurable: None,
    };
    if zero_error.iter().any(|&z| z > tol) {
        return Ok(report);
    }
    if success.iter().any(|&p| p < required_success - tol) {
        report.verdict = B92Verdict::PartialOnly;
        return Ok(report);
    }
    // The constraints force E_{1|i} = I − |ψ_j⟩⟨ψ_j| up to this entrywise tolerance.
    let delta = tol.max(0.0);
    let c2 = 1.0 - s * s;
    let diag = (delta * (1.0 + s * s) + 2.0 * s * c2.sqrt() * delta.sqrt()) / c2;
    let allowed = delta + (2.0 * delta).sqrt() + diag + 1e-12;
    let deviation = [
        e.effect(0, 0).max_abs_diff(&(&HermOp::identity(2) - &psi2.projector())),
        e.effect(1, 0).max_abs_diff(&(&HermOp::identity(2) - &psi1.projector())),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let jm = is_jointly_measurable(e, sdp_tol)?.jointly_measurable;
    report.effect_deviation = Some(deviation);
    report.deviation_tolerance = Some(allowed);
    report.jointly_measurable = Some(jm);
    if deviation <= allowed && !jm {
        report.verdict = B92Verdict::Certified;
    }
    Ok(report)
}

/// Unambiguous-discrimination attack: the eavesdropper's measure-and-prepare
/// channel writes `ψ₁ identified`, `ψ₂ identified` or `inconclusive` into a
/// classical register, and Bob's device answers 1 on setting `i` only when
/// `ψ_i` was identified.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UsdAttack {
    pub channel: EbDecomposition,
    pub device: MeasurementFamily,
    pub induced: MeasurementFamily,
}

pub fn b92_usd_attack(psi1: &PureState, psi2: &PureState) -> Result<UsdAttack> {
    let s = b92_overlap(psi1, psi2)?;
    let perp = |p: &PureState| &HermOp::identity(2) - &p.projector();
    let id1 = perp(psi2) * (1.0 / (1.0 + s));
    let id2 = perp(psi1) * (1.0 / (1.0 + s));
    let rest = &(&HermOp::identity(2) - &id1) - &id2;
    let usd = Povm::new(vec![id1, id2, rest])?;
    let register: Vec<HermOp> = (0..3).map(|k| HermOp::basis_projector(3, k)).collect();
    let channel = EbDecomposition::new(usd, register)?;
    let device = MeasurementFamily::new(vec![
        Povm::new(vec![HermOp::diag(&[1.0, 0.0, 0.0]), HermOp::diag(&[0.0, 1.0, 1.0])])?,
        Povm::new(vec![HermOp::diag(&[0.0, 1.0, 0.0]), HermOp::diag(&[1.0, 0.0, 1.0])])?,
    ])?;
    let induced = MeasurementFamily::from_effects(
        device
            .povms()
            .iter()
            .map(|p| p.effects().iter().map(|e| channel.adjoint_apply(e)).collect())
            .collect::<Result<_>>()?,
    )?;
    Ok(UsdAttack {
        channel,
        device,
        induced,
    })
}

/// Checks that a two-receiver Choi channel is a valid strategy input for `g`.
pub fn check_strategy_dims(g: &MonogamyGame, c: &StrategyChannel) -> Result<()> {
    let din = g.d().pow(g.n as u32);
    if c.dim_in() != din {
        return Err(Error::DimensionMismatch {
            expected: din,
            found: c.dim_in(),
        });
    }
    Ok(())
}

/// Average state `Σ_x ρ_{x|θ}` of every basis; differs across bases for
/// games outside the entanglement-based picture.
pub fn basis_averages(g: &MonogamyGame) -> Vec<HermOp> {
    g.bases.iter().map(Ensemble::average).collect()
}

/// Whether the basis averages coincide within the normalization tolerance.
pub fn has_common_average(g: &MonogamyGame) -> bool {
    let avg = basis_averages(g);
    avg.iter().all(|a| a.max_abs_diff(&avg[0]) <= NORMALIZATION_TOL)
}
