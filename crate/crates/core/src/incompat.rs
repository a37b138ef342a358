//! Joint measurability, the incompatible weight, linear joint-measurability
//! inequalities, compatibility structures and CNDO convertibility.
//!
//! Parents are indexed by deterministic response functions `λ: y ↦ b`; any
//! stochastic post-processing is a convex mixture of these, so nothing is
//! lost by restricting to them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::adjoint_choi;
use crate::error::{Error, Result};
use crate::qmat::{
    increment, partial_trace, tensor, ConditionalDistribution, HermOp, MeasurementFamily, Povm, Subsystem,
    NORMALIZATION_TOL, PSD_TOL,
};
use crate::sdp::{self, AdjointMap, SdpProblem, SdpSolution, SdpStatus, Sense, Tolerances};
use crate::steering::Assemblage;

/// Upper limit on the number of deterministic response functions.
pub const MAX_RESPONSES: usize = 4096;

/// Every `λ ∈ Π_y [o_y]`, last setting fastest.
pub fn response_functions(outcome_counts: &[usize]) -> Result<Vec<Vec<usize>>> {
    let total = outcome_counts
        .iter()
        .try_fold(1usize, |acc, &o| acc.checked_mul(o).filter(|&n| n <= MAX_RESPONSES));
    let Some(total) = total else {
        return Err(Error::SizeGuard {
            what: "deterministic response functions",
            size: outcome_counts.iter().fold(1usize, |a, &o| a.saturating_mul(o)),
            limit: MAX_RESPONSES,
        });
    };
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0; outcome_counts.len()];
    for _ in 0..total {
        out.push(idx.clone());
        increment(&mut idx, outcome_counts);
    }
    Ok(out)
}

/// Solution of the max-slack hidden-variable program shared by joint
/// measurability and unsteerability.
pub(crate) struct HiddenModel {
    /// Largest `t` such that a decomposition with every hidden operator `⪰ tI` exists.
    pub margin: f64,
    pub responses: Vec<Vec<usize>>,
    pub hidden: Vec<HermOp>,
    /// Dual operators `F_{b|y}`; `Σ_y F_{λ(y)|y} ⪰ 0` for every `λ` and `Σ tr(F T) = margin`.
    pub dual: Vec<Vec<HermOp>>,
}

/// Maximizes `t` subject to `Σ_{λ(y)=b} H_λ = T_{b|y}` and `H_λ ⪰ tI`.
///
/// Written as `H_λ = W_λ + tI`, `s = t + K` with `W_λ, s ⪰ 0`; the shift `K`
/// exceeds `(|Y| − 1)/|Λ|`, a lower bound on `−t*`, so `s` stays interior.
pub(crate) fn hidden_model(targets: &[Vec<HermOp>], dim: usize, tol: &Tolerances) -> Result<HiddenModel> {
    let counts: Vec<usize> = targets.iter().map(Vec::len).collect();
    let responses = response_functions(&counts)?;
    let nl = responses.len();
    let shift = 1.0 + counts.len() as f64 / nl as f64;

    let mut p = SdpProblem::new(Sense::Maximize);
    let w: Vec<usize> = (0..nl).map(|_| p.add_block(dim)).collect();
    let s = p.add_block(1);
    p.set_objective(s, HermOp::identity(1));

    let id = |h: &HermOp| h.clone();
    let mut ranges = Vec::new();
    for (y, row) in targets.iter().enumerate() {
        let ny = (nl / counts[y]) as f64;
        let scal = move |h: &HermOp| HermOp::diag(&[ny * h.trace()]);
        let mut per_b = Vec::new();
        for (b, t) in row.iter().enumerate() {
            let mut terms: Vec<(usize, AdjointMap<'_>)> = responses
                .iter()
                .enumerate()
                .filter(|(_, l)| l[y] == b)
                .map(|(k, _)| (w[k], &id as AdjointMap<'_>))
                .collect();
            terms.push((s, &scal));
            let rhs = t + &(HermOp::identity(dim) * (ny * shift));
            per_b.push(p.add_matrix_equality(&terms, &rhs));
        }
        ranges.push(per_b);
    }

    let sol = solve_optimal(&p, tol)?;
    let margin = sol.primal[s].entry(0, 0).re - shift;
    let hidden = w
        .iter()
        .map(|&k| &sol.primal[k] + &(HermOp::identity(dim) * margin))
        .collect();
    let dual = ranges
        .into_iter()
        .map(|row| row.into_iter().map(|r| sol.dual_matrix(r, dim)).collect())
        .collect();
    Ok(HiddenModel {
        margin,
        responses,
        hidden,
        dual,
    })
}

pub(crate) fn solve_optimal(p: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution> {
    let sol = sdp::solve(p, tol)?;
    match sol.status {
        SdpStatus::Optimal => Ok(sol),
        other => Err(Error::Solver(format!(
            "status {other:?} after {} iterations (residuals {:.2e}/{:.2e}, gap {:.2e})",
            sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
        ))),
    }
}

/// Parent POVM with its deterministic post-processing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JmCertificate {
    pub parents: Vec<HermOp>,
    pub responses: Vec<Vec<usize>>,
    /// `p(b | y, λ)` with inputs `(y, λ)`.
    pub postprocessing: ConditionalDistribution,
}

impl JmCertificate {
    /// Largest deviation of `Σ_{λ(y)=b} G_λ` from `E_{b|y}`.
    pub fn residual(&self, fam: &MeasurementFamily) -> f64 {
        let d = fam.dim();
        let mut worst: f64 = 0.0;
        for y in 0..fam.settings() {
            for b in 0..fam.povm(y).outcomes() {
                let s = self
                    .parents
                    .iter()
                    .zip(&self.responses)
                    .filter(|(_, l)| l[y] == b)
                    .fold(HermOp::zeros(d), |acc, (g, _)| &acc + g);
                worst = worst.max(s.max_abs_diff(fam.effect(y, b)));
            }
        }
        worst
    }
}

/// Linear functional `Σ tr(F_{b|y} E_{b|y}) ≤ bound`, valid for every jointly
/// measurable family (or, for steering witnesses, every unsteerable assemblage).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub operators: Vec<Vec<HermOp>>,
    pub bound: f64,
}

impl Witness {
    pub fn zero(dim: usize, outcome_counts: &[usize]) -> Self {
        Self {
            operators: outcome_counts.iter().map(|&o| vec![HermOp::zeros(dim); o]).collect(),
            bound: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JmReport {
    pub jointly_measurable: bool,
    /// Max-slack value `t*`; compatible iff `t* ≥ −tol`.
    pub margin: f64,
    pub certificate: Option<JmCertificate>,
    pub witness: Option<Witness>,
    /// Witness value on the input family, when a witness is returned.
    pub witness_value: Option<f64>,
}

/// Decides joint measurability by the max-slack parent program.
pub fn is_jointly_measurable(fam: &MeasurementFamily, tol: &Tolerances) -> Result<JmReport> {
    let d = fam.dim();
    let targets: Vec<Vec<HermOp>> = fam.povms().iter().map(|p| p.effects().to_vec()).collect();
    let model = hidden_model(&targets, d, tol)?;
    if model.margin >= -tol.acceptable {
        let counts = fam.outcome_counts();
        let nb = counts.iter().copied().max().unwrap_or(1);
        let responses = model.responses.clone();
        let postprocessing = ConditionalDistribution::deterministic(vec![fam.settings(), responses.len()], nb, |i| {
            responses[i[1]][i[0]]
        })?;
        return Ok(JmReport {
            jointly_measurable: true,
            margin: model.margin,
            certificate: Some(JmCertificate {
                parents: model.hidden,
                responses: model.responses,
                postprocessing,
            }),
            witness: None,
            witness_value: None,
        });
    }

    // W_{b|y} = I/(d|Y|) − F_{b|y}; for a JM family with parent G,
    // Σ tr(W E) = Σ_λ tr(G_λ K_λ) ≤ d · max_λ λ_max(K_λ), K_λ = I/d − Σ_y F_{λ(y)|y}.
    let ny = fam.settings() as f64;
    let base = HermOp::identity(d) * (1.0 / (d as f64 * ny));
    let ops: Vec<Vec<HermOp>> = model
        .dual
        .iter()
        .map(|row| row.iter().map(|f| &base - f).collect())
        .collect();
    let bound = d as f64
        * model
            .responses
            .iter()
            .map(|l| {
                let k = l
                    .iter()
                    .enumerate()
                    .fold(HermOp::identity(d) * (1.0 / d as f64), |acc, (y, &b)| {
                        &acc - &model.dual[y][b]
                    });
                k.max_eigenvalue()
            })
            .fold(f64::NEG_INFINITY, f64::max);
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::Solver(format!("degenerate witness bound {bound}")));
    }
    let witness = Witness {
        operators: ops
            .iter()
            .map(|row| row.iter().map(|w| w * (1.0 / bound)).collect())
            .collect(),
        bound: 1.0,
    };
    let value = jm_inequality_value(fam, &witness.operators)?;
    Ok(JmReport {
        jointly_measurable: false,
        margin: model.margin,
        certificate: None,
        witness: Some(witness),
        witness_value: Some(value),
    })
}

/// Max-slack value alone, for threshold searches.
pub fn jm_margin(fam: &MeasurementFamily, tol: &Tolerances) -> Result<f64> {
    let targets: Vec<Vec<HermOp>> = fam.povms().iter().map(|p| p.effects().to_vec()).collect();
    Ok(hidden_model(&targets, fam.dim(), tol)?.margin)
}

fn check_bloch(v: &[f64; 3]) -> Result<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("Bloch vector length {n} exceeds 1")));
    }
    Ok(n)
}

fn norm3(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a + b| + |a − b| ≤ 2` for unbiased binary qubit measurements `(I ± a·σ)/2`.
pub fn busch_pair_compatible(a: [f64; 3], b: [f64; 3]) -> Result<bool> {
    check_bloch(&a)?;
    check_bloch(&b)?;
    Ok(busch_value(a, b) <= 2.0)
}

pub fn busch_value(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3([a[0] + b[0], a[1] + b[1], a[2] + b[2]]) + norm3([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

/// [`busch_pair_compatible`] on two binary qubit POVMs; biased effects are rejected.
pub fn busch_povms_compatible(p: &Povm, q: &Povm) -> Result<bool> {
    let a = unbiased_axis(p)?;
    let b = unbiased_axis(q)?;
    busch_pair_compatible(a, b)
}

fn unbiased_axis(p: &Povm) -> Result<[f64; 3]> {
    if p.dim() != 2 || p.outcomes() != 2 {
        return Err(Error::InvalidArgument("expected a binary qubit POVM".into()));
    }
    let (tr, r) = p.effect(0).bloch()?;
    if (tr - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidArgument(format!("biased effect with trace {tr}")));
    }
    Ok(r)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct WeightReport {
    pub weight: f64,
    /// Weight of the free part, `μ* = 1 − weight`.
    pub free_weight: f64,
    /// Sub-normalized parents `G̃_λ` with `Σ G̃_λ = μ* M`.
    pub parents: Vec<HermOp>,
    pub responses: Vec<Vec<usize>>,
}

/// `max μ` s.t. `G̃_λ ⪰ 0`, `Σ_{λ(y)=b} G̃_λ ⪯ T_{b|y}`, `Σ_λ G̃_λ = μM`.
pub(crate) fn free_weight(targets: &[Vec<HermOp>], marginal: &HermOp, tol: &Tolerances) -> Result<WeightReport> {
    let dim = marginal.dim();
    let counts: Vec<usize> = targets.iter().map(Vec::len).collect();
    let responses = response_functions(&counts)?;
    let mut p = SdpProblem::new(Sense::Maximize);
    let g: Vec<usize> = responses.iter().map(|_| p.add_block(dim)).collect();
    let mu = p.add_block(1);
    p.set_objective(mu, HermOp::identity(1));
    let id = |h: &HermOp| h.clone();
    for (y, row) in targets.iter().enumerate() {
        for (b, t) in row.iter().enumerate() {
            let slack = p.add_block(dim);
            let mut terms: Vec<(usize, AdjointMap<'_>)> = responses
                .iter()
                .enumerate()
                .filter(|(_, l)| l[y] == b)
                .map(|(k, _)| (g[k], &id as AdjointMap<'_>))
                .collect();
            terms.push((slack, &id));
            p.add_matrix_equality(&terms, t);
        }
    }
    let neg_marg = |h: &HermOp| HermOp::diag(&[-h.inner(marginal)]);
    let mut terms: Vec<(usize, AdjointMap<'_>)> = g.iter().map(|&k| (k, &id as AdjointMap<'_>)).collect();
    terms.push((mu, &neg_marg));
    p.add_matrix_equality(&terms, &HermOp::zeros(dim));

    let sol = solve_optimal(&p, tol)?;
    let free = sol.primal[mu].entry(0, 0).re.clamp(0.0, 1.0);
    Ok(WeightReport {
        weight: 1.0 - free,
        free_weight: free,
        parents: g.iter().map(|&k| sol.primal[k].clone()).collect(),
        responses,
    })
}

/// Smallest `ν` with `E = νF + (1 − ν)G`, `G` jointly measurable.
pub fn incompatible_weight(fam: &MeasurementFamily, tol: &Tolerances) -> Result<WeightReport> {
    let targets: Vec<Vec<HermOp>> = fam.povms().iter().map(|p| p.effects().to_vec()).collect();
    free_weight(&targets, &HermOp::identity(fam.dim()), tol)
}

/// `Σ_{b,y} tr(F_{b|y} E_{b|y})`.
pub fn jm_inequality_value(fam: &MeasurementFamily, witness: &[Vec<HermOp>]) -> Result<f64> {
    check_shape(fam.dim(), &fam.outcome_counts(), witness)?;
    Ok(fam
        .povms()
        .iter()
        .zip(witness)
        .flat_map(|(p, row)| p.effects().iter().zip(row).map(|(e, f)| e.inner(f)))
        .sum())
}

pub(crate) fn check_shape(dim: usize, counts: &[usize], ops: &[Vec<HermOp>]) -> Result<()> {
    if ops.len() != counts.len() || ops.iter().zip(counts).any(|(row, &o)| row.len() != o) {
        return Err(Error::InvalidArgument("witness shape does not match the family".into()));
    }
    if let Some(f) = ops.iter().flatten().find(|f| f.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: f.dim(),
        });
    }
    Ok(())
}

/// Steering inequality `≤ L` becomes the joint-measurability inequality `≤ dL`.
pub fn translate_steering_inequality(witness: &[Vec<HermOp>], l: f64, d: usize) -> Witness {
    Witness {
        operators: witness.to_vec(),
        bound: d as f64 * l,
    }
}

/// `{{A, −A}, {B, −B}}` for two anticommuting Pauli operators, with the
/// joint-measurability bound `2√2` on a qubit.
pub fn pauli_pair_witness(a: HermOp, b: HermOp) -> Witness {
    let (na, nb) = (-a.clone(), -b.clone());
    Witness {
        operators: vec![vec![a, na], vec![b, nb]],
        bound: 2.0 * std::f64::consts::SQRT_2,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JmMaximum {
    /// `max Σ tr(F E)` over jointly measurable families.
    pub value: f64,
    /// `tr Y` for the dual certificate `Y ⪰ Σ_y F_{λ(y)|y}` for every `λ`.
    pub dual_bound: f64,
    pub certificate: HermOp,
}

/// Largest value of a linear functional over jointly measurable families
/// with the given outcome counts.
pub fn max_jm_value(witness: &[Vec<HermOp>], dim: usize, tol: &Tolerances) -> Result<JmMaximum> {
    let counts: Vec<usize> = witness.iter().map(Vec::len).collect();
    check_shape(dim, &counts, witness)?;
    let responses = response_functions(&counts)?;
    let mut p = SdpProblem::new(Sense::Maximize);
    let mut blocks = Vec::new();
    for l in &responses {
        let k = p.add_block(dim);
        let kl = l
            .iter()
            .enumerate()
            .fold(HermOp::zeros(dim), |acc, (y, &b)| &acc + &witness[y][b]);
        p.set_objective(k, kl);
        blocks.push(k);
    }
    let id = |h: &HermOp| h.clone();
    let terms: Vec<(usize, AdjointMap<'_>)> = blocks.iter().map(|&k| (k, &id as AdjointMap<'_>)).collect();
    let range = p.add_matrix_equality(&terms, &HermOp::identity(dim));
    let sol = solve_optimal(&p, tol)?;
    let y = sol.dual_matrix(range, dim);
    // Exact feasibility of the dual: raise Y until it dominates every K_λ.
    let lift = responses
        .iter()
        .map(|l| {
            let kl = l
                .iter()
                .enumerate()
                .fold(HermOp::zeros(dim), |acc, (yy, &b)| &acc + &witness[yy][b]);
            (&kl - &y).max_eigenvalue()
        })
        .fold(0.0, f64::max);
    let certificate = &y + &(HermOp::identity(dim) * lift);
    Ok(JmMaximum {
        value: sol.primal_objective,
        dual_bound: certificate.trace(),
        certificate,
    })
}

/// Maximal jointly measurable subsets of `povms` after depolarizing each by
/// `η`, as sorted lists of indices.
pub fn jm_structure(povms: &[Povm], eta: f64, tol: &Tolerances) -> Result<Vec<Vec<usize>>> {
    let n = povms.len();
    if n > 5 {
        return Err(Error::SizeGuard {
            what: "measurements in a structure query",
            size: n,
            limit: 5,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let noisy: Vec<Povm> = povms.iter().map(|p| p.depolarized(eta)).collect::<Result<_>>()?;
    let masks: Vec<u32> = (1u32..(1 << n)).collect();
    let flags: Vec<bool> = masks
        .par_iter()
        .map(|&m| {
            let members: Vec<Povm> = (0..n).filter(|i| m >> i & 1 == 1).map(|i| noisy[i].clone()).collect();
            if members.len() == 1 {
                return Ok(true);
            }
            Ok(is_jointly_measurable(&MeasurementFamily::new(members)?, tol)?.jointly_measurable)
        })
        .collect::<Result<_>>()?;
    let compatible: Vec<u32> = masks.iter().zip(&flags).filter(|(_, f)| **f).map(|(m, _)| *m).collect();
    let mut maximal: Vec<Vec<usize>> = compatible
        .iter()
        .filter(|&&m| !compatible.iter().any(|&o| o != m && o & m == m))
        .map(|&m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect();
    maximal.sort();
    Ok(maximal)
}

/// Quantum instrument `{C_a}` stored as CP Choi blocks summing to a channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Instrument {
    dim_in: usize,
    dim_out: usize,
    blocks: Vec<HermOp>,
}

impl Instrument {
    pub fn new(dim_in: usize, dim_out: usize, blocks: Vec<HermOp>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidChannel("instrument has no outcomes".into()));
        }
        for (a, j) in blocks.iter().enumerate() {
            if j.dim() != dim_in * dim_out {
                return Err(Error::DimensionMismatch {
                    expected: dim_in * dim_out,
                    found: j.dim(),
                });
            }
            let min = j.min_eigenvalue();
            if min < -PSD_TOL {
                return Err(Error::InvalidChannel(format!(
                    "instrument block {a} has eigenvalue {min:e}"
                )));
            }
        }
        let total = blocks.iter().fold(HermOp::zeros(dim_in * dim_out), |acc, j| &acc + j);
        let dev = partial_trace(&total, (dim_in, dim_out), Subsystem::A)?.max_abs_diff(&HermOp::identity(dim_in));
        if dev > NORMALIZATION_TOL {
            return Err(Error::InvalidChannel(format!(
                "instrument is not trace preserving ({dev:e})"
            )));
        }
        Ok(Self {
            dim_in,
            dim_out,
            blocks,
        })
    }

    /// One Kraus list per outcome; each operator is `dim_out × dim_in`.
    pub fn from_kraus(kraus: &[Vec<nalgebra::DMatrix<crate::qmat::C64>>]) -> Result<Self> {
        let first = kraus
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::InvalidChannel("instrument has no Kraus operators".into()))?;
        let (dout, din) = first.shape();
        let blocks = kraus
            .iter()
            .map(|ks| {
                let mut j = nalgebra::DMatrix::zeros(din * dout, din * dout);
                for k in ks {
                    let v = nalgebra::DVector::from_fn(din * dout, |r, _| k[(r % dout, r / dout)]);
                    j += &v * v.adjoint();
                }
                HermOp::new(j).map_err(|_| Error::InvalidChannel("Kraus shapes".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(din, dout, blocks)
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn outcomes(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[HermOp] {
        &self.blocks
    }

    pub fn adjoint_apply(&self, a: usize, e: &HermOp) -> HermOp {
        adjoint_choi(&self.blocks[a], self.dim_in, self.dim_out, e)
    }
}

/// Compatibility non-decreasing operation: instrument `{C_a}`, settings map
/// `p(y | a, y')` and outcome map `p(b' | b, a, y', y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CndoSpec {
    pub instrument: Instrument,
    /// Inputs `(a, y')`, output `y`.
    pub settings_map: ConditionalDistribution,
    /// Inputs `(b, a, y', y)`, output `b'`.
    pub outcome_map: ConditionalDistribution,
}

impl CndoSpec {
    pub fn new(
        instrument: Instrument,
        settings_map: ConditionalDistribution,
        outcome_map: ConditionalDistribution,
    ) -> Result<Self> {
        let na = instrument.outcomes();
        let pre = settings_map.input_sizes();
        if pre.len() != 2 || pre[0] != na {
            return Err(Error::InvalidDistribution(
                "settings map must have inputs (a, y')".into(),
            ));
        }
        let post = outcome_map.input_sizes();
        if post.len() != 4 || post[1] != na || post[2] != pre[1] || post[3] != settings_map.outputs() {
            return Err(Error::InvalidDistribution(
                "outcome map must have inputs (b, a, y', y)".into(),
            ));
        }
        Ok(Self {
            instrument,
            settings_map,
            outcome_map,
        })
    }

    /// The do-nothing operation on families with the given shape.
    pub fn identity(dim: usize, outcome_counts: &[usize]) -> Result<Self> {
        let ny = outcome_counts.len();
        let nb = outcome_counts.iter().copied().max().unwrap_or(1);
        let instrument = Instrument::new(dim, dim, vec![crate::channels::Channel::identity(dim).choi().clone()])?;
        Self::new(
            instrument,
            ConditionalDistribution::deterministic(vec![1, ny], ny, |i| i[1])?,
            ConditionalDistribution::deterministic(vec![nb, 1, ny, ny], nb, |i| i[0])?,
        )
    }

    /// Prepends the unitary channel `ρ ↦ UρU†`.
    pub fn unitary(u: &nalgebra::DMatrix<crate::qmat::C64>, outcome_counts: &[usize]) -> Result<Self> {
        let c = crate::channels::Channel::unitary(u)?;
        let mut spec = Self::identity(c.dim_in(), outcome_counts)?;
        spec.instrument = Instrument::new(c.dim_in(), c.dim_out(), vec![c.choi().clone()])?;
        Ok(spec)
    }

    /// Measures the parent of a jointly measurable target, discards the
    /// input to the original devices and post-processes the parent outcome.
    pub fn discard_and_remeasure(
        target: &JmCertificate,
        target_counts: &[usize],
        input_dim: usize,
        input_outcome_counts: &[usize],
    ) -> Result<Self> {
        let d = target.parents[0].dim();
        let rho0 = HermOp::maximally_mixed(input_dim);
        let blocks = target.parents.iter().map(|g| tensor(&g.transpose(), &rho0)).collect();
        let instrument = Instrument::new(d, input_dim, blocks)?;
        let na = target.parents.len();
        let nyp = target_counts.len();
        let nb = input_outcome_counts.iter().copied().max().unwrap_or(1);
        let nbp = target_counts.iter().copied().max().unwrap_or(1);
        let responses = target.responses.clone();
        Self::new(
            instrument,
            ConditionalDistribution::deterministic(vec![na, nyp], input_outcome_counts.len(), |_| 0)?,
            ConditionalDistribution::deterministic(vec![nb, na, nyp, input_outcome_counts.len()], nbp, |i| {
                responses[i[1]][i[2]]
            })?,
        )
    }
}

/// `F_{b'|y'} = Σ_{a,y,b} C_a†(E_{b|y}) p(y|a,y') p(b'|b,a,y',y)`.
pub fn cndo_apply(spec: &CndoSpec, fam: &MeasurementFamily) -> Result<MeasurementFamily> {
    let inst = &spec.instrument;
    if inst.dim_out != fam.dim() {
        return Err(Error::DimensionMismatch {
            expected: inst.dim_out,
            found: fam.dim(),
        });
    }
    let post = spec.outcome_map.input_sizes();
    let max_b = fam.outcome_counts().into_iter().max().unwrap_or(1);
    if spec.settings_map.outputs() != fam.settings() || post[0] < max_b {
        return Err(Error::InvalidArgument(
            "CNDO spec does not match the family shape".into(),
        ));
    }
    let (na, nyp, nbp) = (
        inst.outcomes(),
        spec.settings_map.input_sizes()[1],
        spec.outcome_map.outputs(),
    );
    // C_a†(E_{b|y}) computed once.
    let pulled: Vec<Vec<Vec<HermOp>>> = (0..na)
        .map(|a| {
            fam.povms()
                .iter()
                .map(|p| p.effects().iter().map(|e| inst.adjoint_apply(a, e)).collect())
                .collect()
        })
        .collect();
    let d = inst.dim_in;
    let povms = (0..nyp)
        .map(|yp| {
            let effects = (0..nbp)
                .map(|bp| {
                    let mut acc = HermOp::zeros(d);
                    for (a, pa) in pulled.iter().enumerate() {
                        for (y, py) in pa.iter().enumerate() {
                            let wy = spec.settings_map.prob(y, &[a, yp]);
                            if wy == 0.0 {
                                continue;
                            }
                            for (b, e) in py.iter().enumerate() {
                                let w = wy * spec.outcome_map.prob(bp, &[b, a, yp, y]);
                                if w != 0.0 {
                                    acc = &acc + &(e * w);
                                }
                            }
                        }
                    }
                    acc
                })
                .collect();
            Povm::new(effects)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementFamily::new(povms)
}

/// Bloch axis of a rank-one projective binary qubit measurement.
fn projective_axis(p: &Povm) -> Result<[f64; 3]> {
    const MSG: &str = "convertibility is decided only for pairs of distinct non-trivial two-outcome \
                       projective qubit measurements; all other pairs are jointly measurable";
    if p.dim() != 2 || p.outcomes() != 2 {
        return Err(Error::InvalidArgument(MSG.into()));
    }
    let (tr, r) = p.effect(0).bloch()?;
    if (tr - 1.0).abs() > 1e-9 || (norm3(r) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(MSG.into()));
    }
    Ok(r)
}

/// Acute angle between the lines spanned by two Bloch axes.
fn line_angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs();
    let cross = norm3([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]);
    cross.atan2(dot)
}

fn pair_angle(pair: (&Povm, &Povm)) -> Result<f64> {
    let a = projective_axis(pair.0)?;
    let b = projective_axis(pair.1)?;
    let angle = line_angle(a, b);
    if angle < 1e-9 {
        return Err(Error::InvalidArgument(
            "measurements in a pair must be distinct; identical axes are jointly measurable".into(),
        ));
    }
    Ok(angle)
}

/// Whether the pair `e` converts to the pair `f` under CNDO, which for these
/// pairs happens exactly when a unitary maps one onto the other up to
/// outcome relabeling.
pub fn cndo_convertible_qubit_pairs(e: (&Povm, &Povm), f: (&Povm, &Povm)) -> Result<bool> {
    Ok((pair_angle(e)? - pair_angle(f)?).abs() <= 1e-9)
}

/// `σ_{b|y} = E_{b|y}/d`.
pub fn scale_povms_to_assemblage(fam: &MeasurementFamily) -> Result<Assemblage> {
    let s = 1.0 / fam.dim() as f64;
    Assemblage::new(
        fam.povms()
            .iter()
            .map(|p| p.effects().iter().map(|e| e * s).collect())
            .collect(),
    )
}

/// `E_{b|y} = dσ_{b|y}`; requires the marginal `I/d`.
pub fn scale_assemblage_to_povms(a: &Assemblage) -> Result<MeasurementFamily> {
    let d = a.dim();
    let dev = a.marginal().max_abs_diff(&HermOp::maximally_mixed(d));
    if dev > NORMALIZATION_TOL {
        return Err(Error::InvalidAssemblage(format!(
            "marginal differs from I/d by {dev:e}; only maximally mixed marginals rescale to POVMs"
        )));
    }
    MeasurementFamily::from_effects(
        a.members()
            .iter()
            .map(|row| row.iter().map(|s| s * d as f64).collect())
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xz(eta: f64) -> MeasurementFamily {
        MeasurementFamily::new(vec![
            Povm::qubit_binary([eta, 0.0, 0.0]).unwrap(),
            Povm::qubit_binary([0.0, 0.0, eta]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn responses_enumerate_and_guard() {
        let r = response_functions(&[2, 3]).unwrap();
        assert_eq!(r.len(), 6);
        assert_eq!(r[1], vec![0, 1]);
        assert!(matches!(response_functions(&[2; 13]), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn single_setting_is_compatible() {
        let fam = MeasurementFamily::new(vec![Povm::computational(3)]).unwrap();
        let rep = is_jointly_measurable(&fam, &Tolerances::default()).unwrap();
        assert!(rep.jointly_measurable);
        assert!(rep.certificate.unwrap().residual(&fam) < 1e-7);
    }

    #[test]
    fn sharp_xz_is_incompatible_with_witness() {
        let fam = xz(1.0);
        let rep = is_jointly_measurable(&fam, &Tolerances::default()).unwrap();
        assert!(!rep.jointly_measurable);
        let w = rep.witness.unwrap();
        assert!(rep.witness_value.unwrap() > w.bound + 1e-6);
        // Satisfied by a compatible family.
        assert!(jm_inequality_value(&xz(0.6), &w.operators).unwrap() <= w.bound + 1e-7);
    }

    #[test]
    fn depolarized_xz_at_045_is_compatible() {
        let rep = is_jointly_measurable(&xz(0.45), &Tolerances::default()).unwrap();
        assert!(rep.jointly_measurable);
        assert!(rep.margin > 0.0);
    }

    #[test]
    fn busch_examples() {
        assert!(busch_pair_compatible([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]).unwrap());
        assert!(!busch_pair_compatible([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).unwrap());
        assert!(busch_pair_compatible([0.7, 0.0, 0.0], [0.0, 0.0, 0.7]).unwrap());
        assert!((busch_value([0.7, 0.0, 0.0], [0.0, 0.0, 0.7]) - 1.4 * 2f64.sqrt()).abs() < 1e-12);
        let biased = Povm::binary(HermOp::qubit(0.8, [0.1, 0.0, 0.0])).unwrap();
        assert!(busch_povms_compatible(&biased, &Povm::qubit_binary([0.0, 0.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn weight_zero_for_compatible() {
        let w = incompatible_weight(&xz(0.5), &Tolerances::default()).unwrap();
        assert!(w.weight.abs() < 1e-6, "{}", w.weight);
        let w = incompatible_weight(&xz(1.0), &Tolerances::default()).unwrap();
        assert!(w.weight > 0.1);
    }

    #[test]
    fn pauli_witness_values() {
        let w = pauli_pair_witness(HermOp::pauli_x(), HermOp::pauli_z());
        assert!((jm_inequality_value(&xz(1.0), &w.operators).unwrap() - 4.0).abs() < 1e-12);
        let zero = Witness::zero(2, &[2, 2]);
        assert_eq!(jm_inequality_value(&xz(1.0), &zero.operators).unwrap(), 0.0);
        let t = translate_steering_inequality(&w.operators, std::f64::consts::SQRT_2, 2);
        assert!((t.bound - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(translate_steering_inequality(&w.operators, 0.0, 2).bound, 0.0);
        assert_eq!(translate_steering_inequality(&w.operators, 1.5, 1).bound, 1.5);
    }

    #[test]
    fn identity_cndo_is_identity() {
        let fam = xz(0.9);
        let spec = CndoSpec::identity(2, &fam.outcome_counts()).unwrap();
        assert!(cndo_apply(&spec, &fam).unwrap().max_abs_diff(&fam) < 1e-12);
    }

    #[test]
    fn convertibility_examples() {
        let x = Povm::qubit_binary([1.0, 0.0, 0.0]).unwrap();
        let z = Povm::qubit_binary([0.0, 0.0, 1.0]).unwrap();
        let eps: f64 = 0.04;
        let t = Povm::qubit_binary([(1.0 - eps).sqrt(), 0.0, eps.sqrt()]).unwrap();
        assert!(cndo_convertible_qubit_pairs((&x, &z), (&x, &z)).unwrap());
        assert!(!cndo_convertible_qubit_pairs((&x, &z), (&x, &t)).unwrap());
        assert!(!cndo_convertible_qubit_pairs((&x, &t), (&x, &z)).unwrap());
        assert!(cndo_convertible_qubit_pairs((&x, &x), (&x, &z)).is_err());
        let noisy = Povm::qubit_binary([0.9, 0.0, 0.0]).unwrap();
        assert!(cndo_convertible_qubit_pairs((&noisy, &z), (&x, &z)).is_err());
    }

    #[test]
    fn scaling_round_trip() {
        let fam = xz(1.0);
        let a = scale_povms_to_assemblage(&fam).unwrap();
        assert!(scale_assemblage_to_povms(&a).unwrap().max_abs_diff(&fam) < 1e-15);
    }
}
