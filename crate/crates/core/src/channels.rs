//! Channels stored as Choi operators.
//!
//! The Choi operator of `C: L(A) → L(B)` is `J = Σ_ij |i⟩⟨j| ⊗ C(|i⟩⟨j|)` on
//! `A ⊗ B`. It has trace `d_A` and input marginal `tr_B J = I`, so
//! `C(ρ) = tr_A((ρᵀ ⊗ I) J)` and `C†(E) = tr_B((I ⊗ E) J)ᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{
    partial_trace, partial_transpose, tensor, ConditionalDistribution, HermOp, MeasurementFamily, Povm, Subsystem, C64,
    NORMALIZATION_TOL, PSD_TOL,
};
use crate::steering::Assemblage;

/// Completely positive trace-preserving map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelJson", into = "ChannelJson")]
pub struct Channel {
    dim_in: usize,
    dim_out: usize,
    choi: HermOp,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ChannelJson {
    dim_in: usize,
    dim_out: usize,
    choi: HermOp,
}

impl TryFrom<ChannelJson> for Channel {
    type Error = Error;
    fn try_from(j: ChannelJson) -> Result<Self> {
        Channel::new(j.dim_in, j.dim_out, j.choi)
    }
}

impl From<Channel> for ChannelJson {
    fn from(c: Channel) -> Self {
        Self {
            dim_in: c.dim_in,
            dim_out: c.dim_out,
            choi: c.choi,
        }
    }
}

impl Channel {
    /// Validates complete positivity and trace preservation of `choi`.
    pub fn new(dim_in: usize, dim_out: usize, choi: HermOp) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 {
            return Err(Error::BadDimension(0));
        }
        if choi.dim() != dim_in * dim_out {
            return Err(Error::DimensionMismatch {
                expected: dim_in * dim_out,
                found: choi.dim(),
            });
        }
        let min = choi.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidChannel(format!("Choi operator has eigenvalue {min:e}")));
        }
        let marginal = partial_trace(&choi, (dim_in, dim_out), Subsystem::A)?;
        let dev = marginal.max_abs_diff(&HermOp::identity(dim_in));
        if dev > NORMALIZATION_TOL {
            return Err(Error::InvalidChannel(format!(
                "input marginal differs from the identity by {dev:e}"
            )));
        }
        Ok(Self { dim_in, dim_out, choi })
    }

    /// `ρ ↦ Σ_k K_k ρ K_k†`; every Kraus operator is `dim_out × dim_in`.
    pub fn from_kraus(kraus: &[DMatrix<C64>]) -> Result<Self> {
        let Some(k0) = kraus.first() else {
            return Err(Error::InvalidChannel("no Kraus operators".into()));
        };
        let (dout, din) = k0.shape();
        let mut j = DMatrix::<C64>::zeros(din * dout, din * dout);
        for k in kraus {
            if k.shape() != (dout, din) {
                return Err(Error::InvalidChannel("Kraus operators differ in shape".into()));
            }
            let v = DVector::from_fn(din * dout, |r, _| k[(r % dout, r / dout)]);
            j += &v * v.adjoint();
        }
        Self::new(din, dout, HermOp::hermitize(j))
    }

    pub fn identity(d: usize) -> Self {
        Self::unitary(&DMatrix::identity(d, d)).expect("identity is unitary")
    }

    pub fn unitary(u: &DMatrix<C64>) -> Result<Self> {
        Self::from_kraus(std::slice::from_ref(u))
    }

    /// Replaces every input by `rho`.
    pub fn constant(dim_in: usize, rho: &HermOp) -> Result<Self> {
        Self::new(dim_in, rho.dim(), tensor(&HermOp::identity(dim_in), rho))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn choi(&self) -> &HermOp {
        &self.choi
    }

    pub fn apply(&self, rho: &HermOp) -> Result<HermOp> {
        check_dim(self.dim_in, rho.dim())?;
        Ok(apply_choi(&self.choi, self.dim_in, self.dim_out, rho))
    }

    pub fn adjoint_apply(&self, e: &HermOp) -> Result<HermOp> {
        check_dim(self.dim_out, e.dim())?;
        Ok(adjoint_choi(&self.choi, self.dim_in, self.dim_out, e))
    }

    /// `C₂ ∘ C₁` with `self = C₁`.
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        check_dim(next.dim_in, self.dim_out)?;
        let d = self.dim_in;
        let mut j = HermOp::zeros(d * next.dim_out);
        for i in 0..d {
            for k in 0..d {
                let unit = elementary(d, i, k);
                let out = apply_general(&self.choi, d, self.dim_out, &unit);
                let out = apply_general(&next.choi, next.dim_in, next.dim_out, &out);
                let block = unit.kronecker(&out);
                j = &j + &HermOp::hermitize(block);
            }
        }
        Channel::new(d, next.dim_out, j)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn elementary(d: usize, i: usize, k: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d, d);
    m[(i, k)] = C64::new(1.0, 0.0);
    m
}

/// `tr_A((ρᵀ ⊗ I) J)` for a general (not necessarily Hermitian) `ρ`.
fn apply_general(choi: &HermOp, din: usize, dout: usize, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let j = choi.matrix();
    DMatrix::from_fn(dout, dout, |k, l| {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..din {
            for jj in 0..din {
                let r = rho[(i, jj)];
                if r != C64::new(0.0, 0.0) {
                    acc += r * j[(i * dout + k, jj * dout + l)];
                }
            }
        }
        acc
    })
}

pub(crate) fn apply_choi(choi: &HermOp, din: usize, dout: usize, rho: &HermOp) -> HermOp {
    HermOp::hermitize(apply_general(choi, din, dout, rho.matrix()))
}

pub(crate) fn adjoint_choi(choi: &HermOp, din: usize, dout: usize, e: &HermOp) -> HermOp {
    let j = choi.matrix();
    let em = e.matrix();
    HermOp::hermitize(DMatrix::from_fn(din, din, |a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..dout {
            for l in 0..dout {
                acc += em[(k, l)] * j[(b * dout + l, a * dout + k)];
            }
        }
        acc
    }))
}

/// Measure-and-prepare form `C(ρ) = Σ_λ tr(E_λ ρ) ρ_λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EbJson", into = "EbJson")]
pub struct EbDecomposition {
    measure: Povm,
    prepare: Vec<HermOp>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct EbJson {
    measure_povm: Povm,
    prepare_states: Vec<HermOp>,
}

impl TryFrom<EbJson> for EbDecomposition {
    type Error = Error;
    fn try_from(j: EbJson) -> Result<Self> {
        EbDecomposition::new(j.measure_povm, j.prepare_states)
    }
}

impl From<EbDecomposition> for EbJson {
    fn from(d: EbDecomposition) -> Self {
        Self {
            measure_povm: d.measure,
            prepare_states: d.prepare,
        }
    }
}

impl EbDecomposition {
    pub fn new(measure: Povm, prepare: Vec<HermOp>) -> Result<Self> {
        if measure.outcomes() != prepare.len() {
            return Err(Error::InvalidChannel(format!(
                "{} outcomes but {} prepared states",
                measure.outcomes(),
                prepare.len()
            )));
        }
        let dout = prepare[0].dim();
        for (k, rho) in prepare.iter().enumerate() {
            check_dim(dout, rho.dim())?;
            if !rho.is_psd(PSD_TOL) || (rho.trace() - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::InvalidChannel(format!(
                    "prepared state {k} is not a density operator"
                )));
            }
        }
        Ok(Self { measure, prepare })
    }

    pub fn measure(&self) -> &Povm {
        &self.measure
    }

    pub fn prepare(&self) -> &[HermOp] {
        &self.prepare
    }

    pub fn dim_in(&self) -> usize {
        self.measure.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.prepare[0].dim()
    }

    pub fn apply(&self, rho: &HermOp) -> Result<HermOp> {
        check_dim(self.dim_in(), rho.dim())?;
        Ok(self
            .measure
            .effects()
            .iter()
            .zip(&self.prepare)
            .fold(HermOp::zeros(self.dim_out()), |acc, (e, s)| &acc + &(s * e.inner(rho))))
    }

    /// `C†(E) = Σ_λ E_λ tr(E ρ_λ)`.
    pub fn adjoint_apply(&self, e: &HermOp) -> Result<HermOp> {
        check_dim(self.dim_out(), e.dim())?;
        Ok(self
            .measure
            .effects()
            .iter()
            .zip(&self.prepare)
            .fold(HermOp::zeros(self.dim_in()), |acc, (m, s)| &acc + &(m * s.inner(e))))
    }
}

/// `J = Σ_λ E_λᵀ ⊗ ρ_λ`.
pub fn from_eb(d: &EbDecomposition) -> Result<Channel> {
    let (din, dout) = (d.dim_in(), d.dim_out());
    let choi = d
        .measure
        .effects()
        .iter()
        .zip(&d.prepare)
        .fold(HermOp::zeros(din * dout), |acc, (e, s)| {
            &acc + &tensor(&e.transpose(), s)
        });
    Channel::new(din, dout, choi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EbVerdict {
    Yes,
    No,
    Undetermined,
}

/// Smallest eigenvalue of the partially transposed Choi operator; nonnegative
/// exactly when the Choi operator is PPT.
pub fn ppt_margin(c: &Channel) -> f64 {
    partial_transpose(&c.choi, (c.dim_in, c.dim_out), Subsystem::B)
        .expect("Choi dimensions are consistent")
        .min_eigenvalue()
}

/// PPT test on the Choi operator, exact for `d_in · d_out ≤ 6`.
pub fn is_entanglement_breaking(c: &Channel) -> EbVerdict {
    let ppt = ppt_margin(c) >= -PSD_TOL;
    match (ppt, c.dim_in * c.dim_out <= 6) {
        (false, _) => EbVerdict::No,
        (true, true) => EbVerdict::Yes,
        (true, false) => EbVerdict::Undetermined,
    }
}

/// Qubit depolarizing channel `ρ ↦ pρ + (1 − p) I/2`.
pub fn depolarizing(p: f64) -> Result<Channel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "depolarizing parameter {p} outside [0, 1]"
        )));
    }
    let mut omega = DMatrix::<C64>::zeros(4, 4);
    for (a, b) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        omega[(a, b)] = C64::new(1.0, 0.0);
    }
    let choi = &(HermOp::hermitize(omega) * p) + &(HermOp::identity(4) * ((1.0 - p) / 2.0));
    Channel::new(2, 2, choi)
}

/// `E_{b|y} = C†(Ẽ_{b|y})`.
pub fn induced_measurements(c: &Channel, device: &MeasurementFamily) -> Result<MeasurementFamily> {
    check_dim(c.dim_out, device.dim())?;
    device.map_effects(|e| adjoint_choi(&c.choi, c.dim_in, c.dim_out, e))
}

/// EB channel `ρ ↦ Σ_x ⟨x|ρ|x⟩ ρ_x` reproducing the given outputs on basis inputs.
pub fn simulate_untrusted_alice(outputs: &[HermOp]) -> Result<EbDecomposition> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument("no output states".into()));
    }
    EbDecomposition::new(Povm::computational(outputs.len()), outputs.to_vec())
}

/// Dephasing channel on `|X|` basis states plus Bob's family
/// `{Σ_x p(b|x,y) |x⟩⟨x|}`, reproducing any table `p(b|x,y)`.
///
/// The table is indexed with inputs `(x, y)` and output `b`.
pub fn simulate_both_untrusted(p: &ConditionalDistribution) -> Result<(EbDecomposition, MeasurementFamily)> {
    let [nx, ny] = p.input_sizes() else {
        return Err(Error::InvalidDistribution("expected inputs (x, y)".into()));
    };
    let (nx, ny, nb) = (*nx, *ny, p.outputs());
    let channel = EbDecomposition::new(
        Povm::computational(nx),
        (0..nx).map(|x| HermOp::basis_projector(nx, x)).collect(),
    )?;
    let family = MeasurementFamily::from_effects(
        (0..ny)
            .map(|y| {
                (0..nb)
                    .map(|b| HermOp::diag(&(0..nx).map(|x| p.prob(b, &[x, y])).collect::<Vec<_>>()))
                    .collect()
            })
            .collect(),
    )?;
    Ok((channel, family))
}

/// `p(b|x,y) = tr(Ẽ_{b|y} C(|x⟩⟨x|))` for an EB channel and a device family.
pub fn outcome_table(c: &EbDecomposition, bob: &MeasurementFamily) -> Result<ConditionalDistribution> {
    let nx = c.dim_in();
    let outs: Vec<HermOp> = (0..nx)
        .map(|x| c.apply(&HermOp::basis_projector(nx, x)))
        .collect::<Result<_>>()?;
    let nb = bob.outcome_counts().into_iter().max().unwrap_or(1);
    ConditionalDistribution::from_fn(vec![nx, bob.settings()], nb, |i, b| {
        let povm = bob.povm(i[1]);
        if b < povm.outcomes() {
            povm.effect(b).inner(&outs[i[0]])
        } else {
            0.0
        }
    })
}

/// `σ_{b|y} = C†(Ẽ_{b|y})ᵀ / d`: Bob steering Alice on the normalized Choi state.
pub fn steered_assemblage_from_choi(c: &Channel, bob: &MeasurementFamily) -> Result<Assemblage> {
    check_dim(c.dim_out, bob.dim())?;
    let d = c.dim_in as f64;
    Assemblage::new(
        bob.povms()
            .iter()
            .map(|p| {
                p.effects()
                    .iter()
                    .map(|e| adjoint_choi(&c.choi, c.dim_in, c.dim_out, e).transpose() * (1.0 / d))
                    .collect()
            })
            .collect(),
    )
}
