//! Dense complex Hermitian linear algebra and the quantum objects built on it.
//!
//! Every operator in the crate is a [`HermOp`]: a validated `dim × dim`
//! Hermitian matrix with `dim ≤ 256`. Inputs are checked, never repaired:
//! Hermiticity must hold to [`HERMITIAN_TOL`] and positivity to
//! [`PSD_TOL`]. Operators produced internally by arithmetic are re-symmetrized
//! instead, since rounding can break exact Hermiticity.
//!
//! Bipartite operators use the ordering `A ⊗ B` with `A` the left (slow)
//! index, matching `nalgebra`'s Kronecker product.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported operator dimension.
pub const MAX_DIM: usize = 256;
/// Allowed entrywise deviation from Hermiticity for user-supplied operators.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalue floor for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-9;
/// Normalization tolerance for POVM completeness and ensemble traces.
pub const NORMALIZATION_TOL: f64 = 1e-9;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        Err(Error::BadDimension(d))
    } else {
        Ok(())
    }
}

/// Finite-dimensional complex Hermitian operator.
#[derive(Clone, PartialEq)]
pub struct HermOp {
    mat: DMatrix<C64>,
}

impl fmt::Debug for HermOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermOp({}x{}) ", self.dim(), self.dim())?;
        f.debug_list()
            .entries(self.mat.row_iter().map(|r| {
                r.iter()
                    .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
                    .collect::<Vec<_>>()
            }))
            .finish()
    }
}

/// Eigendecomposition of a [`HermOp`], eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<C64>,
}

/// Which norm to evaluate on a Hermitian operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Sum of absolute eigenvalues.
    Trace,
    /// Largest absolute eigenvalue.
    Operator,
}

/// Subsystem tag for bipartite operations on `A ⊗ B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

impl HermOp {
    /// Validates that `mat` is square, of supported size and Hermitian to
    /// within [`HERMITIAN_TOL`].
    pub fn new(mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        check_dim(mat.nrows())?;
        let dev = hermiticity_deviation(&mat);
        if dev > HERMITIAN_TOL || !dev.is_finite() {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::hermitize(mat))
    }

    /// Builds from computed data, projecting onto the Hermitian part.
    pub(crate) fn hermitize(mat: DMatrix<C64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        let adj = mat.adjoint();
        Self {
            mat: (mat + adj).map(|z| z * 0.5),
        }
    }

    pub fn from_real(mat: &DMatrix<f64>) -> Result<Self> {
        Self::new(mat.map(|x| C64::new(x, 0.0)))
    }

    /// Row-major real entries; convenient for literals in tests and docs.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("matrix rows must have equal length".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0)))
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            mat: DMatrix::from_element(d, d, ZERO),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mat: DMatrix::identity(d, d),
        }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::identity(d) * (1.0 / d as f64)
    }

    pub fn diag(values: &[f64]) -> Self {
        let d = values.len();
        Self {
            mat: DMatrix::from_fn(d, d, |i, j| if i == j { C64::new(values[i], 0.0) } else { ZERO }),
        }
    }

    /// `|k⟩⟨k|` in dimension `d`.
    pub fn basis_projector(d: usize, k: usize) -> Self {
        let mut values = vec![0.0; d];
        values[k] = 1.0;
        Self::diag(&values)
    }

    pub fn projector(psi: &PureState) -> Self {
        let v = &psi.amps;
        Self::hermitize(v * v.adjoint())
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("valid literal")
    }

    pub fn pauli_y() -> Self {
        Self {
            mat: DMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]),
        }
    }

    pub fn pauli_z() -> Self {
        Self::diag(&[1.0, -1.0])
    }

    /// `(a·I + r·σ)/2` on a qubit.
    pub fn qubit(a: f64, r: [f64; 3]) -> Self {
        (Self::identity(2) * a + Self::pauli_x() * r[0] + Self::pauli_y() * r[1] + Self::pauli_z() * r[2]) * 0.5
    }

    /// Inverse of [`HermOp::qubit`]: returns `(tr E, r)` with `r_k = tr(σ_k E)`.
    pub fn bloch(&self) -> Result<(f64, [f64; 3])> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: self.dim(),
            });
        }
        Ok((
            self.trace(),
            [
                self.inner(&Self::pauli_x()),
                self.inner(&Self::pauli_y()),
                self.inner(&Self::pauli_z()),
            ],
        ))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    /// `tr(AB)`, real for Hermitian `A`, `B`.
    pub fn inner(&self, other: &HermOp) -> f64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        // tr(AB) = Σ_ij A_ij B_ji = Σ_ij A_ij conj(B_ij)
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn transpose(&self) -> HermOp {
        Self {
            mat: self.mat.transpose(),
        }
    }

    /// `U A U†` for an arbitrary (not necessarily unitary) square `U`.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> HermOp {
        Self::hermitize(u * &self.mat * u.adjoint())
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &HermOp) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn eig(&self) -> Eigen {
        eig(self)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.mat.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("dim >= 1")
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        norm(self, kind)
    }

    pub fn trace_norm(&self) -> f64 {
        norm(self, NormKind::Trace)
    }

    pub fn operator_norm(&self) -> f64 {
        norm(self, NormKind::Operator)
    }

    /// Positive square root; negative eigenvalues are clamped to zero.
    pub fn sqrt_psd(&self) -> HermOp {
        self.map_spectrum(|x| x.max(0.0).sqrt())
    }

    /// Applies `f` to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermOp {
        let e = self.eig();
        let d = self.dim();
        let mut out = DMatrix::from_element(d, d, ZERO);
        for (k, &lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(k);
            out += (v * v.adjoint()) * C64::new(f(lam), 0.0);
        }
        Self::hermitize(out)
    }

    /// Product `AB` as a plain matrix (not Hermitian in general).
    pub fn product(&self, other: &HermOp) -> DMatrix<C64> {
        &self.mat * &other.mat
    }
}

fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

impl Add for &HermOp {
    type Output = HermOp;
    fn add(self, rhs: &HermOp) -> HermOp {
        HermOp {
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl Add for HermOp {
    type Output = HermOp;
    fn add(self, rhs: HermOp) -> HermOp {
        HermOp {
            mat: self.mat + rhs.mat,
        }
    }
}

impl Sub for &HermOp {
    type Output = HermOp;
    fn sub(self, rhs: &HermOp) -> HermOp {
        HermOp {
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl Sub for HermOp {
    type Output = HermOp;
    fn sub(self, rhs: HermOp) -> HermOp {
        HermOp {
            mat: self.mat - rhs.mat,
        }
    }
}

impl Mul<f64> for HermOp {
    type Output = HermOp;
    fn mul(self, rhs: f64) -> HermOp {
        HermOp {
            mat: self.mat * C64::new(rhs, 0.0),
        }
    }
}

impl Mul<f64> for &HermOp {
    type Output = HermOp;
    fn mul(self, rhs: f64) -> HermOp {
        HermOp {
            mat: &self.mat * C64::new(rhs, 0.0),
        }
    }
}

impl Neg for HermOp {
    type Output = HermOp;
    fn neg(self) -> HermOp {
        self * -1.0
    }
}

/// Sum of a nonempty list of operators of equal dimension.
pub fn sum<'a>(ops: impl IntoIterator<Item = &'a HermOp>, d: usize) -> HermOp {
    ops.into_iter().fold(HermOp::zeros(d), |acc, op| &acc + op)
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &HermOp, b: &HermOp) -> HermOp {
    HermOp {
        mat: a.mat.kronecker(&b.mat),
    }
}

fn check_bipartite(op: &HermOp, dims: (usize, usize)) -> Result<()> {
    if dims.0 * dims.1 != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: dims.0 * dims.1,
            found: op.dim(),
        });
    }
    Ok(())
}

/// Traces out one factor of `op` on `A ⊗ B` and returns the factor `keep`.
pub fn partial_trace(op: &HermOp, dims: (usize, usize), keep: Subsystem) -> Result<HermOp> {
    check_bipartite(op, dims)?;
    let (da, db) = dims;
    let m = &op.mat;
    let out = match keep {
        Subsystem::A => DMatrix::from_fn(da, da, |i, j| (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()),
        Subsystem::B => DMatrix::from_fn(db, db, |i, j| (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()),
    };
    Ok(HermOp::hermitize(out))
}

/// Transposes the factor `which` of `op` on `A ⊗ B`.
pub fn partial_transpose(op: &HermOp, dims: (usize, usize), which: Subsystem) -> Result<HermOp> {
    check_bipartite(op, dims)?;
    let (_, db) = dims;
    let m = &op.mat;
    let n = op.dim();
    let out = DMatrix::from_fn(n, n, |r, c| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (c / db, c % db);
        match which {
            Subsystem::A => m[(j * db + k, i * db + l)],
            Subsystem::B => m[(i * db + l, j * db + k)],
        }
    });
    Ok(HermOp { mat: out })
}

pub fn eig(op: &HermOp) -> Eigen {
    let se = SymmetricEigen::new(op.mat.clone());
    let mut order: Vec<usize> = (0..op.dim()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(op.dim(), op.dim(), |i, j| se.eigenvectors[(i, order[j])]);
    Eigen { values, vectors }
}

pub fn norm(op: &HermOp, kind: NormKind) -> f64 {
    let ev = op.eigenvalues();
    match kind {
        NormKind::Trace => ev.iter().map(|x| x.abs()).sum(),
        NormKind::Operator => ev.iter().map(|x| x.abs()).fold(0.0, f64::max),
    }
}

pub fn trace_norm(op: &HermOp) -> f64 {
    norm(op, NormKind::Trace)
}

pub fn operator_norm(op: &HermOp) -> f64 {
    norm(op, NormKind::Operator)
}

/// Largest singular value of a general square matrix.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    HermOp::hermitize(m.adjoint() * m).max_eigenvalue().max(0.0).sqrt()
}

/// Orthonormal basis of the real vector space of `d × d` Hermitian matrices
/// under `⟨A, B⟩ = tr(AB)`; `d²` elements.
pub fn hermitian_basis(d: usize) -> Vec<HermOp> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(HermOp::basis_projector(d, i));
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut m = DMatrix::from_element(d, d, ZERO);
            m[(i, j)] = C64::new(s, 0.0);
            m[(j, i)] = C64::new(s, 0.0);
            out.push(HermOp { mat: m });
            let mut m = DMatrix::from_element(d, d, ZERO);
            m[(i, j)] = C64::new(0.0, s);
            m[(j, i)] = C64::new(0.0, -s);
            out.push(HermOp { mat: m });
        }
    }
    out
}

/// Normalized pure state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: DVector<C64>,
}

impl PureState {
    /// Validates unit norm to within `1e-12`.
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let n2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (n2 - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(n2.sqrt()));
        }
        Ok(Self { amps })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(amps: DVector<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        let n = amps.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self {
            amps: amps / C64::new(n, 0.0),
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(DVector::from_iterator(
            amps.len(),
            amps.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub fn basis(d: usize, k: usize) -> Self {
        let mut v = DVector::from_element(d, ZERO);
        v[k] = ONE;
        Self { amps: v }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> HermOp {
        HermOp::projector(self)
    }

    /// `⟨ψ|E|ψ⟩`.
    pub fn expectation(&self, e: &HermOp) -> f64 {
        (self.amps.adjoint() * e.matrix() * &self.amps)[(0, 0)].re
    }
}

/// Positive operator-valued measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    effects: Vec<HermOp>,
}

impl Povm {
    /// Validates positivity of every effect and completeness.
    pub fn new(effects: Vec<HermOp>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(Error::InvalidPovm("no effects".into()));
        };
        let d = first.dim();
        for (k, e) in effects.iter().enumerate() {
            if e.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: e.dim(),
                });
            }
            let m = e.min_eigenvalue();
            if m < -PSD_TOL {
                return Err(Error::InvalidPovm(format!("effect {k} has eigenvalue {m:e}")));
            }
        }
        let dev = sum(&effects, d).max_abs_diff(&HermOp::identity(d));
        if dev > NORMALIZATION_TOL {
            return Err(Error::InvalidPovm(format!(
                "effects sum to identity only within {dev:e}"
            )));
        }
        Ok(Self { effects })
    }

    /// The trivial one-outcome measurement `{I}`.
    pub fn trivial(d: usize) -> Self {
        Self {
            effects: vec![HermOp::identity(d)],
        }
    }

    /// Projective measurement in the computational basis.
    pub fn computational(d: usize) -> Self {
        Self {
            effects: (0..d).map(|k| HermOp::basis_projector(d, k)).collect(),
        }
    }

    /// Unbiased binary qubit measurement `{(I + r·σ)/2, (I − r·σ)/2}`.
    pub fn qubit_binary(r: [f64; 3]) -> Result<Self> {
        Self::new(vec![HermOp::qubit(1.0, r), HermOp::qubit(1.0, [-r[0], -r[1], -r[2]])])
    }

    /// Two-outcome measurement `{E, I − E}`.
    pub fn binary(e: HermOp) -> Result<Self> {
        let rest = &HermOp::identity(e.dim()) - &e;
        Self::new(vec![e, rest])
    }

    pub fn dim(&self) -> usize {
        self.effects[0].dim()
    }

    pub fn outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn effects(&self) -> &[HermOp] {
        &self.effects
    }

    pub fn effect(&self, b: usize) -> &HermOp {
        &self.effects[b]
    }

    /// `E ↦ ηE + (1 − η) tr(E) I/d`.
    pub fn depolarized(&self, eta: f64) -> Result<Povm> {
        let d = self.dim();
        Povm::new(
            self.effects
                .iter()
                .map(|e| e * eta + HermOp::identity(d) * ((1.0 - eta) * e.trace() / d as f64))
                .collect(),
        )
    }
}

/// Indexed set of POVMs `{E_{b|y}}` on a common space.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementFamily {
    dim: usize,
    povms: Vec<Povm>,
}

impl MeasurementFamily {
    pub fn new(povms: Vec<Povm>) -> Result<Self> {
        let Some(first) = povms.first() else {
            return Err(Error::InvalidPovm("family has no settings".into()));
        };
        let dim = first.dim();
        if let Some(p) = povms.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        Ok(Self { dim, povms })
    }

    /// Validates each setting's effects as a POVM.
    pub fn from_effects(effects: Vec<Vec<HermOp>>) -> Result<Self> {
        Self::new(effects.into_iter().map(Povm::new).collect::<Result<_>>()?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn settings(&self) -> usize {
        self.povms.len()
    }

    pub fn povms(&self) -> &[Povm] {
        &self.povms
    }

    pub fn povm(&self, y: usize) -> &Povm {
        &self.povms[y]
    }

    pub fn outcome_counts(&self) -> Vec<usize> {
        self.povms.iter().map(Povm::outcomes).collect()
    }

    pub fn effect(&self, y: usize, b: usize) -> &HermOp {
        self.povms[y].effect(b)
    }

    /// Applies `f` to every effect and revalidates.
    pub fn map_effects(&self, f: impl Fn(&HermOp) -> HermOp) -> Result<Self> {
        Self::from_effects(
            self.povms
                .iter()
                .map(|p| p.effects().iter().map(&f).collect())
                .collect(),
        )
    }

    pub fn depolarized(&self, eta: f64) -> Result<Self> {
        Self::new(self.povms.iter().map(|p| p.depolarized(eta)).collect::<Result<_>>()?)
    }

    /// Restriction to the listed settings, in the given order.
    pub fn subfamily(&self, settings: &[usize]) -> Result<Self> {
        Self::new(settings.iter().map(|&y| self.povms[y].clone()).collect())
    }

    /// Largest entrywise difference between corresponding effects.
    pub fn max_abs_diff(&self, other: &MeasurementFamily) -> f64 {
        assert_eq!(self.outcome_counts(), other.outcome_counts());
        self.povms
            .iter()
            .zip(&other.povms)
            .flat_map(|(p, q)| p.effects().iter().zip(q.effects()).map(|(a, b)| a.max_abs_diff(b)))
            .fold(0.0, f64::max)
    }
}

/// Ensemble of sub-normalized states whose traces are the prior probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    states: Vec<HermOp>,
}

impl Ensemble {
    pub fn new(states: Vec<HermOp>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        };
        let d = first.dim();
        for s in &states {
            if s.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: s.dim(),
                });
            }
            let m = s.min_eigenvalue();
            if m < -PSD_TOL {
                return Err(Error::NotPsd(m));
            }
        }
        let total: f64 = states.iter().map(HermOp::trace).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[HermOp] {
        &self.states
    }

    /// `Σ_x ρ_x`.
    pub fn average(&self) -> HermOp {
        sum(&self.states, self.dim())
    }
}

/// Conditional probability table `p(output | inputs)`.
///
/// Entries are stored row-major over the inputs, then the output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionJson", into = "DistributionJson")]
pub struct ConditionalDistribution {
    input_sizes: Vec<usize>,
    outputs: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    inputs: Vec<usize>,
    outputs: usize,
    probs: Vec<f64>,
}

impl TryFrom<DistributionJson> for ConditionalDistribution {
    type Error = Error;
    fn try_from(j: DistributionJson) -> Result<Self> {
        Self::new(j.inputs, j.outputs, j.probs)
    }
}

impl From<ConditionalDistribution> for DistributionJson {
    fn from(p: ConditionalDistribution) -> Self {
        Self {
            inputs: p.input_sizes,
            outputs: p.outputs,
            probs: p.probs,
        }
    }
}

impl ConditionalDistribution {
    pub fn new(input_sizes: Vec<usize>, outputs: usize, probs: Vec<f64>) -> Result<Self> {
        let rows: usize = input_sizes.iter().product();
        if outputs == 0 || probs.len() != rows * outputs {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries, found {}",
                rows * outputs,
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| p.is_nan() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("negative or NaN entry {p}")));
        }
        for r in 0..rows {
            let s: f64 = probs[r * outputs..(r + 1) * outputs].iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidDistribution(format!("row {r} sums to {s}")));
            }
        }
        Ok(Self {
            input_sizes,
            outputs,
            probs,
        })
    }

    /// Tabulates `f(inputs, output)`.
    pub fn from_fn(input_sizes: Vec<usize>, outputs: usize, f: impl Fn(&[usize], usize) -> f64) -> Result<Self> {
        let rows: usize = input_sizes.iter().product();
        let mut probs = Vec::with_capacity(rows * outputs);
        let mut idx = vec![0usize; input_sizes.len()];
        for _ in 0..rows {
            for o in 0..outputs {
                probs.push(f(&idx, o));
            }
            increment(&mut idx, &input_sizes);
        }
        Self::new(input_sizes, outputs, probs)
    }

    /// Deterministic table `p(o | inputs) = [o = f(inputs)]`.
    pub fn deterministic(input_sizes: Vec<usize>, outputs: usize, f: impl Fn(&[usize]) -> usize) -> Result<Self> {
        Self::from_fn(input_sizes, outputs, |i, o| if f(i) == o { 1.0 } else { 0.0 })
    }

    pub fn input_sizes(&self) -> &[usize] {
        &self.input_sizes
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn prob(&self, output: usize, inputs: &[usize]) -> f64 {
        assert_eq!(inputs.len(), self.input_sizes.len());
        let mut row = 0;
        for (i, (&v, &n)) in inputs.iter().zip(&self.input_sizes).enumerate() {
            assert!(v < n, "input {i} out of range");
            row = row * n + v;
        }
        self.probs[row * self.outputs + output]
    }
}

/// Odometer increment over mixed radices (last index fastest).
pub(crate) fn increment(idx: &mut [usize], radices: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < radices[k] {
            return;
        }
        idx[k] = 0;
    }
}

// JSON wire formats shared across the crate.

/// `{"dim": n, "entries": [[[re, im], ...], ...]}`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl From<&HermOp> for MatrixJson {
    fn from(op: &HermOp) -> Self {
        Self {
            dim: op.dim(),
            entries: op
                .matrix()
                .row_iter()
                .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }
}

impl TryFrom<MatrixJson> for HermOp {
    type Error = Error;
    fn try_from(j: MatrixJson) -> Result<Self> {
        check_dim(j.dim)?;
        if j.entries.len() != j.dim {
            return Err(Error::DimensionMismatch {
                expected: j.dim,
                found: j.entries.len(),
            });
        }
        if let Some(r) = j.entries.iter().find(|r| r.len() != j.dim) {
            return Err(Error::DimensionMismatch {
                expected: j.dim,
                found: r.len(),
            });
        }
        HermOp::new(DMatrix::from_fn(j.dim, j.dim, |i, k| {
            let [re, im] = j.entries[i][k];
            C64::new(re, im)
        }))
    }
}

impl Serialize for HermOp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermOp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = MatrixJson::deserialize(d)?;
        HermOp::try_from(j).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct PureStateJson {
    dim: usize,
    amps: Vec<[f64; 2]>,
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PureStateJson {
            dim: self.dim(),
            amps: self.amps.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PureStateJson::deserialize(d)?;
        if j.amps.len() != j.dim {
            return Err(serde::de::Error::custom(Error::DimensionMismatch {
                expected: j.dim,
                found: j.amps.len(),
            }));
        }
        PureState::new(DVector::from_iterator(
            j.dim,
            j.amps.iter().map(|a| C64::new(a[0], a[1])),
        ))
        .map_err(serde::de::Error::custom)
    }
}

/// `{"dim": d, "povms": [[<matrix>, ...], ...]}`.
#[derive(Serialize, Deserialize)]
struct FamilyJson {
    dim: usize,
    povms: Vec<Vec<HermOp>>,
}

impl Serialize for MeasurementFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilyJson {
            dim: self.dim,
            povms: self.povms.iter().map(|p| p.effects.clone()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = FamilyJson::deserialize(d)?;
        let fam = MeasurementFamily::from_effects(j.povms).map_err(serde::de::Error::custom)?;
        if fam.dim != j.dim {
            return Err(serde::de::Error::custom(Error::DimensionMismatch {
                expected: j.dim,
                found: fam.dim,
            }));
        }
        Ok(fam)
    }
}

impl Serialize for Povm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.effects.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Povm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Povm::new(Vec::<HermOp>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Ensemble {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.states.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ensemble {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ensemble::new(Vec::<HermOp>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn bell_projector() -> HermOp {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        HermOp::projector(&PureState::from_real(&[s, 0.0, 0.0, s]).unwrap())
    }

    #[test]
    fn tensor_examples() {
        let i2 = HermOp::identity(2);
        assert_eq!(tensor(&i2, &i2).max_abs_diff(&HermOp::identity(4)), 0.0);
        let zz = tensor(&HermOp::pauli_z(), &HermOp::pauli_z());
        assert_eq!(zz.max_abs_diff(&HermOp::diag(&[1.0, -1.0, -1.0, 1.0])), 0.0);
        let t = tensor(&HermOp::basis_projector(2, 0), &HermOp::pauli_x());
        let expected = HermOp::from_real_rows(&[
            &[0.0, 1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(t.max_abs_diff(&expected), 0.0);
    }

    #[test]
    fn partial_trace_examples() {
        let rho = HermOp::qubit(1.0, [0.1, 0.2, 0.3]);
        let sigma = HermOp::diag(&[0.5, 1.0, 1.5]);
        let prod = tensor(&rho, &sigma);
        let red = partial_trace(&prod, (2, 3), Subsystem::A).unwrap();
        assert!(red.max_abs_diff(&(&rho * sigma.trace())) < 1e-14);
        let red_b = partial_trace(&prod, (2, 3), Subsystem::B).unwrap();
        assert!(red_b.max_abs_diff(&(&sigma * rho.trace())) < 1e-14);

        let red = partial_trace(&bell_projector(), (2, 2), Subsystem::B).unwrap();
        assert!(red.max_abs_diff(&HermOp::maximally_mixed(2)) < 1e-15);

        assert!(matches!(
            partial_trace(&HermOp::identity(6), (2, 2), Subsystem::A),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn partial_transpose_examples() {
        let rho = HermOp::qubit(1.0, [0.3, -0.4, 0.1]);
        let sigma = HermOp::qubit(1.0, [0.2, 0.5, -0.6]);
        let pt = partial_transpose(&tensor(&rho, &sigma), (2, 2), Subsystem::B).unwrap();
        assert!(pt.max_abs_diff(&tensor(&rho, &sigma.transpose())) < 1e-15);
        assert!(pt.min_eigenvalue() > -1e-12);

        let bell = bell_projector();
        let pt = partial_transpose(&bell, (2, 2), Subsystem::B).unwrap();
        // Dense 4x4: the swap operator over 2, eigenvalues ±1/2.
        assert!(close(pt.min_eigenvalue(), -0.5, 1e-12));
        let back = partial_transpose(&pt, (2, 2), Subsystem::B).unwrap();
        assert_eq!(back.max_abs_diff(&bell), 0.0);
        let pa = partial_transpose(&bell, (2, 2), Subsystem::A).unwrap();
        assert!(pa.max_abs_diff(&pt) < 1e-15);
    }

    #[test]
    fn norms() {
        let z = HermOp::pauli_z();
        assert!(close(z.trace_norm(), 2.0, 1e-14));
        assert!(close(z.operator_norm(), 1.0, 1e-14));
        let m = HermOp::pauli_z() * 0.3 + HermOp::pauli_x() * 0.3;
        assert!(close(m.trace_norm(), 0.6 * 2f64.sqrt(), 1e-14));
        let rho = HermOp::qubit(1.0, [0.2, 0.1, -0.5]);
        assert!(close(rho.trace_norm(), rho.trace(), 1e-14));
    }

    #[test]
    fn eig_examples() {
        let e = HermOp::diag(&[2.0, 1.0]).eig();
        assert_eq!(e.values, vec![1.0, 2.0]);
        let e = HermOp::pauli_x().eig();
        assert!(close(e.values[0], -1.0, 1e-14) && close(e.values[1], 1.0, 1e-14));
    }

    #[test]
    fn eig_reconstruction_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 8;
        let g = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let a = HermOp::hermitize(g);
        let e = a.eig();
        let mut rec = DMatrix::from_element(n, n, ZERO);
        for k in 0..n {
            let v = e.vectors.column(k);
            let av = a.matrix() * v;
            let resid = (av - v * C64::new(e.values[k], 0.0)).norm();
            assert!(resid <= 1e-9 * a.operator_norm());
            rec += (v * v.adjoint()) * C64::new(e.values[k], 0.0);
        }
        assert!((rec - a.matrix()).norm() <= 1e-9 * a.operator_norm());
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(HermOp::new(m), Err(Error::NotHermitian(_))));
        assert!(matches!(
            HermOp::new(DMatrix::from_element(0, 0, ZERO)),
            Err(Error::BadDimension(0))
        ));
    }

    #[test]
    fn povm_validation() {
        assert!(Povm::qubit_binary([0.0, 0.0, 1.0]).is_ok());
        assert!(Povm::qubit_binary([0.0, 0.0, 1.1]).is_err());
        let bad = Povm::new(vec![HermOp::basis_projector(2, 0)]);
        assert!(matches!(bad, Err(Error::InvalidPovm(_))));
        let fam = MeasurementFamily::new(vec![Povm::trivial(2), Povm::computational(3)]);
        assert!(matches!(fam, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(close(x.inner(y), expect, 1e-15));
            }
        }
    }

    #[test]
    fn distribution_lookup() {
        let p = ConditionalDistribution::from_fn(vec![2, 3], 2, |i, o| {
            let q = (i[0] + i[1]) as f64 / 4.0;
            if o == 0 {
                q
            } else {
                1.0 - q
            }
        })
        .unwrap();
        assert!(close(p.prob(0, &[1, 2]), 0.75, 0.0));
        assert!(close(p.prob(1, &[0, 1]), 0.75, 0.0));
        assert!(ConditionalDistribution::new(vec![1], 2, vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let op = HermOp::pauli_y() * 0.5 + HermOp::identity(2);
        let s = serde_json::to_string(&op).unwrap();
        assert!(s.starts_with("{\"dim\":2,\"entries\":"));
        let back: HermOp = serde_json::from_str(&s).unwrap();
        assert_eq!(back, op);
        let bad = r#"{"dim":2,"entries":[[[1,0],[0,1]],[[0,1],[1,0]]]}"#;
        assert!(serde_json::from_str::<HermOp>(bad).is_err());
        let psi: PureState = serde_json::from_str(r#"{"dim":2,"amps":[[0.6,0],[0,0.8]]}"#).unwrap();
        assert!(close(psi.amps()[1].im, 0.8, 0.0));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn herm(d: usize) -> impl Strategy<Value = HermOp> {
        proptest::collection::vec(-1.0f64..1.0, 2 * d * d).prop_map(move |v| {
            let m = DMatrix::from_fn(d, d, |i, j| C64::new(v[2 * (i * d + j)], v[2 * (i * d + j) + 1]));
            HermOp::hermitize(m)
        })
    }

    fn psd(d: usize) -> impl Strategy<Value = HermOp> {
        herm(d).prop_map(|h| HermOp::hermitize(h.matrix() * h.matrix()))
    }

    proptest! {
        #[test]
        fn trace_of_tensor_is_multiplicative(a in herm(2), b in herm(3)) {
            let t = tensor(&a, &b);
            prop_assert!((t.trace() - a.trace() * b.trace()).abs() < 1e-12);
        }

        #[test]
        fn partial_trace_of_product(a in psd(3), b in psd(2)) {
            let t = tensor(&a, &b);
            let ra = partial_trace(&t, (3, 2), Subsystem::A).unwrap();
            prop_assert!(ra.max_abs_diff(&(&a * b.trace())) < 1e-12);
            prop_assert!((ra.trace() - t.trace()).abs() < 1e-12);
        }

        #[test]
        fn tensor_is_bilinear(a in herm(2), a2 in herm(2), b in herm(2), s in -2.0f64..2.0) {
            let lhs = tensor(&(&a + &(&a2 * s)), &b);
            let rhs = &tensor(&a, &b) + &(&tensor(&a2, &b) * s);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }

        #[test]
        fn psd_eigenvalues_nonnegative(a in psd(4)) {
            prop_assert!(a.min_eigenvalue() >= -1e-9);
        }

        #[test]
        fn partial_transpose_is_involution(a in herm(6)) {
            let once = partial_transpose(&a, (2, 3), Subsystem::B).unwrap();
            let twice = partial_transpose(&once, (2, 3), Subsystem::B).unwrap();
            prop_assert!(twice.max_abs_diff(&a) == 0.0);
            prop_assert!(HermOp::new(once.matrix().clone()).is_ok());
        }
    }
}
