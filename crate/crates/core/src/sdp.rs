//! Dense semidefinite programming.
//!
//! Problems are stated over complex Hermitian blocks in standard primal form
//!
//! ```text
//!   min/max  Σ_j tr(C_j X_j)
//!   s.t.     Σ_j tr(A_ij X_j) = b_i,   X_j ⪰ 0.
//! ```
//!
//! For `Minimize` the dual is `max bᵀy s.t. C − Σ y_i A_i ⪰ 0`; for
//! `Maximize` it is `min bᵀy s.t. Σ y_i A_i − C ⪰ 0`. Reported dual vectors
//! follow the sign of the stated sense.
//!
//! Internally each Hermitian block `H = P + iQ` is replaced by the real
//! symmetric block `[[P, −Q], [Q, P]]` of doubled size, linearly dependent
//! constraints are removed by pivoted Gram–Schmidt, and the real problem is
//! solved by a homogeneous self-dual primal-dual interior-point method with
//! Nesterov–Todd scaling, Mehrotra predictor-corrector steps and a dense
//! Cholesky factorization of the Schur complement. The embedded iterates stay
//! invariant under `[[0, −I], [I, 0]]`-conjugation, so no structural
//! constraints are needed to recover the complex solution.

use std::cell::RefCell;
use std::ops::Range;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmat::{hermitian_basis, HermOp, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One term `tr(coeff · X_block)` of a linear constraint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Term {
    pub block: usize,
    pub coeff: HermOp,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

/// Adjoint of a linear map from a block into the constraint's codomain.
pub type AdjointMap<'a> = &'a dyn Fn(&HermOp) -> HermOp;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SdpProblem {
    pub sense: Sense,
    pub blocks: Vec<usize>,
    pub objective: Vec<HermOp>,
    pub constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            blocks: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Adds a PSD block of the given complex dimension; returns its index.
    pub fn add_block(&mut self, dim: usize) -> usize {
        self.blocks.push(dim);
        self.objective.push(HermOp::zeros(dim));
        self.blocks.len() - 1
    }

    pub fn set_objective(&mut self, block: usize, coeff: HermOp) {
        assert_eq!(coeff.dim(), self.blocks[block], "objective coefficient dimension");
        self.objective[block] = coeff;
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, HermOp)>, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            terms: terms.into_iter().map(|(block, coeff)| Term { block, coeff }).collect(),
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Adds the Hermitian matrix equation `Σ_k L_k(X_{j_k}) = rhs` as `d²`
    /// scalar constraints, one per element of [`hermitian_basis`]. Each map is
    /// given through its adjoint `L_k†`. Returns the constraint index range,
    /// in basis order, for use with [`SdpSolution::dual_matrix`].
    pub fn add_matrix_equality(&mut self, terms: &[(usize, AdjointMap<'_>)], rhs: &HermOp) -> Range<usize> {
        let start = self.constraints.len();
        for basis in hermitian_basis(rhs.dim()) {
            let t = terms
                .iter()
                .filter_map(|(block, adj)| {
                    let c = adj(&basis);
                    (c.frobenius_norm() > 0.0).then_some((*block, c))
                })
                .collect();
            self.add_constraint(t, basis.inner(rhs));
        }
        start..self.constraints.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.blocks.len() {
            return Err(Error::InvalidArgument(
                "one objective coefficient per block required".into(),
            ));
        }
        for (j, (c, &d)) in self.objective.iter().zip(&self.blocks).enumerate() {
            if c.dim() != d {
                return Err(Error::InvalidArgument(format!(
                    "objective block {j}: dim {} vs {d}",
                    c.dim()
                )));
            }
        }
        for (i, con) in self.constraints.iter().enumerate() {
            if !con.rhs.is_finite() {
                return Err(Error::InvalidArgument(format!("constraint {i}: non-finite rhs")));
            }
            for t in &con.terms {
                match self.blocks.get(t.block) {
                    Some(&d) if d == t.coeff.dim() => {}
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "constraint {i}: bad term on block {}",
                            t.block
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// `Σ_j tr(A_ij X_j)` for every constraint.
    pub fn constraint_values(&self, x: &[HermOp]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.terms.iter().map(|t| t.coeff.inner(&x[t.block])).sum())
            .collect()
    }

    /// `Σ_i y_i A_i`, blockwise.
    pub fn adjoint_apply(&self, y: &[f64]) -> Vec<HermOp> {
        let mut out: Vec<HermOp> = self.blocks.iter().map(|&d| HermOp::zeros(d)).collect();
        for (c, &yi) in self.constraints.iter().zip(y) {
            if yi != 0.0 {
                for t in &c.terms {
                    out[t.block] = &out[t.block] + &(&t.coeff * yi);
                }
            }
        }
        out
    }

    pub fn objective_value(&self, x: &[HermOp]) -> f64 {
        self.objective.iter().zip(x).map(|(c, xj)| c.inner(xj)).sum()
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.rhs).collect()
    }
}

/// Solver tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Tolerances {
    /// Target relative primal/dual residual of the interior-point iteration.
    pub feasibility: f64,
    /// Target relative duality gap.
    pub gap: f64,
    /// Residual and gap level still reported as `Optimal` after stalling.
    pub acceptable: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            gap: 1e-9,
            acceptable: 1e-7,
            max_iterations: 200,
        }
    }
}

impl Tolerances {
    /// Uniform override of every threshold (the CLI's `--tol`).
    pub fn uniform(tol: f64) -> Self {
        Self {
            feasibility: tol.min(1e-9),
            gap: tol.min(1e-9),
            acceptable: tol,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal blocks (best iterate unless `Optimal`).
    pub primal: Vec<HermOp>,
    /// Dual multipliers, one per constraint in the original order.
    pub dual: Vec<f64>,
    /// Dual slack blocks.
    pub dual_slack: Vec<HermOp>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `‖A(X) − b‖₂ / (1 + ‖b‖₂)`.
    pub primal_residual: f64,
    /// `‖C ∓ A*(y) ∓ S‖_F / (1 + ‖C‖_F)`.
    pub dual_residual: f64,
    /// `|p − d| / (1 + |p| + |d|)`.
    pub gap: f64,
    pub iterations: usize,
    /// For `Infeasible`: `y` with `bᵀy = 1` and `Σ y_i A_i ⪯ 0`.
    pub certificate: Option<Vec<f64>>,
    /// For `Unbounded`: `X ⪰ 0` with `A(X) = 0` and an improving objective.
    pub ray: Option<Vec<HermOp>>,
}

impl SdpSolution {
    /// Reassembles `Σ_k y_k B_k` over the basis used by
    /// [`SdpProblem::add_matrix_equality`] for the given constraint range.
    pub fn dual_matrix(&self, range: Range<usize>, dim: usize) -> HermOp {
        let basis = hermitian_basis(dim);
        assert_eq!(basis.len(), range.len());
        basis
            .iter()
            .zip(&self.dual[range])
            .fold(HermOp::zeros(dim), |acc, (b, &y)| &acc + &(b * y))
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }
}

/// Checks an infeasibility certificate; returns `(bᵀy, λ_max(Σ y_i A_i))`
/// with the largest eigenvalue taken over all blocks.
pub fn verify_infeasibility_certificate(p: &SdpProblem, y: &[f64]) -> (f64, f64) {
    let by: f64 = p.constraints.iter().zip(y).map(|(c, yi)| c.rhs * yi).sum();
    let lam = p
        .adjoint_apply(y)
        .iter()
        .map(HermOp::max_eigenvalue)
        .fold(f64::NEG_INFINITY, f64::max);
    (by, lam)
}

thread_local! {
    static CAPTURE: RefCell<Option<Vec<SdpProblem>>> = const { RefCell::new(None) };
}

/// Runs `f` and returns every problem passed to [`solve`] on this thread
/// while it ran.
pub fn capture_problems<R>(f: impl FnOnce() -> R) -> (R, Vec<SdpProblem>) {
    let previous = CAPTURE.with(|c| c.borrow_mut().replace(Vec::new()));
    let out = f();
    let captured = CAPTURE.with(|c| std::mem::replace(&mut *c.borrow_mut(), previous));
    (out, captured.unwrap_or_default())
}

/// Solves `p`. Returns `Err` only for malformed problems; numerical trouble
/// is reported through [`SdpStatus::NumericalFailure`].
pub fn solve(p: &SdpProblem, tol: &Tolerances) -> Result<SdpSolution> {
    p.validate()?;
    CAPTURE.with(|c| {
        if let Some(v) = c.borrow_mut().as_mut() {
            v.push(p.clone());
        }
    });

    let reduced = match reduce_constraints(p) {
        Reduction::Kept(kept) => kept,
        Reduction::Inconsistent(y) => return Ok(infeasible_from_ray(p, y, 0)),
    };

    let real = RealProblem::embed(p, &reduced);
    let out = real.solve(tol);
    Ok(recover(p, &reduced, &real, out, tol))
}

/// Largest boundary point between a feasible `lo` and an infeasible `hi`
/// of a monotone predicate, to within `tol`.
pub fn bisect(mut feasible: impl FnMut(f64) -> Result<bool>, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Bisection(format!("tolerance {tol} must be positive")));
    }
    if !feasible(lo)? {
        return Err(Error::Bisection(format!("predicate is not feasible at lo = {lo}")));
    }
    if feasible(hi)? {
        return Err(Error::Bisection(format!("predicate is still feasible at hi = {hi}")));
    }
    let (mut a, mut b) = (lo, hi);
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        if feasible(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Parallel variant of [`bisect`]: each round evaluates `points` interior
/// points concurrently and keeps the bracketing subinterval.
pub fn multisect(
    feasible: impl Fn(f64) -> Result<bool> + Sync,
    lo: f64,
    hi: f64,
    tol: f64,
    points: usize,
) -> Result<f64> {
    if points <= 1 {
        return bisect(&feasible, lo, hi, tol);
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Bisection(format!("tolerance {tol} must be positive")));
    }
    if !feasible(lo)? {
        return Err(Error::Bisection(format!("predicate is not feasible at lo = {lo}")));
    }
    if feasible(hi)? {
        return Err(Error::Bisection(format!("predicate is still feasible at hi = {hi}")));
    }
    let (mut a, mut b) = (lo, hi);
    while (b - a).abs() > tol {
        let xs: Vec<f64> = (1..=points)
            .map(|k| a + (b - a) * k as f64 / (points + 1) as f64)
            .collect();
        let flags = xs.par_iter().map(|&x| feasible(x)).collect::<Result<Vec<bool>>>()?;
        match flags.iter().position(|f| !f) {
            Some(0) => b = xs[0],
            Some(k) => {
                a = xs[k - 1];
                b = xs[k];
            }
            None => a = xs[points - 1],
        }
    }
    Ok(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// Constraint reduction.

enum Reduction {
    Kept(Vec<usize>),
    Inconsistent(Vec<f64>),
}

fn constraint_vector(p: &SdpProblem, offsets: &[usize], total: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(total);
    let s2 = std::f64::consts::SQRT_2;
    for t in &p.constraints[i].terms {
        let d = t.coeff.dim();
        let m = t.coeff.matrix();
        let mut k = offsets[t.block];
        for a in 0..d {
            v[k] += m[(a, a)].re;
            k += 1;
        }
        for a in 0..d {
            for b in (a + 1)..d {
                v[k] += s2 * m[(a, b)].re;
                v[k + 1] += s2 * m[(a, b)].im;
                k += 2;
            }
        }
    }
    v
}

/// Pivoted modified Gram–Schmidt on the constraint vectors. Dependent
/// constraints are dropped when their right-hand sides agree with the kept
/// ones, otherwise a Farkas ray is returned.
fn reduce_constraints(p: &SdpProblem) -> Reduction {
    const RANK_TOL: f64 = 1e-10;
    const CONSISTENCY_TOL: f64 = 1e-9;

    let m = p.constraints.len();
    let mut offsets = Vec::with_capacity(p.blocks.len());
    let mut total = 0;
    for &d in &p.blocks {
        offsets.push(total);
        total += d * d;
    }
    let vs: Vec<DVector<f64>> = (0..m).map(|i| constraint_vector(p, &offsets, total, i)).collect();
    let scale = vs.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if m == 0 {
        return Reduction::Kept(Vec::new());
    }

    let mut resid = vs.clone();
    let mut active: Vec<usize> = (0..m).collect();
    let mut kept = Vec::new();
    while let Some((pos, norm)) = active
        .iter()
        .enumerate()
        .map(|(pos, &i)| (pos, resid[i].norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
    {
        if norm <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        let i = active.swap_remove(pos);
        let q = &resid[i] / norm;
        for &j in &active {
            for _ in 0..2 {
                let c = q.dot(&resid[j]);
                resid[j].axpy(-c, &q, 1.0);
            }
        }
        kept.push(i);
    }
    kept.sort_unstable();

    if !active.is_empty() {
        let k = kept.len();
        let vk = DMatrix::from_fn(total, k, |r, c| vs[kept[c]][r]);
        let gram = vk.transpose() * &vk;
        let chol = if k > 0 { Cholesky::new(gram) } else { None };
        let bk = DVector::from_iterator(k, kept.iter().map(|&i| p.constraints[i].rhs));
        for &i in &active {
            let coef = match &chol {
                Some(ch) => ch.solve(&(vk.transpose() * &vs[i])),
                None => DVector::zeros(k),
            };
            let predicted = coef.dot(&bk);
            let bi = p.constraints[i].rhs;
            let scale = 1.0 + bi.abs() + coef.iter().zip(bk.iter()).map(|(c, b)| (c * b).abs()).sum::<f64>();
            let mismatch = predicted - bi;
            if mismatch.abs() > CONSISTENCY_TOL * scale {
                // y = ±(coef on kept, −1 on i) has Σ y A ≈ 0 and bᵀy = ±mismatch.
                let mut y = vec![0.0; m];
                for (c, &j) in coef.iter().zip(&kept) {
                    y[j] = c / mismatch;
                }
                y[i] = -1.0 / mismatch;
                return Reduction::Inconsistent(y);
            }
        }
    }
    Reduction::Kept(kept)
}

fn infeasible_from_ray(p: &SdpProblem, y: Vec<f64>, iterations: usize) -> SdpSolution {
    let primal = p.blocks.iter().map(|&d| HermOp::zeros(d)).collect();
    let (by, _) = verify_infeasibility_certificate(p, &y);
    let y: Vec<f64> = y.iter().map(|v| v / by).collect();
    SdpSolution {
        status: SdpStatus::Infeasible,
        primal,
        dual: vec![0.0; p.constraints.len()],
        dual_slack: p.blocks.iter().map(|&d| HermOp::zeros(d)).collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations,
        certificate: Some(y),
        ray: None,
    }
}

// ---------------------------------------------------------------------------
// Real embedded problem.

fn embed(h: &HermOp) -> DMatrix<f64> {
    let d = h.dim();
    let m = h.matrix();
    DMatrix::from_fn(2 * d, 2 * d, |r, c| {
        let z = m[(r % d, c % d)];
        match (r < d, c < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

fn unembed(y: &DMatrix<f64>) -> HermOp {
    let d = y.nrows() / 2;
    HermOp::hermitize(DMatrix::from_fn(d, d, |a, b| {
        let re = 0.5 * (y[(a, b)] + y[(a + d, b + d)]);
        let im = 0.5 * (y[(a + d, b)] - y[(a, b + d)]);
        C64::new(re, im)
    }))
}

type Blocks = Vec<DMatrix<f64>>;

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn blocks_inner(a: &Blocks, b: &Blocks) -> f64 {
    a.iter().zip(b).map(|(x, y)| inner(x, y)).sum()
}

fn blocks_norm(a: &Blocks) -> f64 {
    blocks_inner(a, a).sqrt()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

struct RealProblem {
    sizes: Vec<usize>,
    c: Blocks,
    /// Per kept constraint: (block, coefficient) pairs.
    a: Vec<Vec<(usize, DMatrix<f64>)>>,
    b: DVector<f64>,
    /// `y_true = y_scaled * y_scale[i]`.
    y_scale: Vec<f64>,
    obj_scale: f64,
    obj_sign: f64,
}

struct RawOutcome {
    status: SdpStatus,
    x: Blocks,
    y: DVector<f64>,
    s: Blocks,
    tau: f64,
    iterations: usize,
}

struct Scaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut f = e.eigenvectors.clone();
    for k in 0..n {
        let s = e.eigenvalues[k].max(1e-300).sqrt();
        for r in 0..n {
            f[(r, k)] *= s;
        }
    }
    f
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Scaling {
    let fx = psd_factor(x);
    let fs = psd_factor(s);
    let svd = SVD::new(fs.transpose() * &fx, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let lambda = svd.singular_values.map(|v| v.max(1e-300));
    let n = x.nrows();
    let inv_sqrt = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / lambda[i].sqrt() } else { 0.0 });
    let r = &fx * vt.transpose() * &inv_sqrt;
    let rinv = &inv_sqrt * u.transpose() * fs.transpose();
    let w = symmetrize(&r * r.transpose());
    Scaling { r, rinv, w, lambda }
}

/// Largest `α ≤ cap` keeping `Λ + α D ⪰ 0` for diagonal `Λ`.
fn max_step(lambda: &DVector<f64>, d: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let scaled = DMatrix::from_fn(n, n, |i, j| d[(i, j)] / (lambda[i] * lambda[j]).sqrt());
    let min = SymmetricEigen::new(symmetrize(scaled))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

impl RealProblem {
    fn embed(p: &SdpProblem, kept: &[usize]) -> Self {
        let obj_sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut c: Blocks = p.objective.iter().map(|h| embed(h) * (0.5 * obj_sign)).collect();
        let cn = blocks_norm(&c);
        let obj_scale = if cn > 0.0 { cn.max(1e-300) } else { 1.0 };
        for m in &mut c {
            *m /= obj_scale;
        }
        let mut a = Vec::with_capacity(kept.len());
        let mut b = DVector::zeros(kept.len());
        let mut y_scale = Vec::with_capacity(kept.len());
        for (k, &i) in kept.iter().enumerate() {
            let con = &p.constraints[i];
            let mut terms: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for t in &con.terms {
                let e = embed(&t.coeff) * 0.5;
                match terms.iter_mut().find(|(blk, _)| *blk == t.block) {
                    Some((_, m)) => *m += e,
                    None => terms.push((t.block, e)),
                }
            }
            let norm = terms.iter().map(|(_, m)| inner(m, m)).sum::<f64>().sqrt().max(1e-300);
            for (_, m) in &mut terms {
                *m /= norm;
            }
            a.push(terms);
            b[k] = con.rhs / norm;
            y_scale.push(obj_scale / norm);
        }
        Self {
            sizes: p.blocks.iter().map(|d| 2 * d).collect(),
            c,
            a,
            b,
            y_scale,
            obj_scale,
            obj_sign,
        }
    }

    fn op_a(&self, x: &Blocks) -> DVector<f64> {
        DVector::from_iterator(
            self.a.len(),
            self.a
                .iter()
                .map(|terms| terms.iter().map(|(j, m)| inner(m, &x[*j])).sum()),
        )
    }

    fn op_at(&self, y: &DVector<f64>) -> Blocks {
        let mut out: Blocks = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (terms, &yi) in self.a.iter().zip(y.iter()) {
            for (j, m) in terms {
                out[*j] += m * yi;
            }
        }
        out
    }

    fn solve(&self, tol: &Tolerances) -> RawOutcome {
        let m = self.a.len();
        let nu: f64 = self.sizes.iter().sum::<usize>() as f64;
        let mut x: Blocks = self.sizes.iter().map(|&n| DMatrix::identity(n, n)).collect();
        let mut s: Blocks = x.clone();
        let mut y = DVector::zeros(m);
        let (mut tau, mut kappa) = (1.0f64, 1.0f64);

        let bnorm = self.b.norm();
        let cnorm = blocks_norm(&self.c);

        let mut best: Option<(f64, Blocks, DVector<f64>, Blocks, f64)> = None;
        let mut status = SdpStatus::NumericalFailure;
        let mut iterations = 0;

        for iter in 0..=tol.max_iterations {
            iterations = iter;
            // Convergence and infeasibility checks.
            let ax = self.op_a(&x);
            let aty = self.op_at(&y);
            let pres = (&ax / tau - &self.b).norm() / (1.0 + bnorm);
            let dres = {
                let r: Blocks = self
                    .c
                    .iter()
                    .zip(&aty)
                    .zip(&s)
                    .map(|((c, a), sj)| c - (a + sj) / tau)
                    .collect();
                blocks_norm(&r) / (1.0 + cnorm)
            };
            let pobj = blocks_inner(&self.c, &x) / tau;
            let dobj = self.b.dot(&y) / tau;
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let merit = pres.max(dres).max(gap);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, x.clone(), y.clone(), s.clone(), tau));
            }
            if pres <= tol.feasibility && dres <= tol.feasibility && gap <= tol.gap {
                status = SdpStatus::Optimal;
                break;
            }
            let by = self.b.dot(&y);
            if by > 0.0 {
                let r: Blocks = aty.iter().zip(&s).map(|(a, sj)| a + sj).collect();
                if blocks_norm(&r) <= tol.feasibility * by {
                    status = SdpStatus::Infeasible;
                    break;
                }
            }
            let cx = blocks_inner(&self.c, &x);
            if cx < 0.0 && ax.norm() <= tol.feasibility * (-cx) {
                status = SdpStatus::Unbounded;
                break;
            }
            if iter == tol.max_iterations {
                break;
            }

            // Scaling and Schur complement.
            let sc: Vec<Scaling> = x.iter().zip(&s).map(|(xj, sj)| nt_scaling(xj, sj)).collect();
            let wcw: Blocks = sc.iter().zip(&self.c).map(|(k, c)| &k.w * c * &k.w).collect();
            let cwc = blocks_inner(&self.c, &wcw);
            let g = self.op_a(&wcw);
            let mut schur = DMatrix::zeros(m, m);
            // Constraint terms grouped per block.
            let mut per_block: Vec<Vec<(usize, &DMatrix<f64>)>> = vec![Vec::new(); self.sizes.len()];
            for (i, terms) in self.a.iter().enumerate() {
                for (j, mat) in terms {
                    per_block[*j].push((i, mat));
                }
            }
            for (j, list) in per_block.iter().enumerate() {
                let w = &sc[j].w;
                for &(i, ai) in list {
                    let t = w * ai * w;
                    for &(k, ak) in list {
                        if k >= i {
                            schur[(i, k)] += inner(ak, &t);
                        }
                    }
                }
            }
            for i in 0..m {
                for k in 0..i {
                    schur[(i, k)] = schur[(k, i)];
                }
            }
            let chol = {
                let mut reg = 0.0;
                let diag_max = (0..m).map(|i| schur[(i, i)]).fold(1e-300, f64::max);
                loop {
                    let mut mm = schur.clone();
                    for i in 0..m {
                        mm[(i, i)] += reg;
                    }
                    if let Some(ch) = Cholesky::new(mm) {
                        break Some(ch);
                    }
                    reg = if reg == 0.0 { 1e-14 * diag_max } else { reg * 100.0 };
                    if reg > 1e-4 * diag_max {
                        break None;
                    }
                }
            };
            let Some(chol) = chol else {
                break;
            };

            let r1 = &self.b * tau - &ax;
            let r2: Blocks = aty
                .iter()
                .zip(&s)
                .zip(&self.c)
                .map(|((a, sj), c)| a + sj - c * tau)
                .collect();
            let r3 = -self.b.dot(&y) + blocks_inner(&self.c, &x) + kappa;
            let wr2w: Blocks = sc.iter().zip(&r2).map(|(k, r)| &k.w * r * &k.w).collect();
            let a_wr2w = self.op_a(&wr2w);
            let c_wr2w = blocks_inner(&self.c, &wr2w);
            let bg_plus = &g + &self.b;
            let bg_minus = &self.b - &g;
            let v = chol.solve(&bg_plus);
            let denom_base = bg_minus.dot(&v) + cwc;

            let direction = |eta: f64, rc: &Blocks, rtk: f64| {
                let h1 = &r1 * eta - self.op_a(rc) - &a_wr2w * eta;
                let h2 = eta * r3 + blocks_inner(&self.c, rc) + eta * c_wr2w + rtk / tau;
                let u = chol.solve(&h1);
                let dtau = (h2 - bg_minus.dot(&u)) / (denom_base + kappa / tau);
                let dy = &u + &v * dtau;
                let atdy = self.op_at(&dy);
                let ds: Blocks = atdy
                    .iter()
                    .zip(&self.c)
                    .zip(&r2)
                    .map(|((a, c), r)| -a + c * dtau - r * eta)
                    .collect();
                let dx: Blocks = rc
                    .iter()
                    .zip(&ds)
                    .zip(&sc)
                    .map(|((r, d), k)| symmetrize(r - &k.w * d * &k.w))
                    .collect();
                let dkappa = (rtk - kappa * dtau) / tau;
                (dx, dy, ds, dtau, dkappa)
            };
            let step_bound = |dx: &Blocks, ds: &Blocks, dtau: f64, dkappa: f64| {
                let mut a = f64::INFINITY;
                for ((k, dxj), dsj) in sc.iter().zip(dx).zip(ds) {
                    let dxt = &k.rinv * dxj * k.rinv.transpose();
                    let dst = k.r.transpose() * dsj * &k.r;
                    a = a.min(max_step(&k.lambda, &dxt)).min(max_step(&k.lambda, &dst));
                }
                if dtau < 0.0 {
                    a = a.min(-tau / dtau);
                }
                if dkappa < 0.0 {
                    a = a.min(-kappa / dkappa);
                }
                a
            };

            let mu = (blocks_inner(&x, &s) + tau * kappa) / (nu + 1.0);

            // Predictor.
            let rc_aff: Blocks = x.iter().map(|xj| -xj).collect();
            let (dxa, _, dsa, dtaua, dkappaa) = direction(1.0, &rc_aff, -tau * kappa);
            let alpha_a = step_bound(&dxa, &dsa, dtaua, dkappaa).min(1.0);
            let mu_a = {
                let xs: f64 = x
                    .iter()
                    .zip(&dxa)
                    .zip(s.iter().zip(&dsa))
                    .map(|((xj, dxj), (sj, dsj))| inner(&(xj + dxj * alpha_a), &(sj + dsj * alpha_a)))
                    .sum();
                (xs + (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)) / (nu + 1.0)
            };
            let sigma = (mu_a / mu).clamp(0.0, 1.0).powi(3);

            // Corrector in the scaled frame: Λ∘(dX̃ + dS̃) = σμI − Λ² − dX̃ₐ∘dS̃ₐ.
            let rc: Blocks = sc
                .iter()
                .zip(dxa.iter().zip(&dsa))
                .map(|(k, (dxj, dsj))| {
                    let n = k.lambda.len();
                    let dxt = &k.rinv * dxj * k.rinv.transpose();
                    let dst = k.r.transpose() * dsj * &k.r;
                    let second = symmetrize(&dxt * &dst);
                    let z = DMatrix::from_fn(n, n, |a, b| {
                        let mut rhs = -second[(a, b)];
                        if a == b {
                            rhs += sigma * mu - k.lambda[a] * k.lambda[a];
                        }
                        2.0 * rhs / (k.lambda[a] + k.lambda[b])
                    });
                    symmetrize(&k.r * z * k.r.transpose())
                })
                .collect();
            let rtk = sigma * mu - tau * kappa - dtaua * dkappaa;
            let (dx, dy, ds, dtau, dkappa) = direction(1.0 - sigma, &rc, rtk);
            let alpha = (0.98 * step_bound(&dx, &ds, dtau, dkappa)).min(1.0);
            if alpha < 1e-12 {
                break;
            }

            for (xj, dxj) in x.iter_mut().zip(&dx) {
                *xj = symmetrize(&*xj + dxj * alpha);
            }
            for (sj, dsj) in s.iter_mut().zip(&ds) {
                *sj = symmetrize(&*sj + dsj * alpha);
            }
            y += &dy * alpha;
            tau += alpha * dtau;
            kappa += alpha * dkappa;
        }

        if status == SdpStatus::Optimal || status == SdpStatus::Infeasible || status == SdpStatus::Unbounded {
            return RawOutcome {
                status,
                x,
                y,
                s,
                tau,
                iterations,
            };
        }
        let (_, bx, by, bs, btau) = best.expect("at least one iterate");
        RawOutcome {
            status: SdpStatus::NumericalFailure,
            x: bx,
            y: by,
            s: bs,
            tau: btau,
            iterations,
        }
    }
}

fn recover(p: &SdpProblem, kept: &[usize], real: &RealProblem, out: RawOutcome, tol: &Tolerances) -> SdpSolution {
    let m = p.constraints.len();
    // Dual vector in the sign convention of the stated sense.
    let to_user_y = |yr: &DVector<f64>, scale_by_tau: f64| {
        let mut y = vec![0.0; m];
        for (k, &i) in kept.iter().enumerate() {
            y[i] = yr[k] * real.y_scale[k] * real.obj_sign / scale_by_tau;
        }
        y
    };

    match out.status {
        SdpStatus::Infeasible => {
            // Farkas ray: sign-free, normalized to bᵀy = 1.
            let mut y = vec![0.0; m];
            for (k, &i) in kept.iter().enumerate() {
                y[i] = out.y[k] * real.y_scale[k] / real.obj_scale;
            }
            let mut sol = infeasible_from_ray(p, y, out.iterations);
            sol.primal = out.x.iter().map(unembed).collect();
            sol
        }
        SdpStatus::Unbounded => {
            let ray: Vec<HermOp> = out.x.iter().map(unembed).collect();
            let mut sol = infeasible_from_ray(p, vec![0.0; m], out.iterations);
            sol.status = SdpStatus::Unbounded;
            sol.certificate = None;
            sol.primal = ray.clone();
            sol.ray = Some(ray);
            sol
        }
        SdpStatus::Optimal | SdpStatus::NumericalFailure => {
            let primal: Vec<HermOp> = out.x.iter().map(|xj| unembed(&(xj / out.tau))).collect();
            let dual = to_user_y(&out.y, out.tau);
            let dual_slack: Vec<HermOp> = out
                .s
                .iter()
                .map(|sj| unembed(&(sj * (2.0 * real.obj_scale / out.tau))))
                .collect();

            let b = p.rhs();
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ax = p.constraint_values(&primal);
            let pres = ax.iter().zip(&b).map(|(a, bi)| (a - bi).powi(2)).sum::<f64>().sqrt() / (1.0 + bn);
            let aty = p.adjoint_apply(&dual);
            let sgn = real.obj_sign;
            // Minimize: C − A*y − S;  Maximize: A*y − C − S.
            let dres_sq: f64 = p
                .objective
                .iter()
                .zip(&aty)
                .zip(&dual_slack)
                .map(|((c, a), sj)| {
                    let r = &(&(c * sgn) - &(a * sgn)) - sj;
                    r.frobenius_norm().powi(2)
                })
                .sum();
            let cn = p
                .objective
                .iter()
                .map(|c| c.frobenius_norm().powi(2))
                .sum::<f64>()
                .sqrt();
            let dres = dres_sq.sqrt() / (1.0 + cn);
            let pobj = p.objective_value(&primal);
            let dobj: f64 = dual.iter().zip(&b).map(|(y, bi)| y * bi).sum();
            let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let acceptable = pres <= tol.acceptable && dres <= tol.acceptable && gap <= tol.acceptable;
            SdpSolution {
                status: if acceptable {
                    SdpStatus::Optimal
                } else {
                    SdpStatus::NumericalFailure
                },
                primal,
                dual,
                dual_slack,
                primal_objective: pobj,
                dual_objective: dobj,
                primal_residual: pres,
                dual_residual: dres,
                gap,
                iterations: out.iterations,
                certificate: None,
                ray: None,
            }
        }
    }
}
