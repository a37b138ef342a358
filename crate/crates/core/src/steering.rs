//! Assemblages, local-hidden-state models and the CHSH best response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incompat::{check_shape, free_weight, hidden_model, WeightReport, Witness};
use crate::qmat::{HermOp, NORMALIZATION_TOL, PSD_TOL};
use crate::sdp::Tolerances;

/// Sub-normalized steered states `σ_{b|y}` with a common marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AssemblageJson", into = "AssemblageJson")]
pub struct Assemblage {
    dim: usize,
    members: Vec<Vec<HermOp>>,
}

#[derive(Serialize, Deserialize)]
struct AssemblageJson {
    dim: usize,
    members: Vec<Vec<HermOp>>,
}

impl TryFrom<AssemblageJson> for Assemblage {
    type Error = Error;
    fn try_from(j: AssemblageJson) -> Result<Self> {
        let a = Assemblage::new(j.members)?;
        if a.dim != j.dim {
            return Err(Error::DimensionMismatch {
                expected: j.dim,
                found: a.dim,
            });
        }
        Ok(a)
    }
}

impl From<Assemblage> for AssemblageJson {
    fn from(a: Assemblage) -> Self {
        Self {
            dim: a.dim,
            members: a.members,
        }
    }
}

impl Assemblage {
    /// Checks positivity, unit total trace and no-signalling of the marginals.
    pub fn new(members: Vec<Vec<HermOp>>) -> Result<Self> {
        let Some(first) = members.first().and_then(|r| r.first()) else {
            return Err(Error::InvalidAssemblage("empty assemblage".into()));
        };
        let dim = first.dim();
        if members.iter().any(Vec::is_empty) {
            return Err(Error::InvalidAssemblage("setting without outcomes".into()));
        }
        for (y, row) in members.iter().enumerate() {
            for (b, s) in row.iter().enumerate() {
                if s.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: s.dim(),
                    });
                }
                let min = s.min_eigenvalue();
                if min < -PSD_TOL {
                    return Err(Error::InvalidAssemblage(format!("σ[{b}|{y}] has eigenvalue {min:e}")));
                }
            }
        }
        let marginals: Vec<HermOp> = members
            .iter()
            .map(|row| row.iter().fold(HermOp::zeros(dim), |acc, s| &acc + s))
            .collect();
        let tr = marginals[0].trace();
        if (tr - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidAssemblage(format!("total trace {tr} is not 1")));
        }
        for (y, m) in marginals.iter().enumerate().skip(1) {
            let dev = m.max_abs_diff(&marginals[0]);
            if dev > NORMALIZATION_TOL {
                return Err(Error::InvalidAssemblage(format!(
                    "marginal of setting {y} differs from setting 0 by {dev:e}"
                )));
            }
        }
        Ok(Self { dim, members })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn settings(&self) -> usize {
        self.members.len()
    }

    pub fn outcome_counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn members(&self) -> &[Vec<HermOp>] {
        &self.members
    }

    pub fn member(&self, y: usize, b: usize) -> &HermOp {
        &self.members[y][b]
    }

    /// `ρ_A = Σ_b σ_{b|0}`.
    pub fn marginal(&self) -> HermOp {
        self.members[0].iter().fold(HermOp::zeros(self.dim), |acc, s| &acc + s)
    }
}

/// Local-hidden-state model: hidden states `σ̃_λ` with deterministic responses.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LhsCertificate {
    pub hidden_states: Vec<HermOp>,
    pub responses: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SteeringReport {
    pub unsteerable: bool,
    pub margin: f64,
    pub certificate: Option<LhsCertificate>,
    pub witness: Option<Witness>,
    pub witness_value: Option<f64>,
}

/// LHS feasibility by the max-slack program; steerable assemblages come with
/// a violated linear steering inequality normalized to bound 1.
pub fn is_unsteerable(a: &Assemblage, tol: &Tolerances) -> Result<SteeringReport> {
    let d = a.dim();
    let model = hidden_model(a.members(), d, tol)?;
    if model.margin >= -tol.acceptable {
        return Ok(SteeringReport {
            unsteerable: true,
            margin: model.margin,
            certificate: Some(LhsCertificate {
                hidden_states: model.hidden,
                responses: model.responses,
            }),
            witness: None,
            witness_value: None,
        });
    }
    // W = I/|Y| − F. For an LHS model Σ tr(W σ) = Σ_λ tr(σ̃_λ K_λ) ≤ max_λ λ_max(K_λ),
    // K_λ = I − Σ_y F_{λ(y)|y}, since Σ_λ tr σ̃_λ = 1.
    let ny = a.settings() as f64;
    let base = HermOp::identity(d) * (1.0 / ny);
    let bound = model
        .responses
        .iter()
        .map(|l| {
            l.iter()
                .enumerate()
                .fold(HermOp::identity(d), |acc, (y, &b)| &acc - &model.dual[y][b])
                .max_eigenvalue()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::Solver(format!("degenerate witness bound {bound}")));
    }
    let operators: Vec<Vec<HermOp>> = model
        .dual
        .iter()
        .map(|row| row.iter().map(|f| (&base - f) * (1.0 / bound)).collect())
        .collect();
    let (value, _) = steering_inequality_value(a, &operators, 1.0)?;
    Ok(SteeringReport {
        unsteerable: false,
        margin: model.margin,
        certificate: None,
        witness: Some(Witness { operators, bound: 1.0 }),
        witness_value: Some(value),
    })
}

/// Max-slack value alone, for threshold searches.
pub fn lhs_margin(a: &Assemblage, tol: &Tolerances) -> Result<f64> {
    Ok(hidden_model(a.members(), a.dim(), tol)?.margin)
}

/// `1 − max μ` over `σ̃_λ ⪰ 0` with `Σ_{λ(y)=b} σ̃_λ ⪯ σ_{b|y}` and
/// `Σ_λ σ̃_λ = μ ρ_A`.
pub fn steerable_weight(a: &Assemblage, tol: &Tolerances) -> Result<WeightReport> {
    free_weight(a.members(), &a.marginal(), tol)
}

/// Largest CHSH value `A₁(B₁+B₂) + A₂(B₁−B₂)` over Alice observables
/// `−I ⪯ A_x ⪯ I`, namely `‖σ̂₁+σ̂₂‖₁ + ‖σ̂₁−σ̂₂‖₁` with `σ̂_y = σ_{1|y} − σ_{2|y}`.
pub fn chsh_best_response(a: &Assemblage) -> Result<f64> {
    if a.outcome_counts() != [2, 2] {
        return Err(Error::InvalidArgument(
            "CHSH best response needs two settings with two outcomes each".into(),
        ));
    }
    let hat = |y: usize| a.member(y, 0) - a.member(y, 1);
    let (h1, h2) = (hat(0), hat(1));
    Ok((&h1 + &h2).trace_norm() + (&h1 - &h2).trace_norm())
}

/// `(Σ tr(F_{b|y} σ_{b|y}), value > L)`.
pub fn steering_inequality_value(a: &Assemblage, witness: &[Vec<HermOp>], l: f64) -> Result<(f64, bool)> {
    check_shape(a.dim(), &a.outcome_counts(), witness)?;
    let value: f64 = a
        .members()
        .iter()
        .zip(witness)
        .flat_map(|(row, frow)| row.iter().zip(frow).map(|(s, f)| s.inner(f)))
        .sum();
    Ok((value, value > l + 1e-9))
}

/// Steerable qubit assemblage with marginal `I/2` that satisfies CHSH:
/// `σ_{1|1} = 0.3|0⟩⟨0|`, `σ_{2|1} = 0.2|0⟩⟨0| + 0.5|1⟩⟨1|`, and the same in the `±` basis.
pub fn chsh_counterexample() -> Assemblage {
    let p0 = HermOp::qubit(1.0, [0.0, 0.0, 1.0]);
    let p1 = HermOp::qubit(1.0, [0.0, 0.0, -1.0]);
    let pp = HermOp::qubit(1.0, [1.0, 0.0, 0.0]);
    let pm = HermOp::qubit(1.0, [-1.0, 0.0, 0.0]);
    Assemblage::new(vec![
        vec![&p0 * 0.3, &(&p0 * 0.2) + &(&p1 * 0.5)],
        vec![&pp * 0.3, &(&pp * 0.2) + &(&pm * 0.5)],
    ])
    .expect("valid assemblage")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singlet_xz() -> Assemblage {
        // Bob measures X and Z on the singlet; Alice is steered to the opposite eigenstates.
        let st = |r: [f64; 3]| HermOp::qubit(0.5, [-r[0] / 2.0, -r[1] / 2.0, -r[2] / 2.0]);
        Assemblage::new(vec![
            vec![st([1.0, 0.0, 0.0]), st([-1.0, 0.0, 0.0])],
            vec![st([0.0, 0.0, 1.0]), st([0.0, 0.0, -1.0])],
        ])
        .unwrap()
    }

    #[test]
    fn counterexample_value() {
        let v = chsh_best_response(&chsh_counterexample()).unwrap();
        assert!((v - 1.2 * 2f64.sqrt()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn singlet_reaches_tsirelson() {
        let v = chsh_best_response(&singlet_xz()).unwrap();
        assert!((v - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_second_difference() {
        let m = HermOp::maximally_mixed(2) * 0.5;
        let a = Assemblage::new(vec![
            vec![HermOp::diag(&[0.4, 0.1]), HermOp::diag(&[0.1, 0.4])],
            vec![m.clone(), m],
        ])
        .unwrap();
        let v = chsh_best_response(&a).unwrap();
        assert!((v - 2.0 * HermOp::diag(&[0.3, -0.3]).trace_norm()).abs() < 1e-12);
    }

    #[test]
    fn counterexample_is_steerable() {
        let rep = is_unsteerable(&chsh_counterexample(), &Tolerances::default()).unwrap();
        assert!(!rep.unsteerable);
        assert!(rep.witness_value.unwrap() > 1.0 + 1e-6);
        let w = steerable_weight(&chsh_counterexample(), &Tolerances::default()).unwrap();
        assert!(w.weight > 1e-3);
    }

    #[test]
    fn product_assemblage_is_unsteerable() {
        let rho = HermOp::diag(&[0.7, 0.3]);
        let a = Assemblage::new(vec![vec![&rho * 0.4, &rho * 0.6], vec![&rho * 0.9, &rho * 0.1]]).unwrap();
        let rep = is_unsteerable(&a, &Tolerances::default()).unwrap();
        assert!(rep.unsteerable);
        assert!(steerable_weight(&a, &Tolerances::default()).unwrap().weight.abs() < 1e-6);
    }

    #[test]
    fn validation() {
        let bad = Assemblage::new(vec![
            vec![HermOp::diag(&[0.5, 0.0]), HermOp::diag(&[0.0, 0.5])],
            vec![HermOp::diag(&[0.6, 0.0]), HermOp::diag(&[0.0, 0.4])],
        ]);
        assert!(matches!(bad, Err(Error::InvalidAssemblage(_))));
        assert!(chsh_best_response(&Assemblage::new(vec![vec![HermOp::maximally_mixed(2)]]).unwrap()).is_err());
    }

    #[test]
    fn zero_witness() {
        let a = chsh_counterexample();
        let zero = Witness::zero(2, &[2, 2]);
        assert_eq!(
            steering_inequality_value(&a, &zero.operators, 0.0).unwrap(),
            (0.0, false)
        );
    }
}
