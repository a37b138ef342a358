#![allow(dead_code)]

use chancert::qmat::{HermOp, C64};
use chancert::sdp::SdpProblem;
use nalgebra::DMatrix;

/// Largest relative violation of the equality constraints by `x`.
pub fn primal_violation(p: &SdpProblem, x: &[HermOp]) -> f64 {
    p.constraint_values(x)
        .iter()
        .zip(p.rhs())
        .map(|(v, b)| (v - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}

pub fn rotation_y(theta: f64) -> DMatrix<C64> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    DMatrix::from_row_slice(
        2,
        2,
        &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
    )
}
