//! Certification of channel properties through measurement incompatibility.
//!
//! Choi operators follow the convention `J = Σ_ij |i⟩⟨j| ⊗ C(|i⟩⟨j|)`:
//! trace `d_in`, input marginal `I`.

pub mod channels;
pub mod error;
pub mod incompat;
pub mod qkd;
pub mod qmat;
pub mod random;
pub mod sdp;
pub mod steering;

pub use error::{Error, Result};
