//! Numeric substrate: tensors, reverse-mode autodiff, DCT, Adam, gradient
//! checking, the portable PRNG and small linear algebra.

pub mod adam;
pub mod dct;
pub mod gradcheck;
pub mod linalg;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dct::{dct_forward, dct_matrix, idct_inverse};
pub use gradcheck::{grad_check, grad_check_many, GradCheckReport};
pub use rng::XorShift64Star;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::{Error, Result};

/// Logistic function, saturating cleanly at both ends.
pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(tape::stable_sigmoid)
}

/// Error unless every value is finite.
pub fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op: what.into() })
    }
}
