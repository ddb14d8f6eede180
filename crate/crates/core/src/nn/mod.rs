//! Minimal differentiable layers with hand-written backward passes.
//!
//! Layers keep no hidden state: `forward` returns a tape, `backward`
//! consumes it and accumulates into a gradient container of the same type
//! as the layer. Everything is generic over [`Float`] so the learners run in
//! `f32` while gradient checks run in `f64`.

mod activation;
mod adam;
mod linear;
mod lstm;
mod params;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use adam::Adam;
pub use linear::{relu_backward_in_place, relu_in_place, Linear};
pub use lstm::{Lstm, LstmTape};
pub use params::Params;

pub trait Float:
    num_traits::Float
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn lit(x: f64) -> Self;
    fn to_f64_lossy(self) -> f64;

    fn sigmoid_slice(xs: &mut [Self]) {
        for x in xs {
            *x = sigmoid(*x);
        }
    }

    fn tanh_slice(xs: &mut [Self]) {
        for x in xs {
            *x = x.tanh();
        }
    }
}

impl Float for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
    fn sigmoid_slice(xs: &mut [Self]) {
        activation::sigmoid_f32(xs);
    }
    fn tanh_slice(xs: &mut [Self]) {
        activation::tanh_f32(xs);
    }
}

impl Float for f64 {
    fn lit(x: f64) -> Self {
        x
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

#[inline]
pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}
