use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Float, Params};

/// Fully connected layer `y = x W + b` on row-major batches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear<F> {
    /// Shape `(inputs, outputs)`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Float> Linear<F> {
    /// Uniform `±1/sqrt(inputs)` initialization.
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let k = 1.0 / (inputs as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || F::lit(rng.random_range(-k..k)));
        let bias = Array1::from_shape_simple_fn(outputs, || F::lit(rng.random_range(-k..k)));
        Linear { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = Array2::from_shape_fn((x.nrows(), self.outputs()), |(_, j)| self.bias[j]);
        general_mat_mul(F::one(), &x, &self.weight, F::one(), &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) -> Array2<F> {
        self.backward_params(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    pub fn backward_params(&self, x: ArrayView2<F>, dy: ArrayView2<F>, grad: &mut Linear<F>) {
        general_mat_mul(F::one(), &x.t(), &dy, F::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }
}

impl<F: Float> Params<F> for Linear<F> {
    fn tensors(&self) -> Vec<&[F]> {
        vec![
            self.weight.as_slice_memory_order().expect("contiguous"),
            self.bias.as_slice_memory_order().expect("contiguous"),
        ]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            self.weight.as_slice_memory_order_mut().expect("contiguous"),
            self.bias.as_slice_memory_order_mut().expect("contiguous"),
        ]
    }
}

pub fn relu_in_place<F: Float>(x: &mut Array2<F>) {
    x.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Zeroes `grad` wherever the post-activation `out` is not positive.
pub fn relu_backward_in_place<F: Float>(grad: &mut Array2<F>, out: &Array2<F>) {
    ndarray::Zip::from(grad).and(out).for_each(|g, &o| {
        if o <= F::zero() {
            *g = F::zero();
        }
    });
}
