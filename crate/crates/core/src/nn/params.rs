use super::Float;

/// Flat access to every trainable tensor of a module, in a fixed order.
///
/// Gradient containers, Adam moments and target networks are values of the
/// same type as the module, so matching tensors line up by position.
pub trait Params<F: Float>: Clone {
    fn tensors(&self) -> Vec<&[F]>;
    fn tensors_mut(&mut self) -> Vec<&mut [F]>;

    fn zeroed(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(F::zero());
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self <- (1 - tau) * self + tau * online`.
    fn soft_update_from(&mut self, online: &Self, tau: F) {
        let keep = F::one() - tau;
        for (dst, src) in self.tensors_mut().into_iter().zip(online.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = keep * *d + tau * s;
            }
        }
    }

    fn flatten(&self) -> Vec<F> {
        self.tensors().concat()
    }
}

impl<F: Float> Params<F> for ndarray::Array1<F> {
    fn tensors(&self) -> Vec<&[F]> {
        vec![self.as_slice_memory_order().expect("contiguous")]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![self.as_slice_memory_order_mut().expect("contiguous")]
    }
}
