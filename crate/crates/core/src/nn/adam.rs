use serde::{Deserialize, Serialize};

use super::{Float, Params};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<P: Params<F>>(&mut self, params: &mut P, grads: &P) {
        let grads = grads.tensors();
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![F::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.steps += 1;
        let t = self.steps as i32;
        let b1 = F::lit(self.beta1);
        let b2 = F::lit(self.beta2);
        let one = F::one();
        let step_size = F::lit(self.lr / (1.0 - self.beta1.powi(t)));
        let v_correction = F::lit((1.0 - self.beta2.powi(t)).sqrt());
        let eps = F::lit(self.eps);

        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() / v_correction + eps);
            }
        }
    }
}
