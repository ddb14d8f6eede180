//! Recurrent actor and critic networks.
//!
//! Both share one shape: an LSTM memory extractor over the history (MEM), a
//! ReLU layer over the current input (CFE; observation for the actor,
//! observation plus action for the critic), and a two-layer head over the
//! concatenation of both (PI).

use ndarray::{concatenate, s, Array2, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{relu_backward_in_place, relu_in_place, Float, Linear, Lstm, LstmTape, Params};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrentNet<F> {
    pub mem: Lstm<F>,
    pub cfe: Linear<F>,
    pub pi_hidden: Linear<F>,
    pub pi_out: Linear<F>,
}

/// Forward activations kept for [`RecurrentNet::backward`].
#[derive(Debug, Clone)]
pub struct NetCache<F> {
    /// Absent for [`RecurrentNet::forward_frozen`] caches.
    tape: Option<LstmTape<F>>,
    cur: Array2<F>,
    cfe_out: Array2<F>,
    joined: Array2<F>,
    hidden_out: Array2<F>,
}

impl<F: Float> RecurrentNet<F> {
    pub fn new<R: Rng>(obs_dim: usize, cur_dim: usize, hidden: usize, outputs: usize, rng: &mut R) -> Self {
        RecurrentNet {
            mem: Lstm::new(obs_dim, hidden, rng),
            cfe: Linear::new(cur_dim, hidden, rng),
            pi_hidden: Linear::new(2 * hidden, hidden, rng),
            pi_out: Linear::new(hidden, outputs, rng),
        }
    }

    pub fn outputs(&self) -> usize {
        self.pi_out.outputs()
    }

    fn head(&self, mem: ArrayView2<F>, cur: ArrayView2<F>) -> (Array2<F>, Array2<F>, Array2<F>, Array2<F>) {
        let mut cfe_out = self.cfe.forward(cur);
        relu_in_place(&mut cfe_out);
        let joined = concatenate![Axis(1), mem, cfe_out];
        let mut hidden_out = self.pi_hidden.forward(joined.view());
        relu_in_place(&mut hidden_out);
        let out = self.pi_out.forward(hidden_out.view());
        (out, cfe_out, joined, hidden_out)
    }

    /// `hist` is `(l, batch, obs_dim)`, `cur` is `(batch, cur_dim)`.
    pub fn forward(&self, hist: ArrayView3<F>, cur: ArrayView2<F>) -> (Array2<F>, NetCache<F>) {
        let tape = self.mem.forward(hist);
        let (out, cfe_out, joined, hidden_out) = self.head(tape.last_hidden().view(), cur);
        (
            out,
            NetCache {
                tape: Some(tape),
                cur: cur.to_owned(),
                cfe_out,
                joined,
                hidden_out,
            },
        )
    }

    /// Forward pass that keeps only what [`RecurrentNet::input_gradient`] needs.
    pub fn forward_frozen(&self, hist: ArrayView3<F>, cur: ArrayView2<F>) -> (Array2<F>, NetCache<F>) {
        let mem = self.mem.last_hidden(hist);
        let (out, cfe_out, joined, hidden_out) = self.head(mem.view(), cur);
        (
            out,
            NetCache {
                tape: None,
                cur: cur.to_owned(),
                cfe_out,
                joined,
                hidden_out,
            },
        )
    }

    /// `dL/d(cur)` alone; the history path is not differentiated.
    pub fn input_gradient(&self, cache: &NetCache<F>, dout: ArrayView2<F>) -> Array2<F> {
        let mut d_hidden = dout.dot(&self.pi_out.weight.t());
        relu_backward_in_place(&mut d_hidden, &cache.hidden_out);
        let d_joined = d_hidden.dot(&self.pi_hidden.weight.t());
        let mut d_cfe = d_joined.slice(s![.., self.mem.hidden()..]).to_owned();
        relu_backward_in_place(&mut d_cfe, &cache.cfe_out);
        d_cfe.dot(&self.cfe.weight.t())
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, hist: ArrayView3<F>, cur: ArrayView2<F>) -> Array2<F> {
        let mem = self.mem.last_hidden(hist);
        self.head(mem.view(), cur).0
    }

    /// Accumulates parameter gradients for `dout = dL/d(output)` and
    /// returns `dL/d(cur)`.
    pub fn backward(&self, cache: &NetCache<F>, dout: ArrayView2<F>, grad: &mut Self) -> Array2<F> {
        let mut d_hidden = self.pi_out.backward(cache.hidden_out.view(), dout, &mut grad.pi_out);
        relu_backward_in_place(&mut d_hidden, &cache.hidden_out);
        let d_joined = self
            .pi_hidden
            .backward(cache.joined.view(), d_hidden.view(), &mut grad.pi_hidden);
        let h = self.mem.hidden();
        let d_mem = d_joined.slice(s![.., ..h]);
        let mut d_cfe = d_joined.slice(s![.., h..]).to_owned();
        relu_backward_in_place(&mut d_cfe, &cache.cfe_out);
        let d_cur = self.cfe.backward(cache.cur.view(), d_cfe.view(), &mut grad.cfe);
        let tape = cache.tape.as_ref().expect("backward needs a cache from `forward`");
        self.mem.backward(tape, d_mem, &mut grad.mem, false);
        d_cur
    }
}

impl<F: Float> Params<F> for RecurrentNet<F> {
    fn tensors(&self) -> Vec<&[F]> {
        let mut v = self.mem.tensors();
        v.extend(self.cfe.tensors());
        v.extend(self.pi_hidden.tensors());
        v.extend(self.pi_out.tensors());
        v
    }
    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut v = self.mem.tensors_mut();
        v.extend(self.cfe.tensors_mut());
        v.extend(self.pi_hidden.tensors_mut());
        v.extend(self.pi_out.tensors_mut());
        v
    }
}

/// `[obs | action]` rows for the critic's current-feature input.
pub fn critic_input<F: Float>(obs: ArrayView2<F>, action: ArrayView2<F>) -> Array2<F> {
    concatenate![Axis(1), obs, action]
}

/// Mean squared error of `q` (a `(batch, 1)` column) against `target`, and
/// its gradient with respect to `q`.
pub fn mse_with_grad<F: Float>(q: ArrayView2<F>, target: &[F]) -> (F, Array2<F>) {
    let n = F::lit(target.len() as f64);
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = F::zero();
    for (i, &y) in target.iter().enumerate() {
        let e = q[(i, 0)] - y;
        loss += e * e;
        grad[(i, 0)] = F::lit(2.0) * e / n;
    }
    (loss / n, grad)
}

/// Critic loss `mean((Q(h, o, a) - y)^2)` and its parameter gradient.
pub fn critic_loss_and_grad<F: Float>(
    critic: &RecurrentNet<F>,
    hist: ArrayView3<F>,
    obs: ArrayView2<F>,
    action: ArrayView2<F>,
    target: &[F],
) -> (F, RecurrentNet<F>) {
    let input = critic_input(obs, action);
    let (q, cache) = critic.forward(hist, input.view());
    let (loss, dq) = mse_with_grad(q.view(), target);
    let mut grad = critic.zeroed();
    critic.backward(&cache, dq.view(), &mut grad);
    (loss, grad)
}
