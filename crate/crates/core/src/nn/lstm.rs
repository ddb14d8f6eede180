use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Float, Params};

/// Single-layer LSTM. Gate columns are laid out `[input | forget | cell | output]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lstm<F> {
    /// Shape `(inputs, 4 * hidden)`.
    pub w_ih: Array2<F>,
    /// Shape `(hidden, 4 * hidden)`.
    pub w_hh: Array2<F>,
    pub bias: Array1<F>,
}

/// Activations recorded by [`Lstm::forward`] for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmTape<F> {
    xs: Array3<F>,
    /// `hs[t]` is the hidden state before step `t`; `hs[T]` is the output.
    hs: Vec<Array2<F>>,
    cs: Vec<Array2<F>>,
    /// Activated gates per step, `(batch, 4 * hidden)`.
    gates: Vec<Array2<F>>,
}

impl<F: Float> LstmTape<F> {
    pub fn last_hidden(&self) -> &Array2<F> {
        self.hs.last().expect("tape holds the initial state")
    }
}

/// In place: sigmoid on the input, forget and output gates, tanh on the cell candidate.
fn activate_gates<F: Float>(z: &mut [F], hidden: usize) {
    F::sigmoid_slice(&mut z[..2 * hidden]);
    F::tanh_slice(&mut z[2 * hidden..3 * hidden]);
    F::sigmoid_slice(&mut z[3 * hidden..]);
}

/// `c = f c_prev + i g`, `h = o tanh(c)` from activated gates.
fn cell_update<F: Float>(gates: &[F], c_prev: &[F], c: &mut [F], h: &mut [F]) {
    let hidden = c.len();
    let (i, rest) = gates.split_at(hidden);
    let (f, rest) = rest.split_at(hidden);
    let (g, o) = rest.split_at(hidden);
    for j in 0..hidden {
        c[j] = f[j] * c_prev[j] + i[j] * g[j];
    }
    h.copy_from_slice(c);
    F::tanh_slice(h);
    for j in 0..hidden {
        h[j] *= o[j];
    }
}

impl<F: Float> Lstm<F> {
    pub fn new<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut draw = || F::lit(rng.random_range(-k..k));
        Lstm {
            w_ih: Array2::from_shape_simple_fn((inputs, 4 * hidden), &mut draw),
            w_hh: Array2::from_shape_simple_fn((hidden, 4 * hidden), &mut draw),
            bias: Array1::from_shape_simple_fn(4 * hidden, &mut draw),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_ih.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.nrows()
    }

    /// Runs the sequence `xs` of shape `(time, batch, inputs)` from a zero state.
    pub fn forward(&self, xs: ArrayView3<F>) -> LstmTape<F> {
        let (steps, batch, _) = xs.dim();
        let hidden = self.hidden();
        let mut hs = Vec::with_capacity(steps + 1);
        let mut cs = Vec::with_capacity(steps + 1);
        let mut gates = Vec::with_capacity(steps);
        hs.push(Array2::zeros((batch, hidden)));
        cs.push(Array2::zeros((batch, hidden)));

        for t in 0..steps {
            let mut z = self.preactivation(xs.index_axis(Axis(0), t), hs[t].view());
            let mut c = Array2::zeros((batch, hidden));
            let mut h = Array2::zeros((batch, hidden));
            for b in 0..batch {
                let zr = z.row_mut(b).into_slice().expect("row-major");
                activate_gates(zr, hidden);
                let c_prev = cs[t].row(b);
                let c_prev = c_prev.as_slice().expect("row-major");
                let cr = c.row_mut(b).into_slice().expect("row-major");
                let hr = h.row_mut(b).into_slice().expect("row-major");
                cell_update(zr, c_prev, cr, hr);
            }
            gates.push(z);
            cs.push(c);
            hs.push(h);
        }
        LstmTape {
            xs: xs.to_owned(),
            hs,
            cs,
            gates,
        }
    }

    /// Final hidden state only; no tape is kept.
    pub fn last_hidden(&self, xs: ArrayView3<F>) -> Array2<F> {
        let (steps, batch, _) = xs.dim();
        let hidden = self.hidden();
        let mut h = Array2::zeros((batch, hidden));
        let mut c = Array2::<F>::zeros((batch, hidden));
        let mut c_prev = vec![F::zero(); hidden];
        for t in 0..steps {
            let mut z = self.preactivation(xs.index_axis(Axis(0), t), h.view());
            for b in 0..batch {
                let zr = z.row_mut(b).into_slice().expect("row-major");
                activate_gates(zr, hidden);
                let cr = c.row_mut(b).into_slice().expect("row-major");
                c_prev.copy_from_slice(cr);
                let hr = h.row_mut(b).into_slice().expect("row-major");
                cell_update(zr, &c_prev, cr, hr);
            }
        }
        h
    }

    fn preactivation(&self, x: ArrayView2<F>, h: ArrayView2<F>) -> Array2<F> {
        let mut z = Array2::from_shape_fn((x.nrows(), self.bias.len()), |(_, j)| self.bias[j]);
        general_mat_mul(F::one(), &x, &self.w_ih, F::one(), &mut z);
        general_mat_mul(F::one(), &h, &self.w_hh, F::one(), &mut z);
        z
    }

    /// Backpropagates `dh_last = dL/dh_T` through time, accumulating into
    /// `grad`. Returns `dL/dx` of shape `(time, batch, inputs)` when asked.
    pub fn backward(
        &self,
        tape: &LstmTape<F>,
        dh_last: ArrayView2<F>,
        grad: &mut Lstm<F>,
        want_input_grad: bool,
    ) -> Option<Array3<F>> {
        let (steps, batch, inputs) = tape.xs.dim();
        let hidden = self.hidden();
        let one = F::one();
        let mut dh = dh_last.to_owned();
        let mut dc = Array2::<F>::zeros((batch, hidden));
        let mut dz = Array2::<F>::zeros((batch, 4 * hidden));
        let mut dxs = want_input_grad.then(|| Array3::zeros((steps, batch, inputs)));

        for t in (0..steps).rev() {
            let acts = &tape.gates[t];
            for b in 0..batch {
                let a = acts.row(b);
                let a = a.as_slice().expect("row-major");
                let c = tape.cs[t + 1].row(b);
                let c_prev = tape.cs[t].row(b);
                let dhr = dh.row(b);
                let dcr = dc.row_mut(b).into_slice().expect("row-major");
                let dzr = dz.row_mut(b).into_slice().expect("row-major");
                for j in 0..hidden {
                    let (i, f, g, o) = (a[j], a[hidden + j], a[2 * hidden + j], a[3 * hidden + j]);
                    let tc = c[j].tanh();
                    let d_o = dhr[j] * tc;
                    let dct = dcr[j] + dhr[j] * o * (one - tc * tc);
                    dzr[j] = dct * g * i * (one - i);
                    dzr[hidden + j] = dct * c_prev[j] * f * (one - f);
                    dzr[2 * hidden + j] = dct * i * (one - g * g);
                    dzr[3 * hidden + j] = d_o * o * (one - o);
                    dcr[j] = dct * f;
                }
            }
            let x_t = tape.xs.index_axis(Axis(0), t);
            general_mat_mul(one, &x_t.t(), &dz, one, &mut grad.w_ih);
            general_mat_mul(one, &tape.hs[t].t(), &dz, one, &mut grad.w_hh);
            grad.bias += &dz.sum_axis(Axis(0));
            if let Some(dxs) = dxs.as_mut() {
                let mut slot = dxs.slice_mut(s![t, .., ..]);
                general_mat_mul(one, &dz, &self.w_ih.t(), F::zero(), &mut slot);
            }
            if t > 0 {
                general_mat_mul(one, &dz, &self.w_hh.t(), F::zero(), &mut dh);
            }
        }
        dxs
    }
}

impl<F: Float> Params<F> for Lstm<F> {
    fn tensors(&self) -> Vec<&[F]> {
        vec![
            self.w_ih.as_slice_memory_order().expect("contiguous"),
            self.w_hh.as_slice_memory_order().expect("contiguous"),
            self.bias.as_slice_memory_order().expect("contiguous"),
        ]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        vec![
            self.w_ih.as_slice_memory_order_mut().expect("contiguous"),
            self.w_hh.as_slice_memory_order_mut().expect("contiguous"),
            self.bias.as_slice_memory_order_mut().expect("contiguous"),
        ]
    }
}
