//! Uniform replay buffer of history-carrying transitions.
//!
//! Each slot keeps `h_t`, `o_t`, `a_t`, `r_{t+1}`, `o_{t+1}` and the done
//! flag; `h_{t+1}` is rebuilt on sampling as `h_t` shifted by `o_t`, so a
//! slot costs `l + 2` observation vectors. Storage grows on demand up to
//! the capacity, then the oldest slot is overwritten.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use super::history::shifted;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Flat `(l, dim)` history before the step.
    pub history: Vec<f32>,
    pub obs: Vec<f32>,
    pub action: f32,
    pub reward: f32,
    pub next_obs: Vec<f32>,
    pub done: bool,
}

impl Transition {
    pub fn next_history(&self) -> Vec<f32> {
        shifted(&self.history, &self.obs)
    }
}

/// Minibatch in network layout: histories `(l, batch, dim)`, rows per sample.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub hist: Array3<F>,
    pub obs: Array2<F>,
    pub action: Array2<F>,
    pub reward: Array1<F>,
    pub next_hist: Array3<F>,
    pub next_obs: Array2<F>,
    pub done: Array1<F>,
}

impl<F> Batch<F> {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    history_len: usize,
    dim: usize,
    len: usize,
    next: usize,
    hist: Vec<f32>,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    action: Vec<f32>,
    reward: Vec<f32>,
    done: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, history_len: usize, dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            history_len,
            dim,
            len: 0,
            next: 0,
            hist: Vec::new(),
            obs: Vec::new(),
            next_obs: Vec::new(),
            action: Vec::new(),
            reward: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) {
        let (l, d) = (self.history_len, self.dim);
        assert_eq!(t.history.len(), l * d, "history shape");
        assert_eq!(t.obs.len(), d, "observation width");
        assert_eq!(t.next_obs.len(), d, "observation width");
        let i = self.next;
        if i == self.action.len() {
            self.hist.extend_from_slice(&t.history);
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.action.push(t.action);
            self.reward.push(t.reward);
            self.done.push(t.done);
        } else {
            self.hist[i * l * d..(i + 1) * l * d].copy_from_slice(&t.history);
            self.obs[i * d..(i + 1) * d].copy_from_slice(&t.obs);
            self.next_obs[i * d..(i + 1) * d].copy_from_slice(&t.next_obs);
            self.action[i] = t.action;
            self.reward[i] = t.reward;
            self.done[i] = t.done;
        }
        self.next = (self.next + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.len, "index {i} out of {}", self.len);
        let (l, d) = (self.history_len, self.dim);
        Transition {
            history: self.hist[i * l * d..(i + 1) * l * d].to_vec(),
            obs: self.obs[i * d..(i + 1) * d].to_vec(),
            action: self.action[i],
            reward: self.reward[i],
            next_obs: self.next_obs[i * d..(i + 1) * d].to_vec(),
            done: self.done[i],
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Batch<f32> {
        assert!(self.len > 0, "sampling from an empty buffer");
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..self.len)).collect();
        self.gather(&idx)
    }

    pub fn gather(&self, idx: &[usize]) -> Batch<f32> {
        let (l, d, b) = (self.history_len, self.dim, idx.len());
        let mut hist = Array3::zeros((l, b, d));
        let mut next_hist = Array3::zeros((l, b, d));
        let mut obs = Array2::zeros((b, d));
        let mut next_obs = Array2::zeros((b, d));
        for (k, &i) in idx.iter().enumerate() {
            let h = &self.hist[i * l * d..(i + 1) * l * d];
            let o = &self.obs[i * d..(i + 1) * d];
            for t in 0..l {
                for j in 0..d {
                    hist[(t, k, j)] = h[t * d + j];
                    next_hist[(t, k, j)] = if t + 1 < l { h[(t + 1) * d + j] } else { o[j] };
                }
            }
            for j in 0..d {
                obs[(k, j)] = o[j];
                next_obs[(k, j)] = self.next_obs[i * d + j];
            }
        }
        Batch {
            hist,
            obs,
            action: Array2::from_shape_fn((b, 1), |(k, _)| self.action[idx[k]]),
            reward: Array1::from_shape_fn(b, |k| self.reward[idx[k]]),
            next_hist,
            next_obs,
            done: Array1::from_shape_fn(b, |k| if self.done[idx[k]] { 1.0 } else { 0.0 }),
        }
    }
}
