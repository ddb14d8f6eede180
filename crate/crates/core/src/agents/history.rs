//! Fixed-length observation history `h_t = o_{t-l}, ..., o_{t-1}`, zero-padded
//! at the start of an episode.

use serde::{Deserialize, Serialize};

/// History from a list of episode observations `o_0, o_1, ...`.
pub fn make_history(observations: &[Vec<f64>], t: usize, l: usize, dim: usize) -> Vec<Vec<f64>> {
    let available = t.min(l);
    let mut out = vec![vec![0.0; dim]; l - available];
    out.extend(observations[t - available..t].iter().cloned());
    out
}

/// Rolling history stored flat, oldest first, shape `(l, dim)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    len: usize,
    dim: usize,
    data: Vec<f32>,
}

impl History {
    pub fn new(len: usize, dim: usize) -> Self {
        History {
            len,
            dim,
            data: vec![0.0; len * dim],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn clear(&mut self) {
        self.data.fill(0.0);
    }

    /// Drops the oldest entry and appends `obs`.
    pub fn push(&mut self, obs: &[f32]) {
        assert_eq!(obs.len(), self.dim, "observation width");
        if self.len == 0 {
            return;
        }
        self.data.copy_within(self.dim.., 0);
        let start = (self.len - 1) * self.dim;
        self.data[start..].copy_from_slice(obs);
    }
}

/// `h_{t+1}` from `h_t` and `o_t`, both flat.
pub fn shifted(history: &[f32], obs: &[f32]) -> Vec<f32> {
    let dim = obs.len();
    if history.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(history.len());
    out.extend_from_slice(&history[dim..]);
    out.extend_from_slice(obs);
    out
}
