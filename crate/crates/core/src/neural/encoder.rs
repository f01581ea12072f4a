use serde::{Deserialize, Serialize};

use super::net::{Activation, NetShape};

/// Maps a window of past inputs and outputs to an initial state estimate.
///
/// The window is stacked oldest-first as `y[k-na..k]` followed by `u[k-nb..k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoder {
    pub shape: NetShape,
    pub n_a: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub n_y: usize,
}

impl Encoder {
    /// Residual tanh network with a trainable linear skip.
    pub fn new(n_a: usize, n_b: usize, n_u: usize, n_y: usize, n_x: usize, hidden_layers: usize, nodes: usize) -> Self {
        Encoder {
            shape: NetShape {
                input: n_a * n_y + n_b * n_u,
                output: n_x,
                hidden_layers,
                nodes,
                activation: Activation::Tanh,
                residual: true,
            },
            n_a,
            n_b,
            n_u,
            n_y,
        }
    }

    pub fn input_width(&self) -> usize {
        self.n_a * self.n_y + self.n_b * self.n_u
    }

    pub fn output_width(&self) -> usize {
        self.shape.output
    }

    /// Samples needed before the first estimate.
    pub fn lookback(&self) -> usize {
        self.n_a.max(self.n_b)
    }

    /// Past window ending just before sample `k`. Requires `k >= lookback()`.
    pub fn window(&self, u: &[Vec<f64>], y: &[Vec<f64>], k: usize) -> Vec<f64> {
        assert!(k >= self.lookback(), "window before start of data");
        let mut w = Vec::with_capacity(self.input_width());
        for yk in &y[k - self.n_a..k] {
            w.extend_from_slice(yk);
        }
        for uk in &u[k - self.n_b..k] {
            w.extend_from_slice(uk);
        }
        w
    }

    pub fn estimate(&self, params: &[f64], window: &[f64]) -> Vec<f64> {
        self.shape.forward_with(params, window)
    }
}
