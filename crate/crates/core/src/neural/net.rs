use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{axpy, dot, Tape, Var};
use crate::error::{check_len, Result};
use crate::lfr::PortFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

/// How a residual network bypasses its nonlinear branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    None,
    /// Fixed identity, used when input and output widths agree.
    Identity,
    /// Trainable linear map without bias.
    Linear,
}

/// Initialization flavour for [`NeuralNet::init_neutral`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Final layer and any trainable skip start at zero: an MLP outputs zero
    /// and a residual net reduces to its identity skip.
    Aug,
    /// Final branch layer starts at zero; a trainable skip stays random.
    Encoder,
    Generic,
}

/// Layout of one affine layer inside the flat parameter slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub rows: usize,
    pub cols: usize,
    pub w_off: usize,
    pub b_off: usize,
}

/// Architecture of a feedforward or residual network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub output: usize,
    pub hidden_layers: usize,
    pub nodes: usize,
    pub activation: Activation,
    pub residual: bool,
}

impl NetShape {
    pub fn skip(&self) -> Skip {
        match (self.residual, self.input == self.output) {
            (false, _) => Skip::None,
            (true, true) => Skip::Identity,
            (true, false) => Skip::Linear,
        }
    }

    /// Hidden layers followed by the linear output layer.
    pub fn layers(&self) -> Vec<LayerLayout> {
        let mut widths = vec![self.input];
        widths.extend(std::iter::repeat_n(self.nodes, self.hidden_layers));
        widths.push(self.output);
        let mut off = 0;
        widths
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    rows: w[1],
                    cols: w[0],
                    w_off: off,
                    b_off: off + w[0] * w[1],
                };
                off += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    fn branch_len(&self) -> usize {
        self.layers().iter().map(|l| l.rows * l.cols + l.rows).sum()
    }

    pub fn skip_offset(&self) -> Option<usize> {
        (self.skip() == Skip::Linear).then(|| self.branch_len())
    }

    pub fn param_len(&self) -> usize {
        self.branch_len()
            + match self.skip() {
                Skip::Linear => self.input * self.output,
                _ => 0,
            }
    }

    fn activate(&self, v: &mut [f64]) {
        if self.activation == Activation::Tanh {
            v.iter_mut().for_each(|x| *x = x.tanh());
        }
    }

    /// Forward pass with explicit parameters.
    pub fn forward_with(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let layers = self.layers();
        let mut h = x.to_vec();
        for (i, l) in layers.iter().enumerate() {
            let w = &params[l.w_off..l.w_off + l.rows * l.cols];
            let mut out = params[l.b_off..l.b_off + l.rows].to_vec();
            for (r, o) in out.iter_mut().enumerate() {
                *o += dot(&w[r * l.cols..(r + 1) * l.cols], &h);
            }
            if i + 1 < layers.len() {
                self.activate(&mut out);
            }
            h = out;
        }
        match self.skip() {
            Skip::None => {}
            Skip::Identity => axpy(1.0, x, &mut h),
            Skip::Linear => {
                let off = self.skip_offset().unwrap();
                let w = &params[off..off + self.output * self.input];
                for (r, o) in h.iter_mut().enumerate() {
                    *o += dot(&w[r * self.input..(r + 1) * self.input], x);
                }
            }
        }
        h
    }

    /// Records the forward pass; `params` must hold exactly this net's parameters.
    pub fn record_into<'a>(&self, tape: &mut Tape<'a>, params: Var, x: Var) -> Var {
        let layers = self.layers();
        let mut h = x;
        for (i, l) in layers.iter().enumerate() {
            h = tape.affine(params, l.w_off, Some(l.b_off), l.rows, l.cols, h);
            if i + 1 < layers.len() && self.activation == Activation::Tanh {
                h = tape.tanh(h);
            }
        }
        match self.skip() {
            Skip::None => h,
            Skip::Identity => tape.add(h, x),
            Skip::Linear => {
                let s = tape.affine(params, self.skip_offset().unwrap(), None, self.output, self.input, x);
                tape.add(h, s)
            }
        }
    }
}

impl PortFunction for NetShape {
    fn name(&self) -> &str {
        "neural-net"
    }
    fn input_width(&self) -> usize {
        self.input
    }
    fn output_width(&self) -> usize {
        self.output
    }
    fn param_len(&self) -> usize {
        NetShape::param_len(self)
    }
    fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.forward_with(params, input)
    }
    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: Var, input: Var) -> Var {
        self.record_into(tape, params, input)
    }
}

/// A network shape together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    shape: NetShape,
    params: Vec<f64>,
}

impl NeuralNet {
    pub fn from_params(shape: NetShape, params: Vec<f64>) -> Result<Self> {
        check_len("network parameters", shape.param_len(), params.len())?;
        Ok(NeuralNet { shape, params })
    }

    /// Hidden layers uniform in `±1/sqrt(fan_in)`; see [`InitMode`] for the
    /// treatment of the output layer and skip.
    pub fn init_neutral(shape: NetShape, mode: InitMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; shape.param_len()];
        let layers = shape.layers();
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if i == last && mode != InitMode::Generic {
                continue;
            }
            let bound = 1.0 / (l.cols as f64).sqrt();
            for p in &mut params[l.w_off..l.b_off + l.rows] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        if let Some(off) = shape.skip_offset() {
            if mode != InitMode::Aug {
                let bound = 1.0 / (shape.input as f64).sqrt();
                for p in &mut params[off..] {
                    *p = rng.random_range(-bound..=bound);
                }
            }
        }
        NeuralNet { shape, params }
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let l = self.shape.layers()[layer];
        &self.params[l.w_off..l.w_off + l.rows * l.cols]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let l = self.shape.layers()[layer];
        &self.params[l.b_off..l.b_off + l.rows]
    }

    pub fn skip_weight(&self) -> Option<&[f64]> {
        self.shape.skip_offset().map(|off| &self.params[off..])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.shape.input, x.len())?;
        Ok(self.shape.forward_with(&self.params, x))
    }
}
