use nalgebra::DMatrix;

use crate::autodiff::{Tape, Var};

/// A static map plugged into one of the two LFR ports.
///
/// Parameters are passed in rather than owned so the same port can be
/// evaluated under any point of a flat parameter vector.
pub trait PortFunction: Send + Sync {
    fn name(&self) -> &str;
    fn input_width(&self) -> usize;
    fn output_width(&self) -> usize;
    fn param_len(&self) -> usize;

    /// Per output: whether any input reaches it within the same step.
    /// Conservative: `false` promises the output is constant in the input.
    fn feedthrough(&self) -> Vec<bool> {
        vec![true; self.output_width()]
    }

    fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64>;

    /// Records the same computation as [`PortFunction::eval`] on a tape.
    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: Var, input: Var) -> Var;
}

/// Port that always outputs zeros and ignores its input.
#[derive(Debug, Clone)]
pub struct ZeroPort {
    pub inputs: usize,
    pub outputs: usize,
}

impl PortFunction for ZeroPort {
    fn name(&self) -> &str {
        "zero"
    }
    fn input_width(&self) -> usize {
        self.inputs
    }
    fn output_width(&self) -> usize {
        self.outputs
    }
    fn param_len(&self) -> usize {
        0
    }
    fn feedthrough(&self) -> Vec<bool> {
        vec![false; self.outputs]
    }
    fn eval(&self, _params: &[f64], _input: &[f64]) -> Vec<f64> {
        vec![0.0; self.outputs]
    }
    fn record<'a>(&'a self, tape: &mut Tape<'a>, _params: Var, _input: Var) -> Var {
        tape.leaf(vec![0.0; self.outputs])
    }
}

/// Linear port `w = M z`, with `M` stored row-major in the parameters.
#[derive(Debug, Clone)]
pub struct LinearPort {
    pub inputs: usize,
    pub outputs: usize,
}

impl LinearPort {
    pub fn params_from(m: &DMatrix<f64>) -> Vec<f64> {
        (0..m.nrows()).flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>()).collect()
    }
}

impl PortFunction for LinearPort {
    fn name(&self) -> &str {
        "linear"
    }
    fn input_width(&self) -> usize {
        self.inputs
    }
    fn output_width(&self) -> usize {
        self.outputs
    }
    fn param_len(&self) -> usize {
        self.inputs * self.outputs
    }
    fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|r| crate::autodiff::dot(&params[r * self.inputs..(r + 1) * self.inputs], input))
            .collect()
    }
    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: Var, input: Var) -> Var {
        tape.affine(params, 0, None, self.outputs, self.inputs, input)
    }
}
