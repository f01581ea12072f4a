use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{ChannelStats, DataSequence};
use crate::error::{Error, Result};
use crate::lfr::PortFunction;

/// Per-channel affine scaling `v_n = scale * (v - mean)` for inputs, baseline
/// states and outputs. The scales are inverse standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub u_mean: Vec<f64>,
    pub u_scale: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_scale: Vec<f64>,
}

fn scales(signal: &str, stats: &ChannelStats) -> Result<Vec<f64>> {
    stats
        .std
        .iter()
        .enumerate()
        .map(|(channel, s)| {
            if s.is_finite() && *s > 0.0 {
                Ok(1.0 / s)
            } else {
                Err(Error::DegenerateChannel {
                    signal: signal.to_string(),
                    channel,
                })
            }
        })
        .collect()
}

fn apply(v: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    v.iter().zip(mean).zip(scale).map(|((x, m), s)| s * (x - m)).collect()
}

fn invert(v: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    v.iter().zip(mean).zip(scale).map(|((x, m), s)| x / s + m).collect()
}

impl NormalizationTransform {
    pub fn identity(n_u: usize, n_x: usize, n_y: usize) -> Self {
        NormalizationTransform {
            u_mean: vec![0.0; n_u],
            u_scale: vec![1.0; n_u],
            x_mean: vec![0.0; n_x],
            x_scale: vec![1.0; n_x],
            y_mean: vec![0.0; n_y],
            y_scale: vec![1.0; n_y],
        }
    }

    pub fn from_stats(u: &ChannelStats, x: &ChannelStats, y: &ChannelStats) -> Result<Self> {
        Ok(NormalizationTransform {
            u_scale: scales("u", u)?,
            x_scale: scales("x", x)?,
            y_scale: scales("y", y)?,
            u_mean: u.mean.clone(),
            x_mean: x.mean.clone(),
            y_mean: y.mean.clone(),
        })
    }

    pub fn normalize_u(&self, u: &[f64]) -> Vec<f64> {
        apply(u, &self.u_mean, &self.u_scale)
    }

    pub fn normalize_x(&self, x: &[f64]) -> Vec<f64> {
        apply(x, &self.x_mean, &self.x_scale)
    }

    pub fn normalize_y(&self, y: &[f64]) -> Vec<f64> {
        apply(y, &self.y_mean, &self.y_scale)
    }

    pub fn denormalize_x(&self, x: &[f64]) -> Vec<f64> {
        invert(x, &self.x_mean, &self.x_scale)
    }

    pub fn denormalize_y(&self, y: &[f64]) -> Vec<f64> {
        invert(y, &self.y_mean, &self.y_scale)
    }

    pub fn normalize_sequence(&self, seq: &DataSequence) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            seq.u.iter().map(|v| self.normalize_u(v)).collect(),
            seq.y.iter().map(|v| self.normalize_y(v)).collect(),
        )
    }
}

/// Input/output statistics from the data and state statistics from a
/// baseline simulation driven by the same input from the zero state, with the
/// first `transient` samples discarded.
pub fn compute_normalization(
    data: &DataSequence,
    base: &dyn PortFunction,
    theta_base: &[f64],
    n_x: usize,
    transient: usize,
) -> Result<NormalizationTransform> {
    if transient >= data.len() {
        return Err(Error::InvalidArgument(format!(
            "transient of {transient} samples leaves no data out of {}",
            data.len()
        )));
    }
    let mut x = vec![0.0; n_x];
    let mut states = Vec::with_capacity(data.len() - transient);
    for (k, u) in data.u.iter().enumerate() {
        let mut z = x.clone();
        z.extend_from_slice(u);
        let w = base.eval(theta_base, &z);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                port: base.name().to_string(),
                step: Some(k),
            });
        }
        if k >= transient {
            states.push(x);
        }
        x = w[..n_x].to_vec();
    }
    NormalizationTransform::from_stats(&data.input_stats(), &ChannelStats::of(&states), &data.output_stats())
}

/// Port acting in normalized coordinates:
/// `w_n = out_scale * (inner(z_n / in_scale + in_mean) - out_mean)`.
pub struct NormalizedPort {
    inner: Arc<dyn PortFunction>,
    in_inv_scale: Vec<f64>,
    in_mean: Vec<f64>,
    out_scale: Vec<f64>,
    out_shift: Vec<f64>,
}

impl NormalizedPort {
    pub fn new(
        inner: Arc<dyn PortFunction>,
        in_mean: Vec<f64>,
        in_scale: &[f64],
        out_mean: &[f64],
        out_scale: Vec<f64>,
    ) -> Self {
        assert_eq!(in_mean.len(), inner.input_width(), "input normalization width");
        assert_eq!(out_scale.len(), inner.output_width(), "output normalization width");
        NormalizedPort {
            in_inv_scale: in_scale.iter().map(|s| 1.0 / s).collect(),
            in_mean,
            out_shift: out_scale.iter().zip(out_mean).map(|(s, m)| -s * m).collect(),
            out_scale,
            inner,
        }
    }

    pub fn inner(&self) -> &Arc<dyn PortFunction> {
        &self.inner
    }
}

impl PortFunction for NormalizedPort {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn input_width(&self) -> usize {
        self.inner.input_width()
    }

    fn output_width(&self) -> usize {
        self.inner.output_width()
    }

    fn param_len(&self) -> usize {
        self.inner.param_len()
    }

    fn feedthrough(&self) -> Vec<bool> {
        self.inner.feedthrough()
    }

    fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = input
            .iter()
            .zip(&self.in_inv_scale)
            .zip(&self.in_mean)
            .map(|((v, s), m)| s * v + m)
            .collect();
        self.inner
            .eval(params, &z)
            .iter()
            .zip(&self.out_scale)
            .zip(&self.out_shift)
            .map(|((v, s), t)| s * v + t)
            .collect()
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: Var, input: Var) -> Var {
        let z = tape.scale_shift(input, &self.in_inv_scale, &self.in_mean);
        let w = self.inner.record(tape, params, z);
        tape.scale_shift(w, &self.out_scale, &self.out_shift)
    }
}

/// Wraps a baseline `(x, u) -> (f, h)` so it maps normalized states and
/// inputs to normalized next states and outputs.
pub fn normalize_baseline(base: Arc<dyn PortFunction>, t: &NormalizationTransform) -> NormalizedPort {
    let mut in_mean = t.x_mean.clone();
    in_mean.extend_from_slice(&t.u_mean);
    let in_scale: Vec<f64> = t.x_scale.iter().chain(&t.u_scale).copied().collect();
    let out_mean: Vec<f64> = t.x_mean.iter().chain(&t.y_mean).copied().collect();
    let out_scale: Vec<f64> = t.x_scale.iter().chain(&t.y_scale).copied().collect();
    NormalizedPort::new(base, in_mean, &in_scale, &out_mean, out_scale)
}
