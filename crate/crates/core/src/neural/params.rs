use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::net::NeuralNet;
use crate::error::{check_len, Error, Result};

/// Named region of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat joint parameter vector with a stable named layout.
///
/// Names are dotted paths (`aug.layer0.weight`); a group such as `aug` is the
/// contiguous union of every slice under that prefix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector {
    values: Vec<f64>,
    slices: Vec<ParamSlice>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: &[f64]) -> Result<()> {
        let name = name.into();
        let len: usize = shape.iter().product();
        check_len(&format!("parameter slice {name}"), len, values.len())?;
        if self.slices.iter().any(|s| s.name == name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter slice {name}")));
        }
        self.slices.push(ParamSlice {
            name,
            offset: self.values.len(),
            shape,
        });
        self.values.extend_from_slice(values);
        Ok(())
    }

    /// Adds one slice per layer weight and bias, plus the skip map if present.
    pub fn push_net(&mut self, prefix: &str, net: &NeuralNet) -> Result<()> {
        let shape = net.shape();
        for (i, l) in shape.layers().iter().enumerate() {
            self.push(format!("{prefix}.layer{i}.weight"), vec![l.rows, l.cols], net.weight(i))?;
            self.push(format!("{prefix}.layer{i}.bias"), vec![l.rows], net.bias(i))?;
        }
        if let Some(w) = net.skip_weight() {
            self.push(format!("{prefix}.skip.weight"), vec![shape.output, shape.input], w)?;
        }
        if shape.param_len() == 0 {
            self.push(format!("{prefix}.empty"), vec![0], &[])?;
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slices(&self) -> &[ParamSlice] {
        &self.slices
    }

    /// Range covered by `name` itself or every slice under `name.`.
    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        let dotted = format!("{name}.");
        let matching: Vec<&ParamSlice> = self
            .slices
            .iter()
            .filter(|s| s.name == name || s.name.starts_with(&dotted))
            .collect();
        let first = matching
            .first()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter slice {name}")))?;
        let last = matching.last().unwrap();
        Ok(first.offset..last.offset + last.len())
    }

    pub fn get(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.values[self.range(name)?])
    }

    /// Same layout holding new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", self.values.len(), values.len())?;
        Ok(ParameterVector {
            values,
            slices: self.slices.clone(),
        })
    }

    /// Rebuilds from a layout and values, checking the layout tiles the vector.
    pub fn from_parts(slices: Vec<ParamSlice>, values: Vec<f64>) -> Result<Self> {
        let mut off = 0;
        for s in &slices {
            if s.offset != off {
                return Err(Error::InvalidArgument(format!(
                    "parameter slice {} starts at {} but {} was expected",
                    s.name, s.offset, off
                )));
            }
            off += s.len();
        }
        check_len("parameter vector", off, values.len())?;
        Ok(ParameterVector { values, slices })
    }
}
