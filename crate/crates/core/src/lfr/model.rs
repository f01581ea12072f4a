use std::sync::Arc;

use nalgebra::DMatrix;

use super::graph::{build_dependency_graph, check_well_posedness, AUG_NODE, BASE_NODE};
use super::matrix::{ColBlock, Dims, InterconnectionMatrix, RowBlock};
use super::port::PortFunction;
use crate::autodiff::{const_mat_vec, Tape, Var};
use crate::error::{check_len, Error, Result};

/// All signals of one LFR step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSignals {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub z1: Vec<f64>,
    pub w1: Vec<f64>,
    pub z2: Vec<f64>,
    pub w2: Vec<f64>,
    pub x_next: Vec<f64>,
    pub y: Vec<f64>,
}

/// Nonzero blocks of `S`, cached per (row block, column block).
#[derive(Debug, Clone)]
struct Blocks {
    mats: Vec<Option<DMatrix<f64>>>,
}

impl Blocks {
    fn new(s: &InterconnectionMatrix) -> Self {
        let mut mats = Vec::with_capacity(16);
        for r in RowBlock::ALL {
            for c in ColBlock::ALL {
                mats.push((!s.block_is_zero(r, c)).then(|| s.block(r, c)));
            }
        }
        Blocks { mats }
    }

    fn get(&self, r: RowBlock, c: ColBlock) -> Option<&DMatrix<f64>> {
        let ri = RowBlock::ALL.iter().position(|b| *b == r).unwrap();
        let ci = ColBlock::ALL.iter().position(|b| *b == c).unwrap();
        self.mats[ri * 4 + ci].as_ref()
    }
}

/// Baseline and learned component joined through a fixed interconnection matrix.
#[derive(Clone)]
pub struct LfrModel {
    s: InterconnectionMatrix,
    blocks: Blocks,
    base: Arc<dyn PortFunction>,
    aug: Arc<dyn PortFunction>,
    theta_base: Vec<f64>,
    theta_aug: Vec<f64>,
    order: Vec<usize>,
}

impl std::fmt::Debug for LfrModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LfrModel")
            .field("dims", self.s.dims())
            .field("base", &self.base.name())
            .field("aug", &self.aug.name())
            .field("order", &self.order)
            .finish()
    }
}

impl LfrModel {
    /// Checks port widths against `S` and certifies well-posedness.
    pub fn new(
        s: InterconnectionMatrix,
        base: Arc<dyn PortFunction>,
        theta_base: Vec<f64>,
        aug: Arc<dyn PortFunction>,
        theta_aug: Vec<f64>,
    ) -> Result<Self> {
        let d = *s.dims();
        check_len("baseline port input (n_z1)", d.n_z1, base.input_width())?;
        check_len("baseline port output (n_w1)", d.n_w1, base.output_width())?;
        check_len("augmentation port input (n_z2)", d.n_z2, aug.input_width())?;
        check_len("augmentation port output (n_w2)", d.n_w2, aug.output_width())?;
        check_len("baseline parameters", base.param_len(), theta_base.len())?;
        check_len("augmentation parameters", aug.param_len(), theta_aug.len())?;
        let graph = build_dependency_graph(&s, &base.feedthrough(), &aug.feedthrough())?;
        let order = check_well_posedness(&graph)?;
        Ok(LfrModel {
            blocks: Blocks::new(&s),
            s,
            base,
            aug,
            theta_base,
            theta_aug,
            order,
        })
    }

    pub fn dims(&self) -> &Dims {
        self.s.dims()
    }

    pub fn interconnection(&self) -> &InterconnectionMatrix {
        &self.s
    }

    pub fn base(&self) -> &Arc<dyn PortFunction> {
        &self.base
    }

    pub fn aug(&self) -> &Arc<dyn PortFunction> {
        &self.aug
    }

    pub fn theta_base(&self) -> &[f64] {
        &self.theta_base
    }

    pub fn theta_aug(&self) -> &[f64] {
        &self.theta_aug
    }

    pub fn evaluation_order(&self) -> &[usize] {
        &self.order
    }

    /// Same structure with different parameters.
    pub fn with_params(&self, theta_base: Vec<f64>, theta_aug: Vec<f64>) -> Result<Self> {
        check_len("baseline parameters", self.base.param_len(), theta_base.len())?;
        check_len("augmentation parameters", self.aug.param_len(), theta_aug.len())?;
        Ok(LfrModel {
            theta_base,
            theta_aug,
            ..self.clone()
        })
    }

    /// Same ports and parameters with a different interconnection matrix.
    pub fn with_interconnection(&self, s: InterconnectionMatrix) -> Result<Self> {
        LfrModel::new(
            s,
            self.base.clone(),
            self.theta_base.clone(),
            self.aug.clone(),
            self.theta_aug.clone(),
        )
    }

    fn row_plain(&self, r: RowBlock, parts: [Option<&[f64]>; 4]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims().row_width(r)];
        for (c, part) in ColBlock::ALL.iter().zip(parts) {
            if let (Some(m), Some(v)) = (self.blocks.get(r, *c), part) {
                for (o, add) in out.iter_mut().zip(const_mat_vec(m, v)) {
                    *o += add;
                }
            }
        }
        out
    }

    /// One step at the stored parameters.
    pub fn evaluate_step(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.evaluate_step_with(&self.theta_base, &self.theta_aug, x, u)?;
        Ok((s.x_next, s.y))
    }

    /// One step at explicit parameters, following the topological order of
    /// the ports. A port input is formed only from port outputs already
    /// computed; blocks from later ports are skipped, which is exact because
    /// the ordering guarantees those ports have no feedthrough dependence.
    pub fn evaluate_step_with(
        &self,
        theta_base: &[f64],
        theta_aug: &[f64],
        x: &[f64],
        u: &[f64],
    ) -> Result<StepSignals> {
        let d = self.dims();
        check_len("state", d.n_x, x.len())?;
        check_len("input", d.n_u, u.len())?;
        let mut z1 = Vec::new();
        let mut z2 = Vec::new();
        let mut w1: Option<Vec<f64>> = None;
        let mut w2: Option<Vec<f64>> = None;
        for &node in &self.order {
            match node {
                BASE_NODE => {
                    z1 = self.row_plain(RowBlock::Z1, [Some(x), Some(u), w1.as_deref(), w2.as_deref()]);
                    let w = self.base.eval(theta_base, &z1);
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(non_finite(self.base.name()));
                    }
                    w1 = Some(w);
                }
                AUG_NODE => {
                    z2 = self.row_plain(RowBlock::Z2, [Some(x), Some(u), w1.as_deref(), w2.as_deref()]);
                    let w = self.aug.eval(theta_aug, &z2);
                    if w.iter().any(|v| !v.is_finite()) {
                        return Err(non_finite(self.aug.name()));
                    }
                    w2 = Some(w);
                }
                _ => unreachable!(),
            }
        }
        let (w1, w2) = (w1.unwrap(), w2.unwrap());
        let parts = [Some(x), Some(u), Some(&w1[..]), Some(&w2[..])];
        let x_next = self.row_plain(RowBlock::X, parts);
        let y = self.row_plain(RowBlock::Y, parts);
        if x_next.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(non_finite("interconnection"));
        }
        Ok(StepSignals {
            x: x.to_vec(),
            u: u.to_vec(),
            z1,
            w1,
            z2,
            w2,
            x_next,
            y,
        })
    }

    fn row_taped<'a>(&'a self, tape: &mut Tape<'a>, r: RowBlock, parts: [Option<Var>; 4]) -> Var {
        let mut terms = Vec::new();
        for (c, part) in ColBlock::ALL.iter().zip(parts) {
            if let (Some(m), Some(v)) = (self.blocks.get(r, *c), part) {
                terms.push(tape.mat_vec(m, v));
            }
        }
        match terms.len() {
            0 => tape.leaf(vec![0.0; self.dims().row_width(r)]),
            1 => terms[0],
            _ => tape.sum(&terms),
        }
    }

    /// Records one step on a tape; returns `(x_next, y)`.
    pub fn record_step<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        theta_base: Var,
        theta_aug: Var,
        x: Var,
        u: Var,
    ) -> (Var, Var) {
        let mut w1 = None;
        let mut w2 = None;
        for &node in &self.order {
            match node {
                BASE_NODE => {
                    let z1 = self.row_taped(tape, RowBlock::Z1, [Some(x), Some(u), w1, w2]);
                    w1 = Some(self.base.record(tape, theta_base, z1));
                }
                AUG_NODE => {
                    let z2 = self.row_taped(tape, RowBlock::Z2, [Some(x), Some(u), w1, w2]);
                    w2 = Some(self.aug.record(tape, theta_aug, z2));
                }
                _ => unreachable!(),
            }
        }
        let parts = [Some(x), Some(u), w1, w2];
        let x_next = self.row_taped(tape, RowBlock::X, parts);
        let y = self.row_taped(tape, RowBlock::Y, parts);
        (x_next, y)
    }

    /// Free-run simulation at the stored parameters.
    pub fn simulate(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.simulate_with(&self.theta_base, &self.theta_aug, x0, inputs)
    }

    pub fn simulate_with(
        &self,
        theta_base: &[f64],
        theta_aug: &[f64],
        x0: &[f64],
        inputs: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        let mut x = x0.to_vec();
        let mut ys = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            let s = self
                .evaluate_step_with(theta_base, theta_aug, &x, u)
                .map_err(|e| at_step(e, k))?;
            ys.push(s.y);
            x = s.x_next;
        }
        Ok(ys)
    }

    /// Simulation keeping every intermediate signal.
    pub fn simulate_signals(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<StepSignals>> {
        let mut x = x0.to_vec();
        let mut out = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            let s = self
                .evaluate_step_with(&self.theta_base, &self.theta_aug, &x, u)
                .map_err(|e| at_step(e, k))?;
            x = s.x_next.clone();
            out.push(s);
        }
        Ok(out)
    }
}

fn non_finite(port: &str) -> Error {
    Error::NonFinite {
        port: port.to_string(),
        step: None,
    }
}

fn at_step(e: Error, k: usize) -> Error {
    match e {
        Error::NonFinite { port, .. } => Error::NonFinite { port, step: Some(k) },
        other => other,
    }
}
