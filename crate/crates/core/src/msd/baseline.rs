use crate::autodiff::{Tape, Var};
use crate::lfr::PortFunction;

use super::dynamics::{msd_step, msd_step_vjp, MsdParams};

/// Linear chain discretized with one RK4 step per sample, as a port function.
///
/// Input `(x, u)`, output `(x_next, p_out)` where `p_out` is the position of
/// `output_body` at the current sample. Parameters are `(masses, springs, dampers)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsdBaseline {
    pub bodies: usize,
    pub ts: f64,
    pub output_body: usize,
}

impl MsdBaseline {
    pub fn benchmark() -> Self {
        MsdBaseline {
            bodies: 2,
            ts: 0.02,
            output_body: 1,
        }
    }

    pub fn state_width(&self) -> usize {
        2 * self.bodies
    }
}

impl PortFunction for MsdBaseline {
    fn name(&self) -> &str {
        "msd-baseline"
    }

    fn input_width(&self) -> usize {
        2 * self.bodies + 1
    }

    fn output_width(&self) -> usize {
        2 * self.bodies + 1
    }

    fn param_len(&self) -> usize {
        3 * self.bodies
    }

    fn eval(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let n = self.state_width();
        let p = MsdParams::from_theta(params, 0.0);
        let mut out = msd_step(&p, &input[..n], input[n], self.ts);
        out.push(input[self.output_body]);
        out
    }

    fn record<'a>(&'a self, tape: &mut Tape<'a>, params: Var, input: Var) -> Var {
        let value = self.eval(tape.value(params), tape.value(input));
        let n = self.state_width();
        tape.custom(&[params, input], value, move |vals, g| {
            let p = MsdParams::from_theta(vals[0], 0.0);
            let z = vals[1];
            let (mut gx, gu, gth) = msd_step_vjp(&p, &z[..n], z[n], self.ts, &g[..n]);
            gx[self.output_body] += g[n];
            gx.push(gu);
            vec![gth, gx]
        })
    }
}

/// Baseline port with ideal or approximate parameters.
pub fn baseline_model(approx: bool) -> (MsdBaseline, Vec<f64>) {
    let params = if approx {
        MsdParams::approx_baseline()
    } else {
        MsdParams::ideal_baseline()
    };
    (MsdBaseline::benchmark(), params.theta())
}
