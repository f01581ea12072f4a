//! Vector-valued tape for reverse-mode differentiation.
//!
//! Every node holds a dense `f64` vector. Operations are recorded in
//! evaluation order, so the reverse sweep is a single pass from the seed node
//! back to the leaves. Parameter leaves carry whole parameter groups; affine
//! layers index into them by offset, which keeps the tape small when a network
//! is unrolled over many simulation steps.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type CustomBackward<'a> = Box<dyn Fn(&[&[f64]], &[f64]) -> Vec<Vec<f64>> + 'a>;

enum Op<'a> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    /// Elementwise `scale[i] * x[i] + shift[i]`; only the scale matters for the adjoint.
    ScaleShift(Var, Vec<f64>),
    Tanh(Var),
    Affine {
        params: Var,
        w_off: usize,
        b_off: Option<usize>,
        rows: usize,
        cols: usize,
        x: Var,
    },
    MatVec(&'a DMatrix<f64>, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    SumSquares(Var),
    Sum(Vec<Var>),
    Custom(Vec<Var>, CustomBackward<'a>),
}

struct Node<'a> {
    value: Vec<f64>,
    op: Op<'a>,
}

/// Record of a forward computation.
///
/// The lifetime ties constant matrices and custom backward closures to the
/// model that produced them.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Vec<f64>, op: Op<'a>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf. Gradients are available for every leaf, so parameters and
    /// constants are recorded the same way.
    pub fn leaf(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| c * x).collect();
        self.push(value, Op::Scale(a, c))
    }

    pub fn scale_shift(&mut self, a: Var, scale: &[f64], shift: &[f64]) -> Var {
        let x = self.value(a);
        assert_eq!(x.len(), scale.len(), "scale_shift width");
        assert_eq!(x.len(), shift.len(), "scale_shift width");
        let value = x
            .iter()
            .zip(scale)
            .zip(shift)
            .map(|((x, s), t)| s * x + t)
            .collect();
        self.push(value, Op::ScaleShift(a, scale.to_vec()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    /// `W x (+ b)` with `W` (row-major, `rows x cols`) and `b` read from a
    /// parameter node at the given offsets.
    pub fn affine(
        &mut self,
        params: Var,
        w_off: usize,
        b_off: Option<usize>,
        rows: usize,
        cols: usize,
        x: Var,
    ) -> Var {
        let p = self.value(params);
        let xv = self.value(x);
        assert_eq!(xv.len(), cols, "affine input width");
        let w = &p[w_off..w_off + rows * cols];
        let mut value: Vec<f64> = match b_off {
            Some(off) => p[off..off + rows].to_vec(),
            None => vec![0.0; rows],
        };
        for (r, out) in value.iter_mut().enumerate() {
            *out += dot(&w[r * cols..(r + 1) * cols], xv);
        }
        self.push(
            value,
            Op::Affine {
                params,
                w_off,
                b_off,
                rows,
                cols,
                x,
            },
        )
    }

    /// Product with a constant matrix.
    pub fn mat_vec(&mut self, m: &'a DMatrix<f64>, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.len(), m.ncols(), "mat_vec input width");
        let value = const_mat_vec(m, xv);
        self.push(value, Op::MatVec(m, x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a)[start..start + len].to_vec();
        self.push(value, Op::Slice(a, start))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = vec![self.value(a).iter().map(|x| x * x).sum()];
        self.push(value, Op::SumSquares(a))
    }

    /// Elementwise sum of equally sized nodes.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let n = self.value(parts[0]).len();
        let mut value = vec![0.0; n];
        for p in parts {
            for (acc, x) in value.iter_mut().zip(self.value(*p)) {
                *acc += x;
            }
        }
        self.push(value, Op::Sum(parts.to_vec()))
    }

    /// Records an operation whose value and vector-Jacobian product are
    /// supplied by the caller. `backward` receives the input values and the
    /// output adjoint, and returns one adjoint per input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Vec<f64>,
        backward: impl Fn(&[&[f64]], &[f64]) -> Vec<Vec<f64>> + 'a,
    ) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), Box::new(backward)))
    }

    /// Propagates `seed` (the cotangent of `output`) back through the tape.
    pub fn backward(&self, output: Var, seed: &[f64]) -> Result<Gradients> {
        assert_eq!(seed.len(), self.value(output).len(), "seed width");
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        adj[output.0] = seed.to_vec();
        for idx in (0..=output.0).rev() {
            if adj[idx].is_empty() {
                continue;
            }
            if adj[idx].iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { node: idx });
            }
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = std::mem::take(&mut adj[idx]);
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut adj, *b, &neg);
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&g, self.value(*b), |g, y| g * y);
                    let gb = zip_map(&g, self.value(*a), |g, x| g * x);
                    accumulate(&mut adj, *a, &ga);
                    accumulate(&mut adj, *b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                    accumulate(&mut adj, *a, &ga);
                }
                Op::ScaleShift(a, s) => {
                    let ga = zip_map(&g, s, |g, s| g * s);
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |g, t| g * (1.0 - t * t));
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Affine {
                    params,
                    w_off,
                    b_off,
                    rows,
                    cols,
                    x,
                } => {
                    let (rows, cols) = (*rows, *cols);
                    let p = self.value(*params);
                    let xv = self.value(*x);
                    let w = &p[*w_off..*w_off + rows * cols];
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        axpy(gr, &w[r * cols..(r + 1) * cols], &mut gx);
                    }
                    let gp = ensure(&mut adj, *params, p.len());
                    for r in 0..rows {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &mut gp[*w_off + r * cols..*w_off + (r + 1) * cols];
                        axpy(gr, xv, row);
                    }
                    if let Some(off) = b_off {
                        for (acc, gr) in gp[*off..*off + rows].iter_mut().zip(&g) {
                            *acc += gr;
                        }
                    }
                    accumulate(&mut adj, *x, &gx);
                }
                Op::MatVec(m, x) => {
                    let mut gx = vec![0.0; m.ncols()];
                    for (c, out) in gx.iter_mut().enumerate() {
                        *out = m.column(c).iter().zip(&g).map(|(a, b)| a * b).sum();
                    }
                    accumulate(&mut adj, *x, &gx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        accumulate(&mut adj, *p, &g[off..off + n]);
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.value(*a).len();
                    let ga = ensure(&mut adj, *a, n);
                    for (acc, gi) in ga[*start..*start + g.len()].iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::SumSquares(a) => {
                    let ga: Vec<f64> = self.value(*a).iter().map(|x| 2.0 * x * g[0]).collect();
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        accumulate(&mut adj, *p, &g);
                    }
                }
                Op::Custom(inputs, backward) => {
                    let values: Vec<&[f64]> = inputs.iter().map(|v| self.value(*v)).collect();
                    let grads = backward(&values, &g);
                    debug_assert_eq!(grads.len(), inputs.len());
                    for (v, gv) in inputs.iter().zip(&grads) {
                        accumulate(&mut adj, *v, gv);
                    }
                }
            }
        }
        Ok(Gradients { adj })
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Vec<f64>>,
}

impl Gradients {
    /// Adjoint of a leaf; empty when the output does not depend on it.
    pub fn wrt(&self, v: Var) -> &[f64] {
        &self.adj[v.0]
    }

    /// Adjoint of a leaf, padded with zeros to `len` if it never received one.
    pub fn wrt_dense(&self, v: Var, len: usize) -> Vec<f64> {
        let g = &self.adj[v.0];
        if g.is_empty() {
            vec![0.0; len]
        } else {
            g.clone()
        }
    }
}

fn ensure(adj: &mut [Vec<f64>], v: Var, len: usize) -> &mut Vec<f64> {
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; len];
    }
    slot
}

fn accumulate(adj: &mut [Vec<f64>], v: Var, g: &[f64]) {
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        *slot = g.to_vec();
    } else {
        for (acc, x) in slot.iter_mut().zip(g) {
            *acc += x;
        }
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "elementwise width");
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn const_mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (c, xc) in x.iter().enumerate() {
        if *xc == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.column(c).iter()) {
            *o += a * xc;
        }
    }
    out
}
