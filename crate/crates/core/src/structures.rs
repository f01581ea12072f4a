//! Named augmentation structures realized as interconnection matrices.
//!
//! With a baseline port `phi_base(x, u) = (f, h)` (state width `n`, input `m`,
//! output `p`) and `q` augmentation states `xb`:
//!
//! | kind | model state | augmentation input | update and output |
//! |---|---|---|---|
//! | static parallel | `x` | `(x, u)` | `x+ = f + f_a`, `y = h + h_a` |
//! | dynamic parallel | `(x, xb)` | `(x, xb, u)` | `x+ = f + f_a`, `xb+ = g_a`, `y = h + h_a` |
//! | linear dynamic parallel | as dynamic parallel, affine augmentation | | |
//! | static series | `x` | `h` | `x+ = f`, `y = phi_a(h)` |
//! | dynamic series | `(x, xb)` | `(xb, h)` | `(xb+, y) = phi_a(xb, h)` |
//!
//! Augmentation outputs list state corrections first (baseline states, then
//! augmentation states) and the output correction last. Parallel kinds use a
//! plain network; series kinds use a residual network whose identity skip
//! makes the zero-branch network the identity map.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lfr::{ColBlock, Dims, InterconnectionMatrix, LfrModel, PortFunction, RowBlock};
use crate::neural::{Activation, InitMode, NetShape, NeuralNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    StaticParallel,
    DynamicParallel,
    LinearDynamicParallel,
    StaticSeries,
    DynamicSeries,
}

impl StructureKind {
    pub const ALL: [StructureKind; 5] = [
        StructureKind::StaticParallel,
        StructureKind::DynamicParallel,
        StructureKind::LinearDynamicParallel,
        StructureKind::StaticSeries,
        StructureKind::DynamicSeries,
    ];

    pub fn is_parallel(self) -> bool {
        matches!(
            self,
            StructureKind::StaticParallel | StructureKind::DynamicParallel | StructureKind::LinearDynamicParallel
        )
    }

    pub fn is_dynamic(self) -> bool {
        matches!(
            self,
            StructureKind::DynamicParallel | StructureKind::LinearDynamicParallel | StructureKind::DynamicSeries
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureKind::StaticParallel => "static_parallel",
            StructureKind::DynamicParallel => "dynamic_parallel",
            StructureKind::LinearDynamicParallel => "linear_dynamic_parallel",
            StructureKind::StaticSeries => "static_series",
            StructureKind::DynamicSeries => "dynamic_series",
        }
    }
}

impl std::str::FromStr for StructureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StructureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown structure kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub kind: StructureKind,
    /// Baseline state width.
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    /// Augmentation state width; zero for static kinds.
    pub n_xbar: usize,
    pub hidden_layers: usize,
    pub nodes: usize,
}

impl StructureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_y == 0 {
            return Err(Error::InvalidStructure("input and output widths must be positive".into()));
        }
        match (self.kind.is_dynamic(), self.n_xbar) {
            (true, 0) => Err(Error::InvalidStructure(format!(
                "{} needs augmentation states",
                self.kind.name()
            ))),
            (false, q) if q > 0 => Err(Error::InvalidStructure(format!(
                "{} has no augmentation states",
                self.kind.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn model_state_width(&self) -> usize {
        self.n_x + self.n_xbar
    }
}

/// Interconnection and network shape for a structure; parameters are unset.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSkeleton {
    pub spec: StructureSpec,
    pub s: InterconnectionMatrix,
    pub aug_shape: NetShape,
}

impl StructureSkeleton {
    pub fn dims(&self) -> &Dims {
        self.s.dims()
    }

    /// Augmentation network that leaves the baseline behavior unchanged.
    pub fn neutral_aug(&self, seed: u64) -> NeuralNet {
        NeuralNet::init_neutral(self.aug_shape, InitMode::Aug, seed)
    }

    pub fn into_model(
        &self,
        base: Arc<dyn PortFunction>,
        theta_base: Vec<f64>,
        theta_aug: Vec<f64>,
    ) -> Result<LfrModel> {
        let (n, m, p) = (self.spec.n_x, self.spec.n_u, self.spec.n_y);
        if base.input_width() != n + m || base.output_width() != n + p {
            return Err(Error::InvalidStructure(format!(
                "baseline port maps {} -> {}, structure expects {} -> {}",
                base.input_width(),
                base.output_width(),
                n + m,
                n + p
            )));
        }
        LfrModel::new(self.s.clone(), base, theta_base, Arc::new(self.aug_shape), theta_aug)
    }
}

pub fn build_structure(spec: &StructureSpec) -> Result<StructureSkeleton> {
    spec.validate()?;
    let (n, m, p, q) = (spec.n_x, spec.n_u, spec.n_y, spec.n_xbar);
    use ColBlock as C;
    use RowBlock as R;
    let (n_z2, n_w2) = match spec.kind {
        StructureKind::StaticParallel => (n + m, n + p),
        StructureKind::DynamicParallel | StructureKind::LinearDynamicParallel => (n + q + m, n + q + p),
        StructureKind::StaticSeries => (p, p),
        StructureKind::DynamicSeries => (q + p, q + p),
    };
    let dims = Dims {
        n_x: n + q,
        n_u: m,
        n_y: p,
        n_z1: n + m,
        n_w1: n + p,
        n_z2,
        n_w2,
    };
    let mut s = InterconnectionMatrix::zeros(dims);
    // Baseline sees (x, u) and produces (f, h).
    s.set_identity(R::Z1, C::X, 0, 0, n)?;
    s.set_identity(R::Z1, C::U, n, 0, m)?;
    s.set_identity(R::X, C::W1, 0, 0, n)?;
    match spec.kind {
        StructureKind::StaticParallel | StructureKind::DynamicParallel | StructureKind::LinearDynamicParallel => {
            s.set_identity(R::Z2, C::X, 0, 0, n + q)?;
            s.set_identity(R::Z2, C::U, n + q, 0, m)?;
            s.set_identity(R::X, C::W2, 0, 0, n + q)?;
            s.set_identity(R::Y, C::W1, 0, n, p)?;
            s.set_identity(R::Y, C::W2, 0, n + q, p)?;
        }
        StructureKind::StaticSeries => {
            s.set_identity(R::Z2, C::W1, 0, n, p)?;
            s.set_identity(R::Y, C::W2, 0, 0, p)?;
        }
        StructureKind::DynamicSeries => {
            s.set_identity(R::Z2, C::X, 0, n, q)?;
            s.set_identity(R::Z2, C::W1, q, n, p)?;
            s.set_identity(R::X, C::W2, n, 0, q)?;
            s.set_identity(R::Y, C::W2, 0, q, p)?;
        }
    }
    let aug_shape = NetShape {
        input: n_z2,
        output: n_w2,
        hidden_layers: spec.hidden_layers,
        nodes: spec.nodes,
        activation: if spec.kind == StructureKind::LinearDynamicParallel {
            Activation::Identity
        } else {
            Activation::Tanh
        },
        residual: !spec.kind.is_parallel(),
    };
    Ok(StructureSkeleton {
        spec: *spec,
        s,
        aug_shape,
    })
}

/// Step evaluated straight from the defining formulas of the kind, without `S`.
pub fn direct_step(spec: &StructureSpec, model: &LfrModel, x: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, q) = (spec.n_x, spec.n_xbar);
    let base = |xt: &[f64]| {
        let mut z = xt.to_vec();
        z.extend_from_slice(u);
        model.base().eval(model.theta_base(), &z)
    };
    let aug = |z: &[f64]| model.aug().eval(model.theta_aug(), z);
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, r)| p + r).collect::<Vec<f64>>();
    match spec.kind {
        StructureKind::StaticParallel | StructureKind::DynamicParallel | StructureKind::LinearDynamicParallel => {
            let fh = base(&x[..n]);
            let mut z = x.to_vec();
            z.extend_from_slice(u);
            let a = aug(&z);
            let mut x_next = add(&fh[..n], &a[..n]);
            x_next.extend_from_slice(&a[n..n + q]);
            (x_next, add(&fh[n..], &a[n + q..]))
        }
        StructureKind::StaticSeries => {
            let fh = base(x);
            (fh[..n].to_vec(), aug(&fh[n..]))
        }
        StructureKind::DynamicSeries => {
            let fh = base(&x[..n]);
            let mut z = x[n..].to_vec();
            z.extend_from_slice(&fh[n..]);
            let a = aug(&z);
            let mut x_next = fh[..n].to_vec();
            x_next.extend_from_slice(&a[..q]);
            (x_next, a[q..].to_vec())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verification {
    Pass {
        max_deviation: f64,
    },
    Counterexample {
        x: Vec<f64>,
        u: Vec<f64>,
        expected: Vec<f64>,
        actual: Vec<f64>,
        deviation: f64,
    },
}

impl Verification {
    pub fn passed(&self) -> bool {
        matches!(self, Verification::Pass { .. })
    }
}

/// Largest deviation allowed between the interconnection and the direct formula.
pub const VERIFY_TOLERANCE: f64 = 1e-12;

/// Compares the interconnected step against [`direct_step`] on random
/// states and inputs drawn uniformly from `[-1, 1]`.
pub fn verify_structure(spec: &StructureSpec, model: &LfrModel, trials: usize, seed: u64) -> Verification {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let nx = model.dims().n_x;
    for _ in 0..trials {
        let x: Vec<f64> = (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..spec.n_u).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (ex, ey) = direct_step(spec, model, &x, &u);
        let mut expected = ex;
        expected.extend(ey);
        let actual = match model.evaluate_step(&x, &u) {
            Ok((mut ax, ay)) => {
                ax.extend(ay);
                ax
            }
            Err(_) => vec![f64::NAN; expected.len()],
        };
        let deviation = if actual.len() != expected.len() {
            f64::INFINITY
        } else {
            expected
                .iter()
                .zip(&actual)
                .map(|(a, b)| if (a - b).is_nan() { f64::INFINITY } else { (a - b).abs() })
                .fold(0.0, f64::max)
        };
        if deviation > VERIFY_TOLERANCE {
            return Verification::Counterexample {
                x,
                u,
                expected,
                actual,
                deviation,
            };
        }
        worst = worst.max(deviation);
    }
    Verification::Pass { max_deviation: worst }
}

/// Splits the state update of one step into the part routed from `(x, u, w1)`
/// and the part routed from the augmentation output `w2`.
pub fn state_decomposition(model: &LfrModel, x: &[f64], u: &[f64], w1: &[f64], w2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = model.interconnection();
    let mv = |c: ColBlock, v: &[f64]| -> Vec<f64> {
        let b = s.block(RowBlock::X, c);
        (0..b.nrows())
            .map(|r| (0..b.ncols()).map(|j| b[(r, j)] * v[j]).sum())
            .collect()
    };
    let xs = mv(ColBlock::X, x);
    let us = mv(ColBlock::U, u);
    let ws = mv(ColBlock::W1, w1);
    let base = (0..xs.len()).map(|i| xs[i] + us[i] + ws[i]).collect();
    (base, mv(ColBlock::W2, w2))
}
