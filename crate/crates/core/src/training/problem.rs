use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::normalization::{compute_normalization, normalize_baseline, NormalizationTransform};
use super::regularization::{regularization_grad, regularization_loss, RegularizerConfig};
use super::sampling::SubsectionBatch;
use super::trainer::TrainingConfig;
use crate::autodiff::Tape;
use crate::data::DataSequence;
use crate::error::{check_len, Error, Result};
use crate::lfr::{LfrModel, PortFunction, StepSignals};
use crate::neural::{Encoder, InitMode, NeuralNet, ParameterVector, Skip};
use crate::structures::{build_structure, StructureSpec};

/// Value and gradient of the joint cost at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub v_trunc: f64,
    pub v_reg: f64,
    pub grad: Vec<f64>,
}

impl LossEval {
    pub fn total(&self) -> f64 {
        self.v_trunc + self.v_reg
    }
}

/// Everything the optimizer needs: the interconnected model in normalized
/// coordinates, the encoder, the anchoring term and the estimation data.
///
/// The joint parameter vector holds the slices `base`, `aug.*` and `encoder.*`.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    pub spec: StructureSpec,
    pub model: LfrModel,
    pub encoder: Encoder,
    pub transform: NormalizationTransform,
    pub regularizer: RegularizerConfig,
    pub layout: ParameterVector,
    pub train_base: bool,
    base_range: Range<usize>,
    aug_range: Range<usize>,
    enc_range: Range<usize>,
    u_est: Vec<Vec<f64>>,
    y_est: Vec<Vec<f64>>,
}

/// Affine part `(A, B, C, D)` of a port `(x, u) -> (x_next, y)` around the
/// origin, obtained by probing unit vectors. Exact for linear ports.
pub fn linearize_port(
    port: &dyn PortFunction,
    theta: &[f64],
    n_x: usize,
    n_u: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let width = n_x + n_u;
    let w0 = port.eval(theta, &vec![0.0; width]);
    let n_y = w0.len() - n_x;
    let mut a = DMatrix::zeros(n_x, n_x);
    let mut b = DMatrix::zeros(n_x, n_u);
    let mut c = DMatrix::zeros(n_y, n_x);
    let mut d = DMatrix::zeros(n_y, n_u);
    for j in 0..width {
        let mut e = vec![0.0; width];
        e[j] = 1.0;
        let w = port.eval(theta, &e);
        for i in 0..n_x + n_y {
            let v = w[i] - w0[i];
            match (i < n_x, j < n_x) {
                (true, true) => a[(i, j)] = v,
                (true, false) => b[(i, j - n_x)] = v,
                (false, true) => c[(i - n_x, j)] = v,
                (false, false) => d[(i - n_x, j - n_x)] = v,
            }
        }
    }
    (a, b, c, d)
}

/// Linear map from an encoder window (`n_a` past outputs then `n_b` past
/// inputs, oldest first) to the current state of `x+ = A x + B u`,
/// `y = C x + D u`.
///
/// The state `n_a` samples back is fitted to the past outputs by least
/// squares and propagated forward with the past inputs. Inputs older than the
/// window are taken as zero.
pub fn window_state_estimator(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    n_a: usize,
    n_b: usize,
) -> DMatrix<f64> {
    let (n_x, n_u, n_y) = (a.nrows(), b.ncols(), c.nrows());
    let l = n_a;
    // Y = O x0 + G U over the last `l` samples.
    let mut o = DMatrix::zeros(l * n_y, n_x);
    let mut g = DMatrix::zeros(l * n_y, l * n_u);
    let mut powers = vec![DMatrix::identity(n_x, n_x)];
    for i in 1..=l {
        let next = a * &powers[i - 1];
        powers.push(next);
    }
    for i in 0..l {
        o.view_mut((i * n_y, 0), (n_y, n_x)).copy_from(&(c * &powers[i]));
        for j in 0..i {
            g.view_mut((i * n_y, j * n_u), (n_y, n_u))
                .copy_from(&(c * &powers[i - 1 - j] * b));
        }
        g.view_mut((i * n_y, i * n_u), (n_y, n_u)).copy_from(d);
    }
    let mut r = DMatrix::zeros(n_x, l * n_u);
    for j in 0..l {
        r.view_mut((0, j * n_u), (n_x, n_u)).copy_from(&(&powers[l - 1 - j] * b));
    }
    let svd = o.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max();
    let pinv = svd.pseudo_inverse(tol).expect("singular vectors were computed");
    let my = &powers[l] * &pinv;
    let mu_l = r - &my * &g;
    let mut m = DMatrix::zeros(n_x, n_a * n_y + n_b * n_u);
    m.view_mut((0, 0), (n_x, n_a * n_y)).copy_from(&my);
    // Input at time k - l + j sits at window column n_b - l + j when inside the window.
    for j in 0..l {
        if l - j <= n_b {
            let col = n_a * n_y + (n_b - (l - j)) * n_u;
            m.view_mut((0, col), (n_x, n_u))
                .copy_from(&mu_l.view((0, j * n_u), (n_x, n_u)));
        }
    }
    m
}

fn non_finite_at(port: &str, subsection: usize, step: usize) -> Error {
    Error::NonFinite {
        port: format!("{port} (subsection {subsection})"),
        step: Some(step),
    }
}

impl TrainingProblem {
    /// Normalizes the baseline, builds the structure with a neutral
    /// augmentation, initializes the encoder at the baseline's window state
    /// estimator and derives the anchoring weights from the baseline error.
    pub fn new(
        base: Arc<dyn PortFunction>,
        theta_base: Vec<f64>,
        spec: StructureSpec,
        estimation: &DataSequence,
        cfg: &TrainingConfig,
    ) -> Result<Self> {
        spec.validate()?;
        check_len("baseline parameters", base.param_len(), theta_base.len())?;
        check_len("estimation inputs", spec.n_u, estimation.n_u())?;
        check_len("estimation outputs", spec.n_y, estimation.n_y())?;
        let transient = cfg.normalization_transient.min(estimation.len() / 2);
        let transform = compute_normalization(estimation, base.as_ref(), &theta_base, spec.n_x, transient)?;
        let nbase: Arc<dyn PortFunction> = Arc::new(normalize_baseline(base, &transform));
        let skeleton = build_structure(&spec)?;
        let aug = skeleton.neutral_aug(cfg.seed);
        let model = skeleton.into_model(nbase.clone(), theta_base.clone(), aug.params().to_vec())?;

        let encoder = Encoder::new(
            cfg.n_a,
            cfg.n_b,
            spec.n_u,
            spec.n_y,
            spec.model_state_width(),
            cfg.encoder_hidden_layers,
            cfg.encoder_nodes,
        );
        let mut enc = NeuralNet::init_neutral(encoder.shape, InitMode::Encoder, cfg.seed.wrapping_add(1));
        if encoder.shape.skip() != Skip::Linear {
            return Err(Error::InvalidArgument(
                "encoder window width must differ from the model state width".into(),
            ));
        }
        let (a, b, c, d) = linearize_port(nbase.as_ref(), &theta_base, spec.n_x, spec.n_u);
        let m = window_state_estimator(&a, &b, &c, &d, cfg.n_a, cfg.n_b);
        let off = encoder.shape.skip_offset().unwrap();
        let width = encoder.input_width();
        let skip = &mut enc.params_mut()[off..];
        skip.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..spec.n_x {
            for col in 0..width {
                skip[r * width + col] = m[(r, col)];
            }
        }

        let mut layout = ParameterVector::new();
        layout.push("base", vec![theta_base.len()], &theta_base)?;
        layout.push_net("aug", &aug)?;
        layout.push_net("encoder", &enc)?;
        let (u_est, y_est) = transform.normalize_sequence(estimation);
        let mut problem = TrainingProblem {
            spec,
            model,
            encoder,
            transform,
            regularizer: RegularizerConfig::disabled(theta_base.clone()),
            base_range: layout.range("base")?,
            aug_range: layout.range("aug")?,
            enc_range: layout.range("encoder")?,
            layout,
            train_base: cfg.train_base,
            u_est,
            y_est,
        };
        let v_mse = problem.baseline_mse_normalized(estimation)?;
        problem.regularizer = RegularizerConfig::new(theta_base, v_mse, cfg.epsilon_reg)?;
        Ok(problem)
    }

    pub fn theta0(&self) -> &[f64] {
        self.layout.values()
    }

    pub fn param_len(&self) -> usize {
        self.layout.len()
    }

    pub fn lookback(&self) -> usize {
        self.encoder.lookback()
    }

    pub fn estimation_len(&self) -> usize {
        self.u_est.len()
    }

    /// `(theta_base, theta_aug, theta_encoder)` views.
    pub fn split<'t>(&self, theta: &'t [f64]) -> (&'t [f64], &'t [f64], &'t [f64]) {
        (
            &theta[self.base_range.clone()],
            &theta[self.aug_range.clone()],
            &theta[self.enc_range.clone()],
        )
    }

    pub fn base_range(&self) -> Range<usize> {
        self.base_range.clone()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_len("joint parameters", self.layout.len(), theta.len())
    }

    fn check_batch(&self, batch: &SubsectionBatch) -> Result<()> {
        let n = self.lookback();
        for &k in &batch.starts {
            if k < n || k + batch.horizon > self.u_est.len() {
                return Err(Error::InvalidArgument(format!(
                    "subsection start {k} outside the estimation data"
                )));
            }
        }
        Ok(())
    }

    fn trunc_scale(batch: &SubsectionBatch) -> f64 {
        1.0 / (2.0 * batch.starts.len() as f64 * (batch.horizon as f64 + 1.0))
    }

    /// Truncated simulation loss evaluated without recording, one
    /// interconnection step at a time.
    pub fn truncated_loss(&self, theta: &[f64], batch: &SubsectionBatch) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let (tb, ta, te) = self.split(theta);
        let sums = batch
            .starts
            .par_iter()
            .enumerate()
            .map(|(i, &k)| {
                let w = self.encoder.window(&self.u_est, &self.y_est, k);
                let mut x = self.encoder.estimate(te, &w);
                let mut acc = 0.0;
                for l in 0..batch.horizon {
                    let s = self
                        .model
                        .evaluate_step_with(tb, ta, &x, &self.u_est[k + l])
                        .map_err(|_| non_finite_at("rollout", i, l))?;
                    acc += s.y.iter().zip(&self.y_est[k + l]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    x = s.x_next;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::trunc_scale(batch) * sums.iter().sum::<f64>())
    }

    pub fn regularization(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        regularization_loss(self.split(theta).0, &self.regularizer)
    }

    /// `V_trunc + V_reg`.
    pub fn total_loss(&self, theta: &[f64], batch: &SubsectionBatch) -> Result<f64> {
        Ok(self.truncated_loss(theta, batch)? + self.regularization(theta)?)
    }

    /// Joint cost and its exact gradient. Subsections are recorded on
    /// separate tapes in parallel and their gradients summed in index order.
    pub fn loss_and_grad(&self, theta: &[f64], batch: &SubsectionBatch) -> Result<LossEval> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let (tb, ta, te) = self.split(theta);
        let parts = batch
            .starts
            .par_iter()
            .enumerate()
            .map(|(i, &k)| self.subsection_grad(i, k, batch.horizon, tb, ta, te))
            .collect::<Result<Vec<_>>>()?;
        let scale = Self::trunc_scale(batch);
        let mut grad = vec![0.0; theta.len()];
        let mut total = 0.0;
        for (loss, g) in parts {
            total += loss;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        let v_reg = regularization_loss(tb, &self.regularizer)?;
        let base = self.base_range.clone();
        if self.train_base {
            for (g, r) in grad[base].iter_mut().zip(regularization_grad(tb, &self.regularizer)) {
                *g += r;
            }
        } else {
            grad[base].iter_mut().for_each(|g| *g = 0.0);
        }
        Ok(LossEval {
            v_trunc: scale * total,
            v_reg,
            grad,
        })
    }

    fn subsection_grad(
        &self,
        index: usize,
        k: usize,
        horizon: usize,
        tb: &[f64],
        ta: &[f64],
        te: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let vb = tape.leaf(tb.to_vec());
        let va = tape.leaf(ta.to_vec());
        let ve = tape.leaf(te.to_vec());
        let w = tape.leaf(self.encoder.window(&self.u_est, &self.y_est, k));
        let mut x = self.encoder.shape.record_into(&mut tape, ve, w);
        let mut terms = Vec::with_capacity(horizon);
        for l in 0..horizon {
            let u = tape.leaf(self.u_est[k + l].clone());
            let (xn, y) = self.model.record_step(&mut tape, vb, va, x, u);
            if tape.value(xn).iter().chain(tape.value(y)).any(|v| !v.is_finite()) {
                return Err(non_finite_at("rollout", index, l));
            }
            let target = tape.leaf(self.y_est[k + l].clone());
            let e = tape.sub(y, target);
            terms.push(tape.sum_squares(e));
            x = xn;
        }
        let total = tape.sum(&terms);
        let loss = tape.value(total)[0];
        let grads = tape.backward(total, &[1.0])?;
        let mut g = Vec::with_capacity(self.layout.len());
        g.extend_from_slice(&grads.wrt_dense(vb, tb.len()));
        g.extend_from_slice(&grads.wrt_dense(va, ta.len()));
        g.extend_from_slice(&grads.wrt_dense(ve, te.len()));
        Ok((loss, g))
    }

    /// Initial state from the encoder at the first admissible sample, then a
    /// free-run simulation over the rest of the sequence. Returns normalized
    /// outputs for samples `lookback..len`.
    fn simulate_normalized(&self, theta: &[f64], u: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.lookback();
        if u.len() <= n {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} samples is shorter than the encoder window",
                u.len()
            )));
        }
        let (tb, ta, te) = self.split(theta);
        let x0 = self.encoder.estimate(te, &self.encoder.window(u, y, n));
        self.model.simulate_with(tb, ta, &x0, &u[n..])
    }

    /// Simulated outputs in original units for samples `lookback..len`.
    pub fn simulate(&self, theta: &[f64], seq: &DataSequence) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        let (u, y) = self.transform.normalize_sequence(seq);
        Ok(self
            .simulate_normalized(theta, &u, &y)?
            .iter()
            .map(|v| self.transform.denormalize_y(v))
            .collect())
    }

    /// Simulation RMSE in original units over samples `lookback..len`.
    pub fn rmse(&self, theta: &[f64], seq: &DataSequence) -> Result<f64> {
        let yhat = self.simulate(theta, seq)?;
        Ok(rmse_rows(&yhat, &seq.y[self.lookback()..]))
    }

    /// All interconnection signals of the free-run simulation, in normalized
    /// coordinates, for samples `lookback..len`.
    pub fn step_signals(&self, theta: &[f64], seq: &DataSequence) -> Result<Vec<StepSignals>> {
        self.check_theta(theta)?;
        let n = self.lookback();
        let (u, y) = self.transform.normalize_sequence(seq);
        if u.len() <= n {
            return Err(Error::InvalidArgument("sequence shorter than the encoder window".into()));
        }
        let (tb, ta, te) = self.split(theta);
        let x0 = self.encoder.estimate(te, &self.encoder.window(&u, &y, n));
        self.model
            .with_params(tb.to_vec(), ta.to_vec())?
            .simulate_signals(&x0, &u[n..])
    }

    /// Baseline alone, started from the baseline part of the initial encoder estimate.
    pub fn simulate_baseline(&self, seq: &DataSequence) -> Result<Vec<Vec<f64>>> {
        let (u, y) = self.transform.normalize_sequence(seq);
        self.simulate_baseline_normalized(&u, &y)
            .map(|rows| rows.iter().map(|v| self.transform.denormalize_y(v)).collect())
    }

    fn simulate_baseline_normalized(&self, u: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.lookback();
        if u.len() <= n {
            return Err(Error::InvalidArgument("sequence shorter than the encoder window".into()));
        }
        let (tb, _, te) = self.split(self.theta0());
        let nx = self.spec.n_x;
        let mut x = self.encoder.estimate(te, &self.encoder.window(u, y, n))[..nx].to_vec();
        let base = self.model.base();
        let mut out = Vec::with_capacity(u.len() - n);
        for (k, uk) in u[n..].iter().enumerate() {
            let mut z = x;
            z.extend_from_slice(uk);
            let w = base.eval(tb, &z);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    port: base.name().to_string(),
                    step: Some(n + k),
                });
            }
            out.push(w[nx..].to_vec());
            x = w[..nx].to_vec();
        }
        Ok(out)
    }

    pub fn baseline_rmse(&self, seq: &DataSequence) -> Result<f64> {
        let yhat = self.simulate_baseline(seq)?;
        Ok(rmse_rows(&yhat, &seq.y[self.lookback()..]))
    }

    /// Mean squared baseline simulation error in normalized output units.
    fn baseline_mse_normalized(&self, seq: &DataSequence) -> Result<f64> {
        let (u, y) = self.transform.normalize_sequence(seq);
        let yhat = self.simulate_baseline_normalized(&u, &y)?;
        let r = rmse_rows(&yhat, &y[self.lookback()..]);
        Ok(r * r)
    }
}

/// RMSE over all samples and channels.
pub fn rmse_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y) {
            s += (p - q) * (p - q);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        (s / count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lfr::LinearPort;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.8]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.3]);
        let d = DMatrix::from_row_slice(1, 1, &[0.1]);
        (a, b, c, d)
    }

    #[test]
    fn window_estimator_recovers_noise_free_state() {
        let (a, b, c, d) = system();
        for (n_a, n_b) in [(4, 4), (3, 5), (5, 3)] {
            let m = window_state_estimator(&a, &b, &c, &d, n_a, n_b);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut x = nalgebra::DVector::from_vec(vec![0.7, -0.4]);
            let (mut us, mut ys) = (Vec::new(), Vec::new());
            for k in 0..20 {
                // Inputs older than the window are zero so the estimate is exact.
                let u = if k + n_b >= 20 { rng.random_range(-1.0..1.0) } else { 0.0 };
                let uv = nalgebra::DVector::from_element(1, u);
                ys.push((&c * &x + &d * &uv)[0]);
                us.push(u);
                x = &a * &x + &b * &uv;
            }
            let mut w: Vec<f64> = ys[20 - n_a..].to_vec();
            w.extend_from_slice(&us[20 - n_b..]);
            let est = &m * nalgebra::DVector::from_vec(w);
            assert!((est - &x).norm() < 1e-9, "{n_a} {n_b}");
        }
    }

    #[test]
    fn linearization_is_exact_for_linear_ports() {
        let (a, b, c, d) = system();
        let mut m = DMatrix::zeros(3, 3);
        m.view_mut((0, 0), (2, 2)).copy_from(&a);
        m.view_mut((0, 2), (2, 1)).copy_from(&b);
        m.view_mut((2, 0), (1, 2)).copy_from(&c);
        m.view_mut((2, 2), (1, 1)).copy_from(&d);
        let port = LinearPort { inputs: 3, outputs: 3 };
        let (a2, b2, c2, d2) = linearize_port(&port, &LinearPort::params_from(&m), 2, 1);
        assert_eq!((a2, b2, c2, d2), (a, b, c, d));
    }

    #[test]
    fn rmse_rows_matches_flat_definition() {
        let a = vec![vec![3.0], vec![4.0]];
        let b = vec![vec![0.0], vec![0.0]];
        assert!((rmse_rows(&a, &b) - 12.5f64.sqrt()).abs() < 1e-15);
    }
}
