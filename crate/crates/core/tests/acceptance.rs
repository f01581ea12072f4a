//! Acceptance suite. Prints one PASS/FAIL line per criterion. The exit status
//! reflects the criteria only when `ACCEPTANCE_STRICT=1` is set; otherwise the
//! report is the result and the target succeeds once every criterion has run.
//!
//! The training criteria run the desk schedule (T = 50, 500 epochs, batch 256)
//! and take roughly twenty minutes on one core.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use lfr_augment::data::DataSequence;
use lfr_augment::lfr::{ColBlock, PortFunction, RowBlock};
use lfr_augment::msd::{
    baseline_model, generate_datasets, msd_step, BenchmarkConfig, DatasetBundle, MsdBaseline, MsdParams,
};
use lfr_augment::neural::{grad_check, GradCheck, MAX_CHECKED};
use lfr_augment::structures::{build_structure, verify_structure, StructureKind, StructureSpec, Verification};
use lfr_augment::training::{epoch_rng, sample_batch, train, TrainingConfig, TrainingProblem};
use lfr_augment::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DATA_SEED: u64 = 1;
const TRAIN_SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: u32, title: &'static str, pass: bool, detail: String) {
    println!("[{}] {id:>2} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, title, pass, detail });
}

fn benchmark_spec(kind: StructureKind) -> StructureSpec {
    StructureSpec {
        kind,
        n_x: 4,
        n_u: 1,
        n_y: 1,
        n_xbar: if kind.is_dynamic() { 2 } else { 0 },
        hidden_layers: 2,
        nodes: 64,
    }
}

fn base_port(approx: bool) -> (Arc<dyn PortFunction>, Vec<f64>) {
    let (port, theta) = baseline_model(approx);
    (Arc::new(port), theta)
}

fn max_rel_drift(theta: &[f64], reference: &[f64]) -> f64 {
    theta
        .iter()
        .zip(reference)
        .map(|(t, r)| ((t - r) / r).abs())
        .fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

// Gradient of the joint cost against central differences on a one-body baseline.
fn criterion_gradients() -> (bool, String) {
    let truth = MsdParams {
        masses: vec![0.5],
        springs: vec![100.0],
        dampers: vec![0.5],
        hardening: 100.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u: Vec<f64> = (0..300).map(|_| rng.random_range(-8.0..8.0)).collect();
    let mut x = vec![0.0, 0.0];
    let mut y = Vec::new();
    for uk in &u {
        y.push(x[0] + 0.002 * rng.random_range(-1.0..1.0));
        x = msd_step(&truth, &x, *uk, 0.02);
    }
    let data = DataSequence::new(u.iter().map(|v| vec![*v]).collect(), y.iter().map(|v| vec![*v]).collect(), 0.02)
        .expect("data");
    let port: Arc<dyn PortFunction> = Arc::new(MsdBaseline {
        bodies: 1,
        ts: 0.02,
        output_body: 0,
    });
    let theta_base = vec![0.45, 90.0, 0.4];
    let cfg = TrainingConfig {
        n_a: 3,
        n_b: 3,
        horizon: 5,
        batch_size: 3,
        encoder_hidden_layers: 2,
        encoder_nodes: 8,
        normalization_transient: 50,
        seed: 3,
        ..TrainingConfig::default()
    };
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for kind in StructureKind::ALL {
        let spec = StructureSpec {
            kind,
            n_x: 2,
            n_u: 1,
            n_y: 1,
            n_xbar: if kind.is_dynamic() { 2 } else { 0 },
            hidden_layers: 2,
            nodes: 8,
        };
        let problem = match TrainingProblem::new(port.clone(), theta_base.clone(), spec, &data, &cfg) {
            Ok(p) => p,
            Err(e) => return (false, format!("{}: {e}", kind.name())),
        };
        // Move away from the neutral point so every coordinate carries gradient.
        let mut theta = problem.theta0().to_vec();
        let base = problem.base_range();
        for (i, t) in theta.iter_mut().enumerate() {
            if !base.contains(&i) {
                *t += noise.sample(&mut rng);
            }
        }
        let batch = sample_batch(&mut epoch_rng(11, 0, 0), data.len(), problem.lookback(), 5, 3).unwrap();
        let grad = problem.loss_and_grad(&theta, &batch).unwrap().grad;
        let indices: Vec<usize> = (0..theta.len()).collect();
        for chunk in indices.chunks(MAX_CHECKED) {
            let sub: Vec<f64> = chunk.iter().map(|&i| theta[i]).collect();
            let sub_grad: Vec<f64> = chunk.iter().map(|&i| grad[i]).collect();
            let loss = |s: &[f64]| {
                let mut full = theta.clone();
                for (&i, v) in chunk.iter().zip(s) {
                    full[i] = *v;
                }
                problem.total_loss(&full, &batch).unwrap()
            };
            match grad_check(loss, &sub, &sub_grad, 1e-6, 1e-5, 0) {
                GradCheck::Pass {
                    checked: n,
                    worst_rel_error,
                } => {
                    checked += n;
                    worst = worst.max(worst_rel_error);
                }
                GradCheck::Fail {
                    coordinate,
                    analytic,
                    numeric,
                    rel_error,
                } => {
                    return (
                        false,
                        format!(
                            "{}: coordinate {} analytic {analytic:.6e} numeric {numeric:.6e} rel {rel_error:.2e}",
                            kind.name(),
                            chunk[coordinate]
                        ),
                    )
                }
            }
        }
    }
    (true, format!("{checked} coordinates over 5 kinds, worst rel error {worst:.2e} <= 1e-5"))
}

fn random_aug(spec: &StructureSpec, seed: u64) -> Vec<f64> {
    let skeleton = build_structure(spec).unwrap();
    let n = skeleton.neutral_aug(0).params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

fn criterion_equivalence() -> (bool, String) {
    let (base, theta) = base_port(false);
    let mut worst = 0.0f64;
    for (i, kind) in StructureKind::ALL.into_iter().enumerate() {
        let spec = benchmark_spec(kind);
        let skeleton = build_structure(&spec).unwrap();
        let model = skeleton
            .into_model(base.clone(), theta.clone(), random_aug(&spec, 100 + i as u64))
            .unwrap();
        match verify_structure(&spec, &model, 100, 5 + i as u64) {
            Verification::Pass { max_deviation } if max_deviation <= 1e-12 => worst = worst.max(max_deviation),
            other => return (false, format!("{}: {other:?}", kind.name())),
        }
    }
    (true, format!("5 kinds x 100 evaluations, max deviation {worst:.1e} <= 1e-12"))
}

fn criterion_well_posedness() -> (bool, String) {
    let (base, theta) = base_port(false);
    let mut witnesses = Vec::new();
    for kind in StructureKind::ALL {
        let spec = benchmark_spec(kind);
        let model = build_structure(&spec)
            .unwrap()
            .into_model(base.clone(), theta.clone(), random_aug(&spec, 1))
            .unwrap();
        let mut order = model.evaluation_order().to_vec();
        order.sort_unstable();
        if order != [0, 1] {
            return (false, format!("{}: evaluation order {:?}", kind.name(), model.evaluation_order()));
        }
        // Feed each port's output instantaneously into the other.
        let mut s = model.interconnection().clone();
        let dims = *s.dims();
        let (z1, w2) = (dims.row_offset(RowBlock::Z1), dims.col_offset(ColBlock::W2));
        let (z2, w1) = (dims.row_offset(RowBlock::Z2), dims.col_offset(ColBlock::W1));
        s.entries_mut()[(z1, w2)] = 1.0;
        s.entries_mut()[(z2, w1)] = 1.0;
        match model.with_interconnection(s) {
            Err(Error::CyclicInterconnection { cycle }) => {
                let closed = cycle.len() >= 2 && cycle.first() == cycle.last();
                if !closed {
                    return (false, format!("{}: witness {cycle:?} is not a cycle", kind.name()));
                }
                witnesses.push(cycle);
            }
            Err(e) => return (false, format!("{}: unexpected error {e}", kind.name())),
            Ok(_) => return (false, format!("{}: injected cycle accepted", kind.name())),
        }
    }
    (true, format!("5 structures ordered, injected cycles rejected with witnesses {witnesses:?}"))
}

fn criterion_neutral_init(data: &DatasetBundle) -> (bool, String) {
    let cfg = TrainingConfig::desk();
    let mut worst = 0.0f64;
    for kind in StructureKind::ALL.into_iter().filter(|k| k.is_parallel()) {
        for approx in [false, true] {
            let (base, theta) = base_port(approx);
            let p = TrainingProblem::new(base, theta, benchmark_spec(kind), &data.estimation, &cfg).unwrap();
            let model = p.rmse(p.theta0(), &data.validation).unwrap();
            let baseline = p.baseline_rmse(&data.validation).unwrap();
            let rel = (model - baseline).abs() / baseline;
            if !(rel <= 1e-10) {
                return (
                    false,
                    format!("{} approx={approx}: model {model:.12e} baseline {baseline:.12e}", kind.name()),
                );
            }
            worst = worst.max(rel);
        }
    }
    (true, format!("3 parallel kinds x 2 inits, max relative gap {worst:.1e} <= 1e-10"))
}

/// Plain O(n^2) DFT magnitudes for bins `0..=n/2`.
fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in x.iter().enumerate() {
                // Reduce the phase index first to keep the argument small.
                let a = step * ((k * j) % n) as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

fn criterion_data(cfg: &BenchmarkConfig, data: &DatasetBundle) -> (bool, String) {
    let period = cfg.multisine.period;
    let resolution = 1.0 / (period as f64 * cfg.multisine.ts);
    let mut details = Vec::new();
    let mut pass = true;
    for (i, seq) in data.splits().into_iter().enumerate() {
        let u: Vec<f64> = seq.u[..period].iter().map(|r| r[0]).collect();
        let mag = dft_magnitudes(&u);
        let peak = mag.iter().cloned().fold(0.0, f64::max);
        let support: Vec<usize> = (0..mag.len()).filter(|&k| mag[k] > 1e-8 * peak).collect();
        let highest = support.last().map_or(0.0, |&k| k as f64 * resolution);
        let ok = support.len() == 1666 && support[0] >= 1 && highest <= 25.0;
        let y: Vec<f64> = seq.y.iter().map(|r| r[0]).collect();
        let clean = &data.clean_outputs[i];
        let ps: f64 = clean.iter().map(|v| v * v).sum();
        let pn: f64 = y.iter().zip(clean).map(|(a, b)| (a - b) * (a - b)).sum();
        let snr = 10.0 * (ps / pn).log10();
        let snr_ok = (snr - 30.0).abs() <= 0.5;
        pass &= ok && snr_ok;
        details.push(format!("{} bins up to {highest:.2} Hz, SNR {snr:.2} dB", support.len()));
    }
    let sizes = [data.estimation.len(), data.validation.len(), data.test.len()];
    pass &= sizes == [20_000, 10_000, 10_000];
    (pass, format!("{} | sizes {sizes:?}", details.join("; ")))
}

/// `exp(m)` by scaling and squaring of a truncated Taylor series.
fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let a = m / 2f64.powi(squarings as i32);
    let n = m.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &a / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Continuous-time system matrix of the linear chain, state `(p, v)`.
fn chain_system(p: &MsdParams) -> DMatrix<f64> {
    let n = p.bodies();
    let tri = |c: &[f64]| {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] += c[i];
            if i + 1 < n {
                m[(i, i)] += c[i + 1];
                m[(i, i + 1)] -= c[i + 1];
                m[(i + 1, i)] -= c[i + 1];
            }
        }
        m
    };
    let minv = DMatrix::from_diagonal(&DVector::from_iterator(n, p.masses.iter().map(|m| 1.0 / m)));
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&DMatrix::identity(n, n));
    a.view_mut((n, 0), (n, n)).copy_from(&(-&minv * tri(&p.springs)));
    a.view_mut((n, n), (n, n)).copy_from(&(-&minv * tri(&p.dampers)));
    a
}

fn criterion_numerics() -> (bool, String) {
    let mut linear = MsdParams::truth();
    linear.hardening = 0.0;
    let a = chain_system(&linear);
    let x0 = DVector::from_vec(vec![0.01, -0.02, 0.03, 0.1, 0.0, -0.1]);

    // Trajectory error over one second against the exact solution.
    let horizon = 1.0;
    let traj_err = |h: f64| {
        let steps = (horizon / h).round() as usize;
        let phi = expm(&(&a * h));
        let mut exact = x0.clone();
        let mut x = x0.as_slice().to_vec();
        let mut worst = 0.0f64;
        for _ in 0..steps {
            x = msd_step(&linear, &x, 0.0, h);
            exact = &phi * exact;
            worst = worst.max((DVector::from_vec(x.clone()) - &exact).norm());
        }
        worst
    };
    let (e1, e2) = (traj_err(0.02), traj_err(0.01));
    let order = (e1 / e2).log2();
    let order_ok = (3.5..=4.5).contains(&order);

    let h = 1e-3;
    let one = DVector::from_vec(msd_step(&linear, x0.as_slice(), 0.0, h));
    let oracle = expm(&(&a * h)) * &x0;
    let step_rel = (one - &oracle).norm() / oracle.norm();
    let step_ok = step_rel < 1e-8;

    let truth = MsdParams::truth();
    let mut x = vec![0.3, 0.1, -0.2, 0.0, 1.0, 0.5];
    let mut e = truth.energy(&x);
    let mut monotone = true;
    for _ in 0..5000 {
        x = msd_step(&truth, &x, 0.0, 0.02);
        let next = truth.energy(&x);
        if next > e * (1.0 + 1e-9) {
            monotone = false;
        }
        e = next;
    }
    (
        order_ok && step_ok && monotone,
        format!(
            "order exponent {order:.3} in [3.5, 4.5]; one-step error at h = {h} is {step_rel:.1e} < 1e-8; energy non-increasing over 5000 steps: {monotone}"
        ),
    )
}

struct TrainedRun {
    kind: StructureKind,
    seed: u64,
    test_rmse: f64,
    baseline_rmse: f64,
    best_drift: f64,
    final_drift: f64,
}

fn run_training(
    data: &DatasetBundle,
    kind: StructureKind,
    approx: bool,
    epsilon: f64,
    seed: u64,
) -> Result<TrainedRun, String> {
    let (base, theta) = base_port(approx);
    let cfg = TrainingConfig {
        epsilon_reg: epsilon,
        seed,
        ..TrainingConfig::desk()
    };
    let start = Instant::now();
    let p = TrainingProblem::new(base, theta.clone(), benchmark_spec(kind), &data.estimation, &cfg)
        .map_err(|e| e.to_string())?;
    let out = train(&p, &data.validation, &cfg, |_| {}).map_err(|e| e.to_string())?;
    if let Some(reason) = &out.aborted {
        return Err(format!("training aborted: {reason}"));
    }
    let run = TrainedRun {
        kind,
        seed,
        test_rmse: p.rmse(&out.best_theta, &data.test).map_err(|e| e.to_string())?,
        baseline_rmse: p.baseline_rmse(&data.test).map_err(|e| e.to_string())?,
        best_drift: max_rel_drift(&out.best_theta[p.base_range()], &theta),
        final_drift: max_rel_drift(&out.final_theta[p.base_range()], &theta),
    };
    println!(
        "       trained {} (approx={approx}, eps={epsilon:e}, seed {seed}) in {:.0?}: test RMSE {:.5}, best epoch {}, max base drift {:.2e}",
        kind.name(),
        start.elapsed(),
        run.test_rmse,
        out.best_epoch,
        run.best_drift.max(run.final_drift)
    );
    Ok(run)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results = Vec::new();

    let (pass, detail) = criterion_gradients();
    report(&mut results, 1, "gradient correctness", pass, detail);
    let (pass, detail) = criterion_equivalence();
    report(&mut results, 2, "interconnection equivalence", pass, detail);
    let (pass, detail) = criterion_well_posedness();
    report(&mut results, 3, "well-posedness", pass, detail);

    let bench = BenchmarkConfig::default();
    let data = generate_datasets(&bench, DATA_SEED).expect("benchmark data");
    let (pass, detail) = criterion_neutral_init(&data);
    report(&mut results, 4, "neutral initialization", pass, detail);
    let (pass, detail) = criterion_data(&bench, &data);
    report(&mut results, 5, "benchmark data fidelity", pass, detail);
    let (pass, detail) = criterion_numerics();
    report(&mut results, 10, "numerical infrastructure", pass, detail);

    let cfg = TrainingConfig::desk();
    let baselines: Vec<f64> = [false, true]
        .into_iter()
        .map(|approx| {
            let (base, theta) = base_port(approx);
            let p = TrainingProblem::new(base, theta, benchmark_spec(StructureKind::DynamicParallel), &data.estimation, &cfg)
                .expect("problem");
            p.baseline_rmse(&data.test).expect("baseline")
        })
        .collect();
    let (ideal, approx) = (baselines[0], baselines[1]);

    let kinds = [
        StructureKind::DynamicParallel,
        StructureKind::StaticParallel,
        StructureKind::LinearDynamicParallel,
    ];
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for kind in kinds {
        for seed in TRAIN_SEEDS {
            match run_training(&data, kind, false, 1.0, seed) {
                Ok(r) => runs.push(r),
                Err(e) => failures.push(format!("{} seed {seed}: {e}", kind.name())),
            }
        }
    }

    let first_dynamic = runs
        .iter()
        .find(|r| r.kind == StructureKind::DynamicParallel && r.seed == TRAIN_SEEDS[0]);
    match first_dynamic {
        Some(r) => report(
            &mut results,
            7,
            "desk-scale training",
            r.test_rmse <= r.baseline_rmse / 3.0,
            format!(
                "dynamic parallel test RMSE {:.5} vs baseline {:.5} (ratio {:.1}, required >= 3)",
                r.test_rmse,
                r.baseline_rmse,
                r.baseline_rmse / r.test_rmse
            ),
        ),
        None => report(&mut results, 7, "desk-scale training", false, failures.join("; ")),
    }

    let medians: Vec<Option<f64>> = kinds
        .iter()
        .map(|k| {
            let v: Vec<f64> = runs.iter().filter(|r| r.kind == *k).map(|r| r.test_rmse).collect();
            (v.len() == TRAIN_SEEDS.len()).then(|| median(v))
        })
        .collect();
    match (medians[0], medians[1], medians[2]) {
        (Some(d), Some(s), Some(l)) => report(
            &mut results,
            8,
            "structure ranking",
            d <= s && d <= l,
            format!("median test RMSE over seeds {TRAIN_SEEDS:?}: dynamic {d:.5}, static {s:.5}, linear dynamic {l:.5}"),
        ),
        _ => report(&mut results, 8, "structure ranking", false, failures.join("; ")),
    }

    let tight = run_training(&data, StructureKind::DynamicParallel, true, 1e-6, TRAIN_SEEDS[0]);
    let loose = run_training(&data, StructureKind::DynamicParallel, true, 1.0, TRAIN_SEEDS[0]);
    match (&tight, &loose) {
        (Ok(t), Ok(l)) => {
            let td = t.best_drift.max(t.final_drift);
            let ld = l.best_drift.max(l.final_drift);
            report(
                &mut results,
                9,
                "anchoring",
                td <= 0.01 && ld <= 0.25,
                format!("max relative drift {td:.2e} at eps = 1e-6 (<= 1e-2), {ld:.2e} at eps = 1 from approximate init (<= 0.25)"),
            )
        }
        (t, l) => report(
            &mut results,
            9,
            "anchoring",
            false,
            format!("{:?} / {:?}", t.as_ref().err(), l.as_ref().err()),
        ),
    }

    let trained: Vec<f64> = runs
        .iter()
        .chain(tight.iter())
        .chain(loose.iter())
        .map(|r| r.test_rmse)
        .collect();
    let worst_trained = trained.iter().cloned().fold(0.0, f64::max);
    report(
        &mut results,
        6,
        "baseline ordering",
        approx > ideal && ideal > 0.0 && failures.is_empty() && ideal >= 5.0 * worst_trained && approx >= 5.0 * worst_trained,
        format!(
            "baseline test RMSE approximate {approx:.5} vs ideal {ideal:.5} (required approximate > ideal); worst of {} trained models {worst_trained:.5}, separation {:.1}x (required >= 5)",
            trained.len(),
            ideal.min(approx) / worst_trained
        ),
    );

    results.sort_by_key(|r| r.id);
    let failed: Vec<&Outcome> = results.iter().filter(|r| !r.pass).collect();
    println!();
    println!(
        "acceptance: {} of {} criteria passed in {:.0?}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed()
    );
    for r in &failed {
        println!("  failed {:>2} {}: {}", r.id, r.title, r.detail);
    }
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed.is_empty() || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
