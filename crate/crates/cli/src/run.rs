use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lfr_augment::data::DataSequence;
use lfr_augment::lfr::PortFunction;
use lfr_augment::msd::{baseline_model, generate_datasets, SplitSeeds};
use lfr_augment::neural::ParamSlice;
use lfr_augment::structures::{state_decomposition, StructureSpec};
use lfr_augment::training::{train, HistoryRow, NormalizationTransform, TrainingProblem};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{BaselineInit, RunConfig};
use crate::CliError;

pub const SPLITS: [&str; 3] = ["estimation", "validation", "test"];
pub const CHECKPOINT: &str = "checkpoint.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

#[derive(Debug, Serialize, Deserialize)]
pub struct DataManifest {
    pub generator: String,
    pub master_seed: u64,
    pub benchmark: lfr_augment::msd::BenchmarkConfig,
    pub split_seeds: [SplitSeeds; 3],
    pub achieved_snr_db: [f64; 3],
    /// File name and SHA-256 digest per split.
    pub files: Vec<(String, String)>,
}

/// Trained parameters with everything needed to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub structure: StructureSpec,
    pub baseline: BaselineInit,
    pub theta_base_init: Vec<f64>,
    pub transform: NormalizationTransform,
    pub epoch: usize,
    pub val_rmse: f64,
    pub slices: Vec<ParamSlice>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRmse {
    pub model: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDrift {
    pub initial: Vec<f64>,
    #[serde(rename = "final")]
    pub last: Vec<f64>,
    pub relative: Vec<f64>,
    pub max_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub structure: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub aborted: Option<String>,
    pub validation: SplitRmse,
    pub test: SplitRmse,
    pub theta_base: ParameterDrift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config_hash: String,
    pub split: String,
    pub samples: usize,
    pub rmse: f64,
    pub baseline_rmse: f64,
}

fn runtime<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(runtime(path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime(path.display()))?;
    fs::write(path, text + "\n").map_err(runtime(path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(runtime(path.display()))?;
    serde_json::from_str(&text).map_err(runtime(path.display()))
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("output directory {} does not exist", dir.display())))
    }
}

pub fn split_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.csv"))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<DataManifest, CliError> {
    require_dir(out)?;
    let bench = cfg.benchmark();
    let bundle = generate_datasets(&bench, cfg.data.master_seed).map_err(runtime("data generation"))?;
    let mut files = Vec::new();
    for (name, seq) in SPLITS.iter().zip(bundle.splits()) {
        let path = split_path(out, name);
        seq.save(&path).map_err(runtime(path.display()))?;
        files.push((format!("{name}.csv"), sha256_file(&path)?));
    }
    let manifest = DataManifest {
        generator: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        master_seed: cfg.data.master_seed,
        benchmark: bench,
        split_seeds: bundle.seeds,
        achieved_snr_db: bundle.achieved_snr_db,
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<DataSequence, CliError> {
    let path = split_path(&cfg.data.dir, split);
    DataSequence::load(&path).map_err(runtime(path.display()))
}

fn baseline(init: BaselineInit) -> (Arc<dyn PortFunction>, Vec<f64>) {
    let (port, theta) = baseline_model(init == BaselineInit::Approx);
    (Arc::new(port), theta)
}

fn build_problem(cfg: &RunConfig, estimation: &DataSequence) -> Result<TrainingProblem, CliError> {
    let (port, theta) = baseline(cfg.model.baseline);
    let spec = cfg.structure_spec(port.input_width() - cfg.model.n_u);
    TrainingProblem::new(port, theta, spec, estimation, &cfg.training).map_err(runtime("model setup"))
}

fn drift(initial: &[f64], last: &[f64]) -> ParameterDrift {
    let relative: Vec<f64> = initial.iter().zip(last).map(|(a, b)| ((b - a) / a).abs()).collect();
    ParameterDrift {
        initial: initial.to_vec(),
        last: last.to_vec(),
        max_relative: relative.iter().cloned().fold(0.0, f64::max),
        relative,
    }
}

struct EventLog(File);

impl EventLog {
    fn line(&mut self, msg: impl AsRef<str>) -> Result<(), CliError> {
        writeln!(self.0, "{}", msg.as_ref()).map_err(runtime("events.log"))
    }
}

/// Trains the configured structure and writes the run directory.
pub fn cmd_train(cfg: &RunConfig, out: &Path, progress: bool) -> Result<RunSummary, CliError> {
    fs::create_dir_all(out).map_err(runtime(out.display()))?;
    let hash = cfg.hash();
    fs::write(out.join(CONFIG_SNAPSHOT), cfg.to_toml()).map_err(runtime(out.display()))?;
    let mut log = EventLog(File::create(out.join("events.log")).map_err(runtime(out.display()))?);
    log.line(format!("config {hash}"))?;

    let splits: Vec<DataSequence> = SPLITS.iter().map(|s| load_split(cfg, s)).collect::<Result<_, _>>()?;
    let mut manifest = serde_json::Map::new();
    manifest.insert("config_hash".into(), hash.clone().into());
    manifest.insert("seed".into(), cfg.training.seed.into());
    manifest.insert(
        "generator".into(),
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")).into(),
    );
    for s in SPLITS {
        manifest.insert(format!("{s}_sha256"), sha256_file(&split_path(&cfg.data.dir, s))?.into());
    }
    let data_manifest = cfg.data.dir.join("manifest.json");
    if data_manifest.is_file() {
        let m: serde_json::Value = read_json(&data_manifest)?;
        manifest.insert("data".into(), m);
    }
    write_json(&out.join("manifest.json"), &manifest)?;

    let problem = build_problem(cfg, &splits[0])?;
    log.line(format!(
        "structure {} with {} parameters",
        cfg.model.structure.name(),
        problem.param_len()
    ))?;
    let mut history = String::from("epoch,v_trunc,v_reg,val_rmse\n");
    let outcome = train(&problem, &splits[1], &cfg.training, |r: &HistoryRow| {
        let _ = writeln!(history, "{},{},{},{}", r.epoch, r.v_trunc, r.v_reg, r.val_rmse);
        if progress && (r.epoch % 50 == 0 || r.epoch == cfg.training.epochs) {
            eprintln!("epoch {:>5}  loss {:.4e}  reg {:.3e}  val rmse {:.5}", r.epoch, r.v_trunc, r.v_reg, r.val_rmse);
        }
    })
    .map_err(runtime("training"))?;
    fs::write(out.join("history.csv"), history).map_err(runtime(out.display()))?;
    for row in outcome.history.iter().filter(|r| r.epoch % 100 == 0) {
        log.line(format!("epoch {} val_rmse {}", row.epoch, row.val_rmse))?;
    }

    let checkpoint = Checkpoint {
        config_hash: hash.clone(),
        structure: problem.spec,
        baseline: cfg.model.baseline,
        theta_base_init: problem.regularizer.theta_star.clone(),
        transform: problem.transform.clone(),
        epoch: outcome.best_epoch,
        val_rmse: outcome.best_val_rmse,
        slices: problem.layout.slices().to_vec(),
        values: outcome.best_theta.clone(),
    };
    let checkpoint_path = out.join(CHECKPOINT);
    write_json(&checkpoint_path, &checkpoint)?;
    log.line(format!("best epoch {} val_rmse {}", outcome.best_epoch, outcome.best_val_rmse))?;

    let rmse = |seq: &DataSequence| -> Result<SplitRmse, CliError> {
        Ok(SplitRmse {
            model: problem.rmse(&outcome.best_theta, seq).map_err(runtime("evaluation"))?,
            baseline: problem.baseline_rmse(seq).map_err(runtime("evaluation"))?,
        })
    };
    let summary = RunSummary {
        config_hash: hash,
        structure: cfg.model.structure.name().to_string(),
        seed: cfg.training.seed,
        epochs_run: outcome.history.len() - 1,
        best_epoch: outcome.best_epoch,
        aborted: outcome.aborted.clone(),
        validation: rmse(&splits[1])?,
        test: rmse(&splits[2])?,
        theta_base: drift(
            &problem.regularizer.theta_star,
            &outcome.best_theta[problem.base_range()],
        ),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if let Some(reason) = outcome.aborted {
        log.line(format!("aborted: {reason}"))?;
        return Err(CliError::Runtime(format!(
            "training aborted ({reason}); last good checkpoint at {}",
            checkpoint_path.display()
        )));
    }
    log.line("done")?;
    Ok(summary)
}

/// Evaluates a checkpoint on one split and writes metrics and traces to `out`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint_path: &Path, split: &str, out: &Path) -> Result<Metrics, CliError> {
    if !SPLITS.contains(&split) {
        return Err(CliError::Usage(format!("unknown split `{split}`; expected one of {SPLITS:?}")));
    }
    require_dir(out)?;
    let ckpt: Checkpoint = read_json(checkpoint_path)?;
    let hash = cfg.hash();
    if ckpt.config_hash != hash {
        return Err(CliError::Runtime(format!(
            "checkpoint {} was trained with config {} but the given config hashes to {hash}",
            checkpoint_path.display(),
            ckpt.config_hash
        )));
    }
    let estimation = load_split(cfg, "estimation")?;
    let problem = build_problem(cfg, &estimation)?;
    if problem.layout.slices() != ckpt.slices.as_slice() || problem.transform != ckpt.transform {
        return Err(CliError::Runtime(format!(
            "checkpoint {} does not match the model rebuilt from the config and data",
            checkpoint_path.display()
        )));
    }
    let seq = if split == "estimation" { estimation } else { load_split(cfg, split)? };
    let theta = &ckpt.values;
    let yhat = problem.simulate(theta, &seq).map_err(runtime("simulation"))?;
    let ybase = problem.simulate_baseline(&seq).map_err(runtime("simulation"))?;
    let n = problem.lookback();
    let metrics = Metrics {
        config_hash: hash,
        split: split.to_string(),
        samples: yhat.len(),
        rmse: problem.rmse(theta, &seq).map_err(runtime("evaluation"))?,
        baseline_rmse: problem.baseline_rmse(&seq).map_err(runtime("evaluation"))?,
    };

    let ny = seq.n_y();
    let mut errors = String::from("k");
    for j in 0..ny {
        write!(errors, ",y{j},y{j}_model,y{j}_baseline,e{j}_model,e{j}_baseline").unwrap();
    }
    errors.push('\n');
    for (i, (m, b)) in yhat.iter().zip(&ybase).enumerate() {
        let k = n + i;
        write!(errors, "{k}").unwrap();
        for j in 0..ny {
            let y = seq.y[k][j];
            write!(errors, ",{y},{},{},{},{}", m[j], b[j], m[j] - y, b[j] - y).unwrap();
        }
        errors.push('\n');
    }
    fs::write(out.join(format!("error_trace_{split}.csv")), errors).map_err(runtime(out.display()))?;

    // Next state split into the baseline and augmentation contributions, in
    // normalized model coordinates.
    let signals = problem.step_signals(theta, &seq).map_err(runtime("simulation"))?;
    let nx = problem.model.dims().n_x;
    let mut states = String::from("k");
    for i in 0..nx {
        write!(states, ",x{i}_total,x{i}_base,x{i}_aug").unwrap();
    }
    states.push('\n');
    for (i, s) in signals.iter().enumerate() {
        let (base, aug) = state_decomposition(&problem.model, &s.x, &s.u, &s.w1, &s.w2);
        write!(states, "{}", n + i).unwrap();
        for r in 0..nx {
            write!(states, ",{},{},{}", s.x_next[r], base[r], aug[r]).unwrap();
        }
        states.push('\n');
    }
    fs::write(out.join(format!("state_trace_{split}.csv")), states).map_err(runtime(out.display()))?;
    write_json(&out.join(format!("metrics_{split}.json")), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub val_rmse: f64,
    pub max_drift: f64,
}

/// One training run per regularization weight, each in its own subdirectory.
pub fn cmd_sweep_eps(cfg: &RunConfig, eps: &[f64], out: &Path, progress: bool) -> Result<Vec<SweepRow>, CliError> {
    if eps.is_empty() {
        return Err(CliError::Usage("sweep-eps needs at least one value in --eps".into()));
    }
    if let Some(bad) = eps.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(CliError::Usage(format!("epsilon values must be positive and finite, got {bad}")));
    }
    fs::create_dir_all(out).map_err(runtime(out.display()))?;
    let mut rows = Vec::new();
    for &e in eps {
        let mut c = cfg.clone();
        c.training.epsilon_reg = e;
        let dir = out.join(format!("eps_{e:e}"));
        let summary = cmd_train(&c, &dir, progress)?;
        rows.push(SweepRow {
            epsilon: e,
            val_rmse: summary.validation.model,
            max_drift: summary.theta_base.max_relative,
        });
    }
    let mut table = String::from("epsilon,val_rmse,max_drift\n");
    for r in &rows {
        writeln!(table, "{},{},{}", r.epsilon, r.val_rmse, r.max_drift).unwrap();
    }
    fs::write(out.join("sweep.csv"), table).map_err(runtime(out.display()))?;
    Ok(rows)
}
