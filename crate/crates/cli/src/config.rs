use std::path::{Path, PathBuf};

use lfr_augment::msd::{BenchmarkConfig, BENCHMARK_INPUT_RMS};
use lfr_augment::structures::{StructureKind, StructureSpec};
use lfr_augment::training::TrainingConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineInit {
    Ideal,
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub structure: StructureKind,
    pub baseline: BaselineInit,
    pub n_u: usize,
    pub n_y: usize,
    /// Augmentation states; ignored by the static structures.
    pub n_xbar: usize,
    pub hidden_layers: usize,
    pub nodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            structure: StructureKind::DynamicParallel,
            baseline: BaselineInit::Ideal,
            n_u: 1,
            n_y: 1,
            n_xbar: 2,
            hidden_layers: 2,
            nodes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    /// Directory holding the split files and their manifest.
    pub dir: PathBuf,
    pub master_seed: u64,
    pub input_rms: f64,
    pub snr_db: f64,
    pub sizes: [usize; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            master_seed: 1,
            input_rms: BENCHMARK_INPUT_RMS,
            snr_db: 30.0,
            sizes: [20_000, 10_000, 10_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            training: TrainingConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
    }

    /// Parses a TOML document. Missing keys take their defaults and unknown
    /// keys are rejected with their line number.
    pub fn parse(text: &str) -> Result<Self, String> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let reference = toml::Table::try_from(RunConfig::default()).map_err(|e| e.to_string())?;
        check_keys(&doc, &reference, "", text)?;
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    fn validate(&self) -> Result<(), String> {
        self.structure_spec(4).validate().map_err(|e| e.to_string())?;
        let t = &self.training;
        if t.horizon == 0 || t.batch_size == 0 || t.batches_per_epoch == 0 {
            return Err("training.horizon, training.batch_size and training.batches_per_epoch must be positive".into());
        }
        if !(t.epsilon_reg > 0.0) {
            return Err(format!("training.epsilon_reg must be positive, got {}", t.epsilon_reg));
        }
        if !(t.adam.lr > 0.0) {
            return Err(format!("training.lr must be positive, got {}", t.adam.lr));
        }
        if !(self.data.input_rms >= 0.0) {
            return Err(format!("data.input_rms must be nonnegative, got {}", self.data.input_rms));
        }
        Ok(())
    }

    pub fn structure_spec(&self, n_x: usize) -> StructureSpec {
        let m = &self.model;
        StructureSpec {
            kind: m.structure,
            n_x,
            n_u: m.n_u,
            n_y: m.n_y,
            n_xbar: if m.structure.is_dynamic() { m.n_xbar } else { 0 },
            hidden_layers: m.hidden_layers,
            nodes: m.nodes,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        let mut b = BenchmarkConfig {
            sizes: self.data.sizes,
            snr_db: self.data.snr_db,
            ..BenchmarkConfig::default()
        };
        b.multisine.rms = self.data.input_rms;
        b
    }

    /// Digest of everything that determines the trained model. Paths are
    /// excluded so a run can be evaluated from another location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data.dir = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

fn check_keys(doc: &toml::Table, reference: &toml::Table, prefix: &str, text: &str) -> Result<(), String> {
    for (key, value) in doc {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match reference.get(key) {
            None => {
                return Err(match line_of(text, key) {
                    Some(line) => format!("unknown key `{path}` at line {line}"),
                    None => format!("unknown key `{path}`"),
                })
            }
            Some(toml::Value::Table(r)) => {
                if let toml::Value::Table(d) = value {
                    check_keys(d, r, &path, text)?;
                }
            }
            Some(_) => {}
        }
    }
    Ok(())
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with(']'))
            || l.strip_prefix('[').is_some_and(|r| r.trim_start().starts_with(key))
    })
    .map(|i| i + 1)
}
