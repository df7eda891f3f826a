//! Flat `key = value` run configuration, data sources and presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gmfn::imaging::{AugmentToggles, Dataset};
use gmfn::model::{FeedbackMode, FeedbackTopology, ModelConfig};
use gmfn::train::{AdamHyper, TrainConfig};

use crate::error::{CliError, Result};

/// Where images come from: a directory of HR PNGs, or procedurally
/// generated scenes written `synthetic:<count>:<size>:<seed>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataSource {
    Dir(PathBuf),
    Synthetic { count: usize, size: usize, seed: u64 },
}

impl DataSource {
    /// Loads the source at `scale`. LR images of directory sources are
    /// cached next to the HR files when `write_cache` is set.
    pub fn load(&self, scale: usize, write_cache: bool) -> Result<Dataset> {
        match self {
            DataSource::Dir(dir) => Ok(Dataset::load(dir, scale, write_cache)?),
            DataSource::Synthetic { count, size, seed } => {
                Ok(Dataset::synthetic("synthetic", *count, *size, scale, *seed)?)
            }
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Dir(p) => write!(f, "{}", p.display()),
            DataSource::Synthetic { count, size, seed } => write!(f, "synthetic:{count}:{size}:{seed}"),
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let Some(rest) = s.strip_prefix("synthetic:") else {
            if s.is_empty() {
                return Err("empty path".into());
            }
            return Ok(DataSource::Dir(PathBuf::from(s)));
        };
        let parts: Vec<&str> = rest.split(':').collect();
        let [count, size, seed] = parts[..] else {
            return Err(format!("expected synthetic:<count>:<size>:<seed>, got `{s}`"));
        };
        let num = |v: &str| v.parse::<u64>().map_err(|e| format!("`{v}`: {e}"));
        let (count, size, seed) = (num(count)? as usize, num(size)? as usize, num(seed)?);
        if count == 0 || size == 0 {
            return Err("synthetic count and size must be positive".into());
        }
        Ok(DataSource::Synthetic { count, size, seed })
    }
}

/// Everything one command needs, addressable through flat keys.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub feedback: FeedbackMode,
    /// M (or M̄ in anti-feedback mode).
    pub m: usize,
    /// N (or N̄ in anti-feedback mode).
    pub n: usize,
    pub train: TrainConfig,
    pub train_dataset: DataSource,
    pub val_dataset: DataSource,
    pub output_dir: PathBuf,
    pub sweep_axis: String,
    pub sweep_values: Vec<String>,
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "blocks",
    "steps",
    "first_channels",
    "channels",
    "scale",
    "rdb_layers",
    "growth",
    "residual_scale",
    "gate_unit",
    "detach_feedback",
    "feedback",
    "m",
    "n",
    "batch",
    "patch",
    "iterations",
    "seed",
    "loss_mode",
    "augment_flip",
    "augment_rotate",
    "augment_scale",
    "checkpoint_every",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "lr_halve_every",
    "train_dataset",
    "val_dataset",
    "output_dir",
    "sweep_axis",
    "sweep_values",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| CliError::invalid(key, format!("`{v}`: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::invalid(key, format!("`{v}` is not a boolean"))),
    }
}

impl Default for RunConfig {
    /// The final configuration at ×4.
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::new(7, 2, 256, 64, 4),
            feedback: FeedbackMode::Feedback,
            m: 1,
            n: 4,
            train: TrainConfig { iterations: 1_000_000, checkpoint_every: 10_000, ..TrainConfig::default() },
            train_dataset: DataSource::Dir(PathBuf::from("data/DIV2K_train_HR")),
            val_dataset: DataSource::Dir(PathBuf::from("data/Set5")),
            output_dir: PathBuf::from("runs/gmfn"),
            sweep_axis: "n".into(),
            sweep_values: (1..=7).map(|v| v.to_string()).collect(),
        }
    }
}

impl RunConfig {
    /// Assigns one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        match key {
            "blocks" => m.blocks = parse_num(key, v)?,
            "steps" => m.steps = parse_num(key, v)?,
            "first_channels" => m.first_channels = parse_num(key, v)?,
            "channels" => m.channels = parse_num(key, v)?,
            "scale" => m.scale = parse_num(key, v)?,
            "rdb_layers" => m.rdb_layers = parse_num(key, v)?,
            "growth" => m.growth = parse_num(key, v)?,
            "residual_scale" => m.residual_scale = parse_num(key, v)?,
            "gate_unit" => m.gate_unit = parse_bool(key, v)?,
            "detach_feedback" => m.detach_feedback = parse_bool(key, v)?,
            "feedback" => self.feedback = v.parse().map_err(|e: gmfn::Error| CliError::invalid(key, e.to_string()))?,
            "m" => self.m = parse_num(key, v)?,
            "n" => self.n = parse_num(key, v)?,
            "batch" => t.batch = parse_num(key, v)?,
            "patch" => t.patch = parse_num(key, v)?,
            "iterations" => t.iterations = parse_num(key, v)?,
            "seed" => t.seed = parse_num(key, v)?,
            "loss_mode" => t.loss_mode = v.parse().map_err(|e: gmfn::Error| CliError::invalid(key, e.to_string()))?,
            "augment_flip" => t.augment.hflip = parse_bool(key, v)?,
            "augment_rotate" => t.augment.rotate = parse_bool(key, v)?,
            "augment_scale" => t.augment.scale = parse_bool(key, v)?,
            "checkpoint_every" => t.checkpoint_every = parse_num(key, v)?,
            "lr" => t.hyper.lr0 = parse_num(key, v)?,
            "beta1" => t.hyper.beta1 = parse_num(key, v)?,
            "beta2" => t.hyper.beta2 = parse_num(key, v)?,
            "eps" => t.hyper.eps = parse_num(key, v)?,
            "lr_halve_every" => t.hyper.halve_every = parse_num(key, v)?,
            "train_dataset" => self.train_dataset = v.parse().map_err(|e: String| CliError::invalid(key, e))?,
            "val_dataset" => self.val_dataset = v.parse().map_err(|e: String| CliError::invalid(key, e))?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "sweep_axis" => self.sweep_axis = v.to_string(),
            "sweep_values" => {
                self.sweep_values = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            _ => return Err(CliError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t) = (&self.model, &self.train);
        Some(match key {
            "blocks" => m.blocks.to_string(),
            "steps" => m.steps.to_string(),
            "first_channels" => m.first_channels.to_string(),
            "channels" => m.channels.to_string(),
            "scale" => m.scale.to_string(),
            "rdb_layers" => m.rdb_layers.to_string(),
            "growth" => m.growth.to_string(),
            "residual_scale" => m.residual_scale.to_string(),
            "gate_unit" => m.gate_unit.to_string(),
            "detach_feedback" => m.detach_feedback.to_string(),
            "feedback" => self.feedback.to_string(),
            "m" => self.m.to_string(),
            "n" => self.n.to_string(),
            "batch" => t.batch.to_string(),
            "patch" => t.patch.to_string(),
            "iterations" => t.iterations.to_string(),
            "seed" => t.seed.to_string(),
            "loss_mode" => t.loss_mode.to_string(),
            "augment_flip" => t.augment.hflip.to_string(),
            "augment_rotate" => t.augment.rotate.to_string(),
            "augment_scale" => t.augment.scale.to_string(),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "lr" => t.hyper.lr0.to_string(),
            "beta1" => t.hyper.beta1.to_string(),
            "beta2" => t.hyper.beta2.to_string(),
            "eps" => t.hyper.eps.to_string(),
            "lr_halve_every" => t.hyper.halve_every.to_string(),
            "train_dataset" => self.train_dataset.to_string(),
            "val_dataset" => self.val_dataset.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "sweep_axis" => self.sweep_axis.clone(),
            "sweep_values" => self.sweep_values.join(","),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment;
    /// blank lines are ignored; a key may appear only once.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::ConfigSyntax { line: i + 1, detail: format!("expected `key = value`, got `{line}`") })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::ConfigSyntax { line: i + 1, detail: format!("duplicate key `{key}`") });
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path, base: RunConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut c = base;
        c.apply_text(&text)?;
        Ok(c)
    }

    /// Every key, one `key = value` line each.
    pub fn to_text(&self) -> String {
        self.lines(KEYS)
    }

    /// The keys that describe what was trained; the output directory is
    /// left out so identical runs in different places serialize identically.
    pub fn snapshot_text(&self) -> String {
        let keys: Vec<&str> = KEYS.iter().copied().filter(|k| *k != "output_dir").collect();
        self.lines(&keys)
    }

    fn lines(&self, keys: &[&str]) -> String {
        keys.iter().map(|k| format!("{k} = {}\n", self.get(k).expect("listed key"))).collect()
    }

    pub fn topology(&self) -> Result<FeedbackTopology> {
        if self.feedback == FeedbackMode::None {
            return Ok(FeedbackTopology::none(self.model.blocks));
        }
        Ok(FeedbackTopology::new(self.model.blocks, self.m, self.n, self.feedback)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.topology()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Named starting points for `--preset`.
pub fn preset(name: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    match name {
        "final" => {}
        "study" => {
            c.model = ModelConfig::new(7, 2, 128, 32, 4);
            c.train.iterations = 200_000;
            c.val_dataset = DataSource::Dir(PathBuf::from("data/Urban100"));
            c.output_dir = PathBuf::from("runs/study");
        }
        "sm-baseline" => {
            c = preset("study")?;
            c.m = 4;
            c.n = 7;
            c.output_dir = PathBuf::from("runs/sm-baseline");
        }
        "tiny" => {
            c.model = ModelConfig::new(3, 2, 16, 8, 2);
            c.n = 2;
            c.train = TrainConfig {
                batch: 1,
                patch: 48,
                iterations: 500,
                augment: AugmentToggles::default(),
                checkpoint_every: 500,
                ..TrainConfig::default()
            };
            c.train_dataset = DataSource::Synthetic { count: 1, size: 96, seed: 1 };
            c.val_dataset = DataSource::Synthetic { count: 1, size: 96, seed: 1 };
            c.output_dir = PathBuf::from("runs/tiny");
        }
        "ablate-tiny" => {
            c.model = ModelConfig::new(7, 2, 8, 4, 2);
            c.train = TrainConfig {
                batch: 4,
                patch: 12,
                iterations: 10_000,
                checkpoint_every: 10_000,
                hyper: AdamHyper { lr0: 1e-3, ..AdamHyper::default() },
                ..TrainConfig::default()
            };
            c.train_dataset = DataSource::Synthetic { count: 32, size: 128, seed: 1000 };
            c.val_dataset = DataSource::Synthetic { count: 16, size: 64, seed: 9000 };
            c.output_dir = PathBuf::from("runs/ablate-tiny");
            c.sweep_values = vec!["4".into(), "7".into()];
        }
        other => return Err(CliError::UnknownPreset(other.to_string())),
    }
    Ok(c)
}

pub const PRESETS: &[&str] = &["final", "study", "sm-baseline", "tiny", "ablate-tiny"];
