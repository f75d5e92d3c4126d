//! Training configuration, read from JSON or a flat `key = value` file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KanError, Result};
use crate::head::HeadKind;
use crate::optim::{AdamConfig, OptimizerConfig};
use crate::spline::{make_uniform_grid, KnotGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub intervals: usize,
    pub degree: usize,
    pub g_min: f64,
    pub g_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            intervals: 5,
            degree: 3,
            g_min: -1.0,
            g_max: 1.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<KnotGrid> {
        make_uniform_grid(self.g_min, self.g_max, self.intervals, self.degree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub head_kind: HeadKind,
    pub hidden_width: usize,
    /// Must match the dataset when set; taken from the dataset otherwise.
    pub n_classes: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub grid: GridConfig,
    pub seed: u64,
    pub dataset_path: PathBuf,
    pub output_dir: PathBuf,
    /// Record per-iteration losses for every epoch instead of the first only.
    pub record_all_iterations: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head_kind: HeadKind::Kan,
            hidden_width: 32,
            n_classes: None,
            epochs: 5,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            grid: GridConfig::default(),
            seed: 0,
            dataset_path: PathBuf::new(),
            output_dir: PathBuf::from("runs"),
            record_all_iterations: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| KanError::Config(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(KanError::Config("hidden_width must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(KanError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(KanError::Config("batch_size must be at least 1".into()));
        }
        if matches!(self.n_classes, Some(n) if n < 2) {
            return Err(KanError::Config("n_classes must be at least 2".into()));
        }
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(KanError::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if let OptimizerConfig::Adam(c) = &self.optimizer {
            if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) || c.epsilon <= 0.0
            {
                return Err(KanError::Config(format!(
                    "invalid Adam hyperparameters {c:?}"
                )));
            }
        }
        if self.dataset_path.as_os_str().is_empty() {
            return Err(KanError::Config("dataset_path is required".into()));
        }
        self.grid
            .build()
            .map_err(|e| KanError::Config(format!("grid: {e}")))?;
        Ok(())
    }

    /// Parses JSON (anything starting with `{`) or flat `key = value` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let config = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| KanError::Config(format!("json config: {e}")))?
        } else {
            Self::parse_flat(text)?
        };
        Ok(config)
    }

    fn parse_flat(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| KanError::Config(format!("line {}: expected key=value", n + 1)))?;
            let key = key.trim().to_string();
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(KanError::Config(format!(
                    "line {}: duplicate key {key}",
                    n + 1
                )));
            }
        }

        let mut cfg = TrainConfig::default();
        let optimizer = entries.remove("optimizer").unwrap_or_else(|| "adam".into());
        let mut adam = AdamConfig::default();
        let mut lr = None;
        for (key, value) in &entries {
            let v = value.as_str();
            match key.as_str() {
                "head_kind" => cfg.head_kind = v.parse()?,
                "hidden_width" => cfg.hidden_width = parse_value(key, v)?,
                "n_classes" => {
                    cfg.n_classes = if v.eq_ignore_ascii_case("auto") {
                        None
                    } else {
                        Some(parse_value(key, v)?)
                    }
                }
                "epochs" => cfg.epochs = parse_value(key, v)?,
                "batch_size" => cfg.batch_size = parse_value(key, v)?,
                "seed" => cfg.seed = parse_value(key, v)?,
                "dataset_path" => cfg.dataset_path = PathBuf::from(v),
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "record_all_iterations" => cfg.record_all_iterations = parse_value(key, v)?,
                "grid_intervals" => cfg.grid.intervals = parse_value(key, v)?,
                "grid_degree" => cfg.grid.degree = parse_value(key, v)?,
                "grid_min" => cfg.grid.g_min = parse_value(key, v)?,
                "grid_max" => cfg.grid.g_max = parse_value(key, v)?,
                "lr" => lr = Some(parse_value(key, v)?),
                "beta1" | "beta2" | "epsilon" if !optimizer.eq_ignore_ascii_case("adam") => {
                    return Err(KanError::Config(format!(
                        "{key} only applies to the adam optimizer"
                    )));
                }
                "beta1" => adam.beta1 = parse_value(key, v)?,
                "beta2" => adam.beta2 = parse_value(key, v)?,
                "epsilon" => adam.epsilon = parse_value(key, v)?,
                other => return Err(KanError::Config(format!("unknown config key {other:?}"))),
            }
        }
        cfg.optimizer = match optimizer.to_ascii_lowercase().as_str() {
            "adam" => {
                if let Some(lr) = lr {
                    adam.lr = lr;
                }
                OptimizerConfig::Adam(adam)
            }
            "sgd" => OptimizerConfig::Sgd {
                lr: lr.ok_or_else(|| KanError::Config("sgd needs an explicit lr".into()))?,
            },
            other => return Err(KanError::Config(format!("unknown optimizer {other:?}"))),
        };
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative `dataset_path` and
    /// `output_dir` are resolved against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KanError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        if cfg.dataset_path.is_relative() && !cfg.dataset_path.as_os_str().is_empty() {
            cfg.dataset_path = base.join(&cfg.dataset_path);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
