//! Flat key=value run configuration.
//!
//! Unknown keys are hard errors: a silently ignored hyperparameter typo is
//! the worst failure mode a training config can have.

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{Method, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataSource {
    /// CIFAR-10 binary batch files in the data directory.
    Cifar,
    /// Procedurally generated dataset; no files needed.
    Synthetic,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay_factor`.
    /// Empty means the default schedule (50% and 75% of total epochs).
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub weights: LossWeights,
    pub mask_sigma: f64,
    pub replaced_layers: usize,
    pub seed: u64,
    pub data: DataSource,
    /// Classes kept (in label-remap order) and examples per class; empty
    /// classes list means all ten.
    pub classes: Vec<u8>,
    pub per_class: usize,
    pub eval_per_class: usize,
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub projection_dim: usize,
    pub crop_padding: usize,
    pub flip_probability: f64,
    pub channel_means: [f64; 3],
    pub channel_stds: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Baseline,
            epochs: 30,
            batch_size: 32,
            lr: 0.05,
            lr_decay_epochs: Vec::new(),
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            weights: LossWeights::default(),
            mask_sigma: 0.1,
            replaced_layers: 3,
            seed: 0,
            data: DataSource::Cifar,
            classes: (0..10).collect(),
            per_class: 500,
            eval_per_class: 100,
            widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            projection_dim: 64,
            crop_padding: 4,
            flip_probability: 0.5,
            channel_means: [0.4914, 0.4822, 0.4465],
            channel_stds: [0.2470, 0.2435, 0.2616],
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_triple(key: &str, v: &str) -> Result<[f64; 3]> {
    let list: Vec<f64> = parse_list(key, v)?;
    list.try_into()
        .map_err(|_| Error::Config(format!("{key}: expected exactly 3 values")))
}

impl TrainConfig {
    /// Parse `key = value` lines; `#` starts a comment; unknown keys error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "method" => cfg.method = Method::parse(v)?,
                "epochs" => cfg.epochs = parse_one(key, v)?,
                "batch_size" => cfg.batch_size = parse_one(key, v)?,
                "lr" => cfg.lr = parse_one(key, v)?,
                "lr_decay_epochs" => cfg.lr_decay_epochs = parse_list(key, v)?,
                "lr_decay_factor" => cfg.lr_decay_factor = parse_one(key, v)?,
                "momentum" => cfg.momentum = parse_one(key, v)?,
                "weight_decay" => cfg.weight_decay = parse_one(key, v)?,
                "lambda" => cfg.weights.lambda = parse_one(key, v)?,
                "alpha" => cfg.weights.alpha = parse_one(key, v)?,
                "tau" => cfg.weights.tau = parse_one(key, v)?,
                "mask_sigma" => cfg.mask_sigma = parse_one(key, v)?,
                "replaced_layers" => cfg.replaced_layers = parse_one(key, v)?,
                "seed" => cfg.seed = parse_one(key, v)?,
                "data" => {
                    cfg.data = match v {
                        "cifar" => DataSource::Cifar,
                        "synthetic" => DataSource::Synthetic,
                        other => {
                            return Err(Error::Config(format!(
                                "data: expected cifar|synthetic, got '{other}'"
                            )))
                        }
                    }
                }
                "classes" => cfg.classes = parse_list(key, v)?,
                "per_class" => cfg.per_class = parse_one(key, v)?,
                "eval_per_class" => cfg.eval_per_class = parse_one(key, v)?,
                "widths" => cfg.widths = parse_list(key, v)?,
                "blocks_per_stage" => cfg.blocks_per_stage = parse_one(key, v)?,
                "projection_dim" => cfg.projection_dim = parse_one(key, v)?,
                "crop_padding" => cfg.crop_padding = parse_one(key, v)?,
                "flip_probability" => cfg.flip_probability = parse_one(key, v)?,
                "channel_means" => cfg.channel_means = parse_triple(key, v)?,
                "channel_stds" => cfg.channel_stds = parse_triple(key, v)?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be >= 2 (batch statistics need it)".into(),
            ));
        }
        if self.classes.is_empty() || self.classes.iter().any(|&c| c >= 10) {
            return Err(Error::Config("classes must be a non-empty subset of 0-9".into()));
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return Err(Error::Config("classes contains duplicates".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0,1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("flip_probability must be in [0,1]".into()));
        }
        self.weights.validate()?;
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            method: self.method,
            replaced_layers: self.replaced_layers,
            mask_sigma: self.mask_sigma,
            widths: self.widths.clone(),
            blocks_per_stage: self.blocks_per_stage,
            num_classes: self.classes.len(),
            projection_dim: self.projection_dim,
            input_size: (3, 32, 32),
        }
    }

    /// The decay schedule with defaults resolved: 50% and 75% of `epochs`.
    pub fn decay_epochs(&self) -> Vec<usize> {
        if self.lr_decay_epochs.is_empty() {
            vec![self.epochs / 2, self.epochs * 3 / 4]
        } else {
            self.lr_decay_epochs.clone()
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let drops = self.decay_epochs().iter().filter(|&&e| epoch >= e).count();
        self.lr * self.lr_decay_factor.powi(drops as i32)
    }

    /// Map an original dataset label to the model's class index.
    pub fn class_index(&self, label: u8) -> Result<usize> {
        self.classes
            .iter()
            .position(|&c| c == label)
            .ok_or_else(|| Error::Label(format!("label {label} not in configured classes")))
    }
}
