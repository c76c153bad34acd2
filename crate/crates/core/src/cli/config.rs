//! Plain-text key=value run configuration. Every field has a default, so a
//! minimal config file is a single `dataset=` line; command-line flags
//! override the file.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::{TrainConfig, Variant};
use crate::transformer::TransformerConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: PathBuf,
    /// Fraction of records that become the training split; validation takes
    /// `train.val_split`, the remainder is the test split.
    pub train_frac: f32,
    pub train: TrainConfig,
    pub arch: TransformerConfig,
    pub variant: Variant,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            checkpoint: PathBuf::from("model.ckpt"),
            train_frac: 0.8,
            train: TrainConfig::default(),
            arch: TransformerConfig::default(),
            variant: Variant::Full,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key. Keys mirror the config file format.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::config(format!("{key} does not accept {value:?}"))
            })
        }
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "train_frac" => self.train_frac = num(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "gamma" => self.train.gamma = num(key, value)?,
            "rules" => self.train.rules = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "max_len" => {
                self.train.max_len = num(key, value)?;
                self.arch.max_len = self.train.max_len;
            }
            "val_split" => self.train.val_split = num(key, value)?,
            "early_stop_val_acc" => {
                self.train.early_stop_val_acc = match value {
                    "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "d_model" => self.arch.d_model = num(key, value)?,
            "n_heads" => self.arch.n_heads = num(key, value)?,
            "n_layers" => self.arch.n_layers = num(key, value)?,
            "d_ff" => self.arch.d_ff = num(key, value)?,
            "dropout" => self.arch.dropout = num(key, value)?,
            "variant" => self.variant = value.parse()?,
            other => {
                return Err(Error::config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::config(format!(
                "train_frac {} must lie strictly between 0 and 1",
                self.train_frac
            )));
        }
        if self.train_frac + self.train.val_split >= 1.0 - 1e-6 {
            return Err(Error::config(format!(
                "train_frac {} plus val_split {} leaves no test split",
                self.train_frac, self.train.val_split
            )));
        }
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => "none".to_string(),
        Some(x) => x.to_string(),
    }
}

/// One-line key=value echo of a training config. Float Display round-trips
/// exactly, so parsing the line recovers identical bits.
pub fn train_line(cfg: &TrainConfig) -> String {
    format!(
        "epochs={} batch_size={} learning_rate={} gamma={} rules={} seed={} max_len={} val_split={} early_stop_val_acc={}",
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.gamma,
        cfg.rules,
        cfg.seed,
        cfg.max_len,
        cfg.val_split,
        fmt_opt(cfg.early_stop_val_acc)
    )
}

pub fn parse_train_line(line: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut seen = 0usize;
    for pair in line.split_whitespace() {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("malformed train field {pair:?}")))?;
        let parse_err = || Error::config(format!("train field {key} rejects {value:?}"));
        match key {
            "epochs" => cfg.epochs = value.parse().map_err(|_| parse_err())?,
            "batch_size" => cfg.batch_size = value.parse().map_err(|_| parse_err())?,
            "learning_rate" => cfg.learning_rate = value.parse().map_err(|_| parse_err())?,
            "gamma" => cfg.gamma = value.parse().map_err(|_| parse_err())?,
            "rules" => cfg.rules = value.parse().map_err(|_| parse_err())?,
            "seed" => cfg.seed = value.parse().map_err(|_| parse_err())?,
            "max_len" => cfg.max_len = value.parse().map_err(|_| parse_err())?,
            "val_split" => cfg.val_split = value.parse().map_err(|_| parse_err())?,
            "early_stop_val_acc" => {
                cfg.early_stop_val_acc = match value {
                    "none" => None,
                    v => Some(v.parse().map_err(|_| parse_err())?),
                }
            }
            other => return Err(Error::config(format!("unknown train field {other:?}"))),
        }
        seen += 1;
    }
    if seen != 9 {
        return Err(Error::config(format!("train line carries {seen} of 9 fields")));
    }
    Ok(cfg)
}

pub fn arch_line(cfg: &TransformerConfig) -> String {
    format!(
        "d_model={} n_heads={} n_layers={} d_ff={} dropout={} max_len={} vocab_size={}",
        cfg.d_model, cfg.n_heads, cfg.n_layers, cfg.d_ff, cfg.dropout, cfg.max_len, cfg.vocab_size
    )
}

pub fn parse_arch_line(line: &str) -> Result<TransformerConfig> {
    let mut cfg = TransformerConfig::default();
    let mut seen = 0usize;
    for pair in line.split_whitespace() {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("malformed arch field {pair:?}")))?;
        let parse_err = || Error::config(format!("arch field {key} rejects {value:?}"));
        match key {
            "d_model" => cfg.d_model = value.parse().map_err(|_| parse_err())?,
            "n_heads" => cfg.n_heads = value.parse().map_err(|_| parse_err())?,
            "n_layers" => cfg.n_layers = value.parse().map_err(|_| parse_err())?,
            "d_ff" => cfg.d_ff = value.parse().map_err(|_| parse_err())?,
            "dropout" => cfg.dropout = value.parse().map_err(|_| parse_err())?,
            "max_len" => cfg.max_len = value.parse().map_err(|_| parse_err())?,
            "vocab_size" => cfg.vocab_size = value.parse().map_err(|_| parse_err())?,
            other => return Err(Error::config(format!("unknown arch field {other:?}"))),
        }
        seen += 1;
    }
    if seen != 7 {
        return Err(Error::config(format!("arch line carries {seen} of 7 fields")));
    }
    Ok(cfg)
}
