use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::kg::{NegativeMode, TaskMode};
use crate::model::{Activation, EstimatorKind, ModelConfig};
use crate::pretrain::PretrainConfig;
use crate::tensor::Precision;

/// Everything one training run depends on. Keys of [`TrainConfig::set`] are
/// the flat names used by config files and `--set`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: TaskMode,
    /// Hop radius of the local subgraph.
    pub hops: usize,
    pub v_max: usize,
    pub metapath_max_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Validation rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    pub folds: usize,
    pub stratify: bool,
    pub precision: Precision,
    pub negatives: NegativeMode,
    /// Relation of the task links, hidden between each queried pair.
    pub exclude_relation: Option<String>,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: TaskMode::Binary,
            hops: 2,
            v_max: 64,
            metapath_max_len: 3,
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            patience: 20,
            folds: 10,
            stratify: true,
            precision: Precision::F32,
            negatives: NegativeMode::BalancedPerHead,
            exclude_relation: None,
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn num<T: core::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value, "not a number"))
}

fn positive(key: &str, value: &str) -> Result<usize, ConfigError> {
    let v: usize = num(key, value)?;
    if v == 0 {
        return Err(bad(key, value, "must be at least 1"));
    }
    Ok(v)
}

fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn real(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = num(key, value)?;
    if !v.is_finite() {
        return Err(bad(key, value, "must be finite"));
    }
    Ok(v)
}

fn negative_mode_name(m: NegativeMode) -> &'static str {
    match m {
        NegativeMode::BalancedPerHead => "balanced",
        NegativeMode::CounterpartPerPositive => "counterpart",
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "task",
        "k",
        "v_max",
        "metapath.max_len",
        "epochs",
        "batch_size",
        "lr",
        "seed",
        "patience",
        "folds",
        "stratify",
        "precision",
        "negatives.mode",
        "task.exclude_relation",
        "hidden_dim",
        "estimator.kind",
        "srl.temperature",
        "srl.activation",
        "gcn.layers",
        "rgnn.layers",
        "rgnn.self_term",
        "mi.tau",
        "mi.lambda",
        "ablate.srl",
        "ablate.ssp",
        "ablate.mi",
        "fine_tune",
        "pretrain.dim",
        "pretrain.epochs",
        "pretrain.lr",
        "pretrain.margin",
        "pretrain.negatives",
        "pretrain.batch_size",
        "pretrain.resample",
        "pretrain.adversarial_temperature",
    ];

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let m = &mut self.model;
        let p = &mut self.pretrain;
        match key {
            "task" => self.task = TaskMode::parse(value).ok_or_else(|| bad(key, value, "expected binary, multi_class or multi_label"))?,
            "k" => {
                let k = positive(key, value)?;
                if k > 3 {
                    return Err(bad(key, value, "hop radius is limited to 3"));
                }
                self.hops = k;
            }
            "v_max" => {
                let v = num(key, value)?;
                if v < 2 {
                    return Err(bad(key, value, "must hold both endpoints"));
                }
                self.v_max = v;
            }
            "metapath.max_len" => self.metapath_max_len = positive(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = positive(key, value)?,
            "lr" => self.lr = real(key, value)?,
            "seed" => {
                self.seed = num(key, value)?;
                self.pretrain.seed = self.seed;
            }
            "patience" => self.patience = num(key, value)?,
            "folds" => {
                let f = num(key, value)?;
                if f < 2 {
                    return Err(bad(key, value, "need at least 2 folds"));
                }
                self.folds = f;
            }
            "stratify" => self.stratify = flag(key, value)?,
            "precision" => self.precision = Precision::parse(value).ok_or_else(|| bad(key, value, "expected f32 or f64"))?,
            "negatives.mode" => {
                self.negatives = match value {
                    "balanced" => NegativeMode::BalancedPerHead,
                    "counterpart" => NegativeMode::CounterpartPerPositive,
                    _ => return Err(bad(key, value, "expected balanced or counterpart")),
                }
            }
            "task.exclude_relation" => {
                self.exclude_relation = if value.is_empty() || value == "none" { None } else { Some(value.to_string()) }
            }
            "hidden_dim" => m.hidden_dim = positive(key, value)?,
            "estimator.kind" => {
                m.estimator = EstimatorKind::parse(value)
                    .ok_or_else(|| bad(key, value, "expected attention, mlp, weighted_cosine or cosine"))?
            }
            "srl.temperature" => m.temperature = real(key, value)?,
            "srl.activation" => {
                m.projection_activation = match value {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    _ => return Err(bad(key, value, "expected relu or identity")),
                }
            }
            "gcn.layers" => m.gcn_layers = num(key, value)?,
            "rgnn.layers" => m.rgnn_layers = num(key, value)?,
            "rgnn.self_term" => m.self_term = flag(key, value)?,
            "mi.tau" => m.tau = real(key, value)?,
            "mi.lambda" => m.lambda = real(key, value)?,
            "ablate.srl" => m.ablate.srl = flag(key, value)?,
            "ablate.ssp" => m.ablate.ssp = flag(key, value)?,
            "ablate.mi" => m.ablate.mi = flag(key, value)?,
            "fine_tune" => m.fine_tune = flag(key, value)?,
            "pretrain.dim" => p.dim = positive(key, value)?,
            "pretrain.epochs" => p.epochs = num(key, value)?,
            "pretrain.lr" => p.lr = real(key, value)?,
            "pretrain.margin" => p.margin = real(key, value)?,
            "pretrain.negatives" => p.negatives = positive(key, value)?,
            "pretrain.batch_size" => p.batch_size = positive(key, value)?,
            "pretrain.resample" => p.resample_negatives = flag(key, value)?,
            "pretrain.adversarial_temperature" => {
                p.adversarial_temperature = if value == "none" { None } else { Some(real(key, value)?) }
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        if key.starts_with("srl.") || key.starts_with("mi.") || key == "hidden_dim" {
            self.model.validate().map_err(|e| bad(key, value, format!("{e}")))?;
        }
        Ok(())
    }

    /// Every key with its current value, in [`TrainConfig::KEYS`] order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let p = &self.pretrain;
        let b = |v: bool| String::from(if v { "true" } else { "false" });
        Self::KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "task" => self.task.name().to_string(),
                    "k" => format!("{}", self.hops),
                    "v_max" => format!("{}", self.v_max),
                    "metapath.max_len" => format!("{}", self.metapath_max_len),
                    "epochs" => format!("{}", self.epochs),
                    "batch_size" => format!("{}", self.batch_size),
                    "lr" => format!("{}", self.lr),
                    "seed" => format!("{}", self.seed),
                    "patience" => format!("{}", self.patience),
                    "folds" => format!("{}", self.folds),
                    "stratify" => b(self.stratify),
                    "precision" => self.precision.name().to_string(),
                    "negatives.mode" => negative_mode_name(self.negatives).to_string(),
                    "task.exclude_relation" => self.exclude_relation.clone().unwrap_or_else(|| "none".into()),
                    "hidden_dim" => format!("{}", m.hidden_dim),
                    "estimator.kind" => m.estimator.name().to_string(),
                    "srl.temperature" => format!("{}", m.temperature),
                    "srl.activation" => match m.projection_activation {
                        Activation::Relu => "relu".to_string(),
                        Activation::Identity => "identity".to_string(),
                    },
                    "gcn.layers" => format!("{}", m.gcn_layers),
                    "rgnn.layers" => format!("{}", m.rgnn_layers),
                    "rgnn.self_term" => b(m.self_term),
                    "mi.tau" => format!("{}", m.tau),
                    "mi.lambda" => format!("{}", m.lambda),
                    "ablate.srl" => b(m.ablate.srl),
                    "ablate.ssp" => b(m.ablate.ssp),
                    "ablate.mi" => b(m.ablate.mi),
                    "fine_tune" => b(m.fine_tune),
                    "pretrain.dim" => format!("{}", p.dim),
                    "pretrain.epochs" => format!("{}", p.epochs),
                    "pretrain.lr" => format!("{}", p.lr),
                    "pretrain.margin" => format!("{}", p.margin),
                    "pretrain.negatives" => format!("{}", p.negatives),
                    "pretrain.batch_size" => format!("{}", p.batch_size),
                    "pretrain.resample" => b(p.resample_negatives),
                    "pretrain.adversarial_temperature" => match p.adversarial_temperature {
                        Some(t) => format!("{t}"),
                        None => "none".to_string(),
                    },
                    _ => unreachable!("KEYS and entries agree"),
                };
                (k.to_string(), v)
            })
            .collect()
    }
}
