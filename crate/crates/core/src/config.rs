//! Run configuration: one `key = value` text file covering every stage,
//! overridable by command-line flags. Unknown keys are errors so typos
//! cannot silently fall back to defaults.
//!
//! Recognized keys (defaults in parentheses):
//!
//! Paths (no defaults; commands state which ones they need):
//!   text_path, loc_path, links_path, stopwords_path, external_path,
//!   matrix_path, checkpoint_path, history_path, report_path,
//!   explain_path, sweep_path
//!
//! Correlation and tensor:
//!   min_count (2), epsilon (1.0), window_secs (86400),
//!   words_per_doc (50), max_docs (32), max_checkins (32),
//!   time_transform (logdays | identity),
//!   matrix_from_all_links (false), drop_same_timestamp (false)
//!
//! Dataset:
//!   neg_ratio (1), train_frac (0.8), valid_frac (0.1), test_frac (0.1)
//!
//! Architecture:
//!   conv1_channels (8), conv2_channels (8), kernel_size (3), pad (1),
//!   pool1 (8,8,8), pool2 (4,4,4), mlp_hidden (64)
//!
//! Training:
//!   learning_rate (0.001), batch_size (32), max_epochs (100),
//!   patience (20), optimizer (adam | sgd), loss_reduction (mean | sum),
//!   select_by (auc | loss), stop_at_train_loss (unset), threshold (0.5)
//!
//! Generator:
//!   synth_users (100), synth_vocab (2000), synth_categories (10),
//!   synth_signal (0.8), synth_records_per_user (40),
//!   synth_words_per_post (6), synth_jitter_secs (14400),
//!   synth_span_secs (1209600), synth_locations_per_category (3),
//!   synth_start_time (1600000000), synth_external_pairs (0),
//!   synth_external_words (8)
//!
//! Sweep and misc:
//!   sweep_ratios (0.5,0.6,0.7,0.8,0.9), explain_top (20), seed (42),
//!   threads (0 = one per core)

use std::path::{Path, PathBuf};

use crate::corpus::SyntheticConfig;
use crate::error::{Error, Result};
use crate::network::{ArchConfig, LossReduction};
use crate::tensor::{TensorConfig, TimeTransform};
use crate::trainer::{Optimizer, SelectBy, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub text_path: Option<PathBuf>,
    pub loc_path: Option<PathBuf>,
    pub links_path: Option<PathBuf>,
    pub stopwords_path: Option<PathBuf>,
    pub external_path: Option<PathBuf>,
    pub matrix_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub history_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub explain_path: Option<PathBuf>,
    pub sweep_path: Option<PathBuf>,

    pub min_count: u64,
    pub epsilon: f64,
    pub window_secs: i64,
    pub words_per_doc: usize,
    pub max_docs: usize,
    pub max_checkins: usize,
    pub time_transform: TimeTransform,
    pub matrix_from_all_links: bool,
    pub drop_same_timestamp: bool,

    pub neg_ratio: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,

    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub kernel_size: usize,
    pub pad: usize,
    pub pool1: [usize; 3],
    pub pool2: [usize; 3],
    pub mlp_hidden: Vec<usize>,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: Optimizer,
    pub loss_reduction: LossReduction,
    pub select_by: SelectBy,
    pub stop_at_train_loss: Option<f64>,
    pub threshold: f64,

    pub synth_users: usize,
    pub synth_vocab: usize,
    pub synth_categories: usize,
    pub synth_signal: f64,
    pub synth_records_per_user: usize,
    pub synth_words_per_post: usize,
    pub synth_jitter_secs: i64,
    pub synth_span_secs: i64,
    pub synth_locations_per_category: usize,
    pub synth_start_time: i64,
    pub synth_external_pairs: usize,
    pub synth_external_words: usize,

    pub sweep_ratios: Vec<f64>,
    pub explain_top: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            text_path: None,
            loc_path: None,
            links_path: None,
            stopwords_path: None,
            external_path: None,
            matrix_path: None,
            checkpoint_path: None,
            history_path: None,
            report_path: None,
            explain_path: None,
            sweep_path: None,

            min_count: 2,
            epsilon: 1.0,
            window_secs: 86_400,
            words_per_doc: 50,
            max_docs: 32,
            max_checkins: 32,
            time_transform: TimeTransform::LogDays,
            matrix_from_all_links: false,
            drop_same_timestamp: false,

            neg_ratio: 1,
            train_frac: 0.8,
            valid_frac: 0.1,
            test_frac: 0.1,

            conv1_channels: 8,
            conv2_channels: 8,
            kernel_size: 3,
            pad: 1,
            pool1: [8, 8, 8],
            pool2: [4, 4, 4],
            mlp_hidden: vec![64],

            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 20,
            optimizer: Optimizer::Adam,
            loss_reduction: LossReduction::Mean,
            select_by: SelectBy::Auc,
            stop_at_train_loss: None,
            threshold: 0.5,

            synth_users: 100,
            synth_vocab: 2000,
            synth_categories: 10,
            synth_signal: 0.8,
            synth_records_per_user: 40,
            synth_words_per_post: 6,
            synth_jitter_secs: 4 * 3600,
            synth_span_secs: 14 * 86_400,
            synth_locations_per_category: 3,
            synth_start_time: 1_600_000_000,
            synth_external_pairs: 0,
            synth_external_words: 8,

            sweep_ratios: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            explain_top: 20,
            seed: 42,
            threads: 0,
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("config key {key}: cannot parse {value:?} as {want}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, want))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn parse_triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| parse_num(key, p.trim(), "an integer"))
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(bad(key, value, "three comma-separated integers")),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| parse_num(key, p, want))
        .collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key = value`, got {:?}",
                    path.display(),
                    lineno + 1,
                    line
                ))
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies a single key. Used for both file lines and flag overrides.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| Some(PathBuf::from(v));
        match key {
            "text_path" => self.text_path = path(value),
            "loc_path" => self.loc_path = path(value),
            "links_path" => self.links_path = path(value),
            "stopwords_path" => self.stopwords_path = path(value),
            "external_path" => self.external_path = path(value),
            "matrix_path" => self.matrix_path = path(value),
            "checkpoint_path" => self.checkpoint_path = path(value),
            "history_path" => self.history_path = path(value),
            "report_path" => self.report_path = path(value),
            "explain_path" => self.explain_path = path(value),
            "sweep_path" => self.sweep_path = path(value),

            "min_count" => self.min_count = parse_num(key, value, "an integer")?,
            "epsilon" => self.epsilon = parse_num(key, value, "a number")?,
            "window_secs" => self.window_secs = parse_num(key, value, "an integer")?,
            "words_per_doc" => self.words_per_doc = parse_num(key, value, "an integer")?,
            "max_docs" => self.max_docs = parse_num(key, value, "an integer")?,
            "max_checkins" => self.max_checkins = parse_num(key, value, "an integer")?,
            "time_transform" => {
                self.time_transform = match value {
                    "logdays" => TimeTransform::LogDays,
                    "identity" => TimeTransform::Identity,
                    _ => return Err(bad(key, value, "logdays or identity")),
                }
            }
            "matrix_from_all_links" => self.matrix_from_all_links = parse_bool(key, value)?,
            "drop_same_timestamp" => self.drop_same_timestamp = parse_bool(key, value)?,

            "neg_ratio" => self.neg_ratio = parse_num(key, value, "an integer")?,
            "train_frac" => self.train_frac = parse_num(key, value, "a number")?,
            "valid_frac" => self.valid_frac = parse_num(key, value, "a number")?,
            "test_frac" => self.test_frac = parse_num(key, value, "a number")?,

            "conv1_channels" => self.conv1_channels = parse_num(key, value, "an integer")?,
            "conv2_channels" => self.conv2_channels = parse_num(key, value, "an integer")?,
            "kernel_size" => self.kernel_size = parse_num(key, value, "an integer")?,
            "pad" => self.pad = parse_num(key, value, "an integer")?,
            "pool1" => self.pool1 = parse_triple(key, value)?,
            "pool2" => self.pool2 = parse_triple(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse_list(key, value, "an integer")?,

            "learning_rate" => self.learning_rate = parse_num(key, value, "a number")?,
            "batch_size" => self.batch_size = parse_num(key, value, "an integer")?,
            "max_epochs" => self.max_epochs = parse_num(key, value, "an integer")?,
            "patience" => self.patience = parse_num(key, value, "an integer")?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(bad(key, value, "adam or sgd")),
                }
            }
            "loss_reduction" => {
                self.loss_reduction = match value {
                    "mean" => LossReduction::Mean,
                    "sum" => LossReduction::Sum,
                    _ => return Err(bad(key, value, "mean or sum")),
                }
            }
            "select_by" => {
                self.select_by = match value {
                    "auc" => SelectBy::Auc,
                    "loss" => SelectBy::Loss,
                    _ => return Err(bad(key, value, "auc or loss")),
                }
            }
            "stop_at_train_loss" => {
                self.stop_at_train_loss = Some(parse_num(key, value, "a number")?)
            }
            "threshold" => self.threshold = parse_num(key, value, "a number")?,

            "synth_users" => self.synth_users = parse_num(key, value, "an integer")?,
            "synth_vocab" => self.synth_vocab = parse_num(key, value, "an integer")?,
            "synth_categories" => self.synth_categories = parse_num(key, value, "an integer")?,
            "synth_signal" => self.synth_signal = parse_num(key, value, "a number")?,
            "synth_records_per_user" => {
                self.synth_records_per_user = parse_num(key, value, "an integer")?
            }
            "synth_words_per_post" => {
                self.synth_words_per_post = parse_num(key, value, "an integer")?
            }
            "synth_jitter_secs" => self.synth_jitter_secs = parse_num(key, value, "an integer")?,
            "synth_span_secs" => self.synth_span_secs = parse_num(key, value, "an integer")?,
            "synth_locations_per_category" => {
                self.synth_locations_per_category = parse_num(key, value, "an integer")?
            }
            "synth_start_time" => self.synth_start_time = parse_num(key, value, "an integer")?,
            "synth_external_pairs" => {
                self.synth_external_pairs = parse_num(key, value, "an integer")?
            }
            "synth_external_words" => {
                self.synth_external_words = parse_num(key, value, "an integer")?
            }

            "sweep_ratios" => self.sweep_ratios = parse_list(key, value, "a number")?,
            "explain_top" => self.explain_top = parse_num(key, value, "an integer")?,
            "seed" => self.seed = parse_num(key, value, "an integer")?,
            "threads" => self.threads = parse_num(key, value, "an integer")?,

            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_frac, self.valid_frac, self.test_frac)
    }

    pub fn tensor_config(&self) -> TensorConfig {
        TensorConfig {
            words_per_doc: self.words_per_doc,
            max_docs: self.max_docs,
            max_checkins: self.max_checkins,
            time_transform: self.time_transform,
        }
    }

    pub fn arch_config(&self) -> ArchConfig {
        ArchConfig {
            input_channels: 2,
            conv1_out: self.conv1_channels,
            conv2_out: self.conv2_channels,
            kernel: [self.kernel_size; 3],
            pad: [self.pad; 3],
            pool1: self.pool1,
            pool2: self.pool2,
            mlp_hidden: self.mlp_hidden.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            optimizer: self.optimizer,
            loss_reduction: self.loss_reduction,
            select_by: self.select_by,
            threads: self.threads,
            stop_at_train_loss: self.stop_at_train_loss,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_users: self.synth_users,
            vocab_size: self.synth_vocab,
            n_categories: self.synth_categories,
            signal_strength: self.synth_signal,
            records_per_user: self.synth_records_per_user,
            words_per_post: self.synth_words_per_post,
            jitter_max_secs: self.synth_jitter_secs,
            span_secs: self.synth_span_secs,
            start_time: self.synth_start_time,
            locations_per_category: self.synth_locations_per_category,
            seed: self.seed,
        }
    }

    /// A required path, with an error that names the missing key.
    pub fn require(&self, key: &str) -> Result<&Path> {
        let slot = match key {
            "text_path" => &self.text_path,
            "loc_path" => &self.loc_path,
            "links_path" => &self.links_path,
            "external_path" => &self.external_path,
            "matrix_path" => &self.matrix_path,
            "checkpoint_path" => &self.checkpoint_path,
            "history_path" => &self.history_path,
            "report_path" => &self.report_path,
            "explain_path" => &self.explain_path,
            "sweep_path" => &self.sweep_path,
            _ => return Err(Error::Config(format!("not a path key: {key}"))),
        };
        slot.as_deref()
            .ok_or_else(|| Error::Config(format!("config key {key} is required for this command")))
    }
}
