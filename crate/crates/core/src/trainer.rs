//! Mini-batch training with shuffled epochs, per-epoch validation AUC,
//! best-model retention, and early stopping.
//!
//! Determinism contract: every source of randomness derives from the
//! configured seed, each epoch reseeds from (seed, epoch), and per-sample
//! gradients are reduced in sample order, so results are bit-identical
//! across runs and across thread counts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{
    LocationRecord, LocationSequences, PairDataset, Split, TextRecord, TextSequences, UserSequence,
};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::network::{
    bce_grad_single, bce_loss_single, ArchConfig, Gradients, LossReduction, Model,
};
use crate::tensor::{build_tensor, TensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

/// What "best epoch" means for model retention and early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectBy {
    Auc,
    Loss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub loss_reduction: LossReduction,
    pub select_by: SelectBy,
    /// Worker threads for per-sample forward/backward; 0 means one per
    /// core. Does not affect results.
    pub threads: usize,
    /// Optional memorization stop: end training once the epoch's mean
    /// train loss falls to this value or below.
    pub stop_at_train_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 20,
            seed: 42,
            optimizer: Optimizer::Adam,
            loss_reduction: LossReduction::Mean,
            select_by: SelectBy::Auc,
            threads: 0,
            stop_at_train_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".to_string()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// One history row; epochs are numbered from 1. `train_loss` is the mean
/// per-sample loss over the epoch regardless of the batch reduction mode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: f64,
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "epoch,train_loss,valid_auc").map_err(io)?;
    for row in history {
        writeln!(w, "{},{},{}", row.epoch, row.train_loss, row.valid_auc).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient counts differ");
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, learning_rate: f64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient counts differ");
    assert_eq!(params.len(), state.m.len(), "optimizer state size differs");
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Everything the training loop reads. Sequences must contain every user
/// referenced by the dataset.
pub struct TrainInputs<'a> {
    pub dataset: &'a PairDataset,
    pub matrix: &'a CorrelationMatrix,
    pub text_seqs: &'a TextSequences,
    pub loc_seqs: &'a LocationSequences,
    pub tensor_config: &'a TensorConfig,
}

struct Sample<'a> {
    text: &'a UserSequence<TextRecord>,
    loc: &'a UserSequence<LocationRecord>,
    label: f64,
}

fn collect_samples<'a>(inputs: &TrainInputs<'a>, split: Split) -> Result<Vec<Sample<'a>>> {
    inputs
        .dataset
        .rows_in(split)
        .map(|row| {
            let text = inputs.text_seqs.get(&row.text_user).ok_or_else(|| {
                Error::Data(format!(
                    "pair references text user {:?} with no records",
                    row.text_user
                ))
            })?;
            let loc = inputs.loc_seqs.get(&row.loc_user).ok_or_else(|| {
                Error::Data(format!(
                    "pair references location user {:?} with no records",
                    row.loc_user
                ))
            })?;
            Ok(Sample {
                text,
                loc,
                label: if row.label { 1.0 } else { 0.0 },
            })
        })
        .collect()
}

/// Mutable training progress. Serializable, so an interrupted run can
/// resume and produce a bit-identical continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// Index of the next epoch to run (0-based).
    pub epoch: usize,
    pub params: Vec<f64>,
    pub adam: Option<AdamState>,
    pub best_params: Vec<f64>,
    pub best_metric: f64,
    pub best_epoch: Option<usize>,
    pub stale: usize,
    pub history: Vec<EpochStats>,
}

impl TrainerState {
    pub fn new(model: &Model, optimizer: Optimizer) -> Self {
        let params = model.flatten_params();
        TrainerState {
            epoch: 0,
            adam: match optimizer {
                Optimizer::Adam => Some(AdamState::new(params.len())),
                Optimizer::Sgd => None,
            },
            best_params: params.clone(),
            params,
            best_metric: f64::NEG_INFINITY,
            best_epoch: None,
            stale: 0,
            history: Vec::new(),
        }
    }
}

pub struct TrainOutcome {
    /// The retained model: parameters from the best validation epoch.
    pub model: Model,
    /// Parameters as of the last epoch run.
    pub final_model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

/// Seed for epoch-local shuffling. Depends only on (seed, epoch) so a
/// resumed run replays the identical stream.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(epoch as u64 + 1)
}

pub fn train(inputs: &TrainInputs, arch: &ArchConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::new(arch.clone(), cfg.seed)?;
    let mut state = TrainerState::new(&model, cfg.optimizer);
    train_from(inputs, &model, &mut state, cfg)?;
    outcome(model, state)
}

fn outcome(template: Model, state: TrainerState) -> Result<TrainOutcome> {
    let mut best = template.clone();
    best.set_flat_params(&state.best_params)?;
    let mut last = template;
    last.set_flat_params(&state.params)?;
    Ok(TrainOutcome {
        model: best,
        final_model: last,
        history: state.history,
        best_epoch: state.best_epoch,
    })
}

/// Runs (or continues) the training loop until max_epochs, patience, or
/// the optional train-loss stop. `model` supplies the architecture; the
/// current parameters live in `state`.
pub fn train_from(
    inputs: &TrainInputs,
    model: &Model,
    state: &mut TrainerState,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if state.params.len() != model.param_count() {
        return Err(Error::shape(
            "trainer",
            format!(
                "state holds {} parameters but the model has {}",
                state.params.len(),
                model.param_count()
            ),
        ));
    }
    match (cfg.optimizer, &state.adam) {
        (Optimizer::Adam, None) | (Optimizer::Sgd, Some(_)) => {
            return Err(Error::Config(
                "optimizer does not match the saved trainer state".to_string(),
            ))
        }
        _ => {}
    }
    let train_samples = collect_samples(inputs, Split::Train)?;
    let valid_samples = collect_samples(inputs, Split::Valid)?;
    if train_samples.is_empty() || valid_samples.is_empty() {
        return Err(Error::Data(
            "training requires non-empty train and valid splits".to_string(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;

    let mut work = model.clone();
    work.set_flat_params(&state.params)?;

    while state.epoch < cfg.max_epochs {
        if state.best_epoch.is_some() && state.stale >= cfg.patience {
            break;
        }
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train_samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let scale = match cfg.loss_reduction {
                LossReduction::Sum => 1.0,
                LossReduction::Mean => 1.0 / chunk.len() as f64,
            };
            let results: Vec<Result<(f64, Gradients)>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&idx| {
                        let sample = &train_samples[idx];
                        let tensor =
                            build_tensor(sample.text, sample.loc, inputs.matrix, inputs.tensor_config)?;
                        let (prob, tape) = work.forward(&tensor.to_feature_map())?;
                        let loss = bce_loss_single(prob, sample.label);
                        let grads =
                            work.backward(&tape, scale * bce_grad_single(prob, sample.label));
                        Ok((loss, grads))
                    })
                    .collect()
            });
            // Reduce in sample order: identical results at any thread count.
            let mut total: Option<Gradients> = None;
            let mut batch_loss = 0.0;
            for result in results {
                let (loss, grads) = result?;
                batch_loss += loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(t) => t.add_assign(&grads),
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx,
                    learning_rate: cfg.learning_rate,
                });
            }
            loss_sum += batch_loss;
            let grads = total.expect("non-empty batch").flatten();
            match (&cfg.optimizer, &mut state.adam) {
                (Optimizer::Adam, Some(adam)) => {
                    adam_step(&mut state.params, &grads, adam, cfg.learning_rate)
                }
                _ => sgd_step(&mut state.params, &grads, cfg.learning_rate),
            }
            work.set_flat_params(&state.params)?;
        }
        let train_loss = loss_sum / train_samples.len() as f64;

        let scored: Vec<Result<f64>> = pool.install(|| {
            valid_samples
                .par_iter()
                .map(|sample| {
                    let tensor =
                        build_tensor(sample.text, sample.loc, inputs.matrix, inputs.tensor_config)?;
                    work.predict_map(&tensor.to_feature_map())
                })
                .collect()
        });
        let mut scores = Vec::with_capacity(valid_samples.len());
        for s in scored {
            scores.push(s?);
        }
        let labels: Vec<u8> = valid_samples.iter().map(|s| s.label as u8).collect();
        let valid_auc = roc_auc(&scores, &labels).ok_or_else(|| {
            Error::Data("validation split holds a single class; AUC undefined".to_string())
        })?;
        let valid_loss = crate::network::bce_loss(
            &scores,
            &valid_samples.iter().map(|s| s.label).collect::<Vec<_>>(),
            LossReduction::Mean,
        );
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                batch: usize::MAX,
                learning_rate: cfg.learning_rate,
            });
        }

        state.history.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            valid_auc,
        });
        let metric = match cfg.select_by {
            SelectBy::Auc => valid_auc,
            SelectBy::Loss => -valid_loss,
        };
        if metric > state.best_metric {
            state.best_metric = metric;
            state.best_params = state.params.clone();
            state.best_epoch = Some(epoch + 1);
            state.stale = 0;
        } else {
            state.stale += 1;
        }
        state.epoch += 1;
        log::info!(
            "epoch {}: train_loss {:.6} valid_auc {:.4}",
            epoch + 1,
            train_loss,
            valid_auc
        );

        if let Some(stop) = cfg.stop_at_train_loss {
            if train_loss <= stop {
                log::info!("train loss reached {stop}; stopping");
                break;
            }
        }
    }
    Ok(())
}

/// Continues training from a saved state, returning the combined outcome.
pub fn resume(
    inputs: &TrainInputs,
    arch: &ArchConfig,
    mut state: TrainerState,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = Model::new(arch.clone(), cfg.seed)?;
    train_from(inputs, &model, &mut state, cfg)?;
    outcome(model, state)
}

const STATE_MAGIC: &[u8; 8] = b"GLTRSTAT";
const STATE_VERSION: u32 = 1;

pub fn save_state(path: &Path, state: &TrainerState) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| Error::io(path, e);
    w.write_all(STATE_MAGIC).map_err(io)?;
    binio::write_u32(&mut w, STATE_VERSION).map_err(io)?;
    binio::write_u64(&mut w, state.epoch as u64).map_err(io)?;
    binio::write_u64(&mut w, state.stale as u64).map_err(io)?;
    binio::write_u64(&mut w, state.best_epoch.map_or(0, |e| e as u64)).map_err(io)?;
    binio::write_f64(&mut w, state.best_metric).map_err(io)?;
    let write_vec = |w: &mut BufWriter<File>, v: &[f64]| -> std::io::Result<()> {
        binio::write_u64(w, v.len() as u64)?;
        for &x in v {
            binio::write_f64(w, x)?;
        }
        Ok(())
    };
    write_vec(&mut w, &state.params).map_err(io)?;
    write_vec(&mut w, &state.best_params).map_err(io)?;
    match &state.adam {
        None => binio::write_u32(&mut w, 0).map_err(io)?,
        Some(adam) => {
            binio::write_u32(&mut w, 1).map_err(io)?;
            binio::write_u64(&mut w, adam.t).map_err(io)?;
            write_vec(&mut w, &adam.m).map_err(io)?;
            write_vec(&mut w, &adam.v).map_err(io)?;
        }
    }
    binio::write_u64(&mut w, state.history.len() as u64).map_err(io)?;
    for row in &state.history {
        binio::write_u64(&mut w, row.epoch as u64).map_err(io)?;
        binio::write_f64(&mut w, row.train_loss).map_err(io)?;
        binio::write_f64(&mut w, row.valid_auc).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<TrainerState> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = binio::Reader::new(BufReader::new(file));
    let fail = |m: String| Error::schema(path, m);
    r.magic(STATE_MAGIC).map_err(fail)?;
    let version = r.u32().map_err(fail)?;
    if version != STATE_VERSION {
        return Err(Error::schema(
            path,
            format!("unsupported trainer state version {version}"),
        ));
    }
    let epoch = r.u64().map_err(fail)? as usize;
    let stale = r.u64().map_err(fail)? as usize;
    let best_epoch = match r.u64().map_err(fail)? {
        0 => None,
        e => Some(e as usize),
    };
    let best_metric = r.f64().map_err(fail)?;
    let read_vec = |r: &mut binio::Reader<BufReader<File>>| -> std::result::Result<Vec<f64>, String> {
        let n = r.u64()? as usize;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(r.f64()?);
        }
        Ok(v)
    };
    let params = read_vec(&mut r).map_err(fail)?;
    let best_params = read_vec(&mut r).map_err(fail)?;
    let adam = match r.u32().map_err(fail)? {
        0 => None,
        1 => {
            let t = r.u64().map_err(fail)?;
            let m = read_vec(&mut r).map_err(fail)?;
            let v = read_vec(&mut r).map_err(fail)?;
            Some(AdamState { m, v, t })
        }
        other => {
            return Err(Error::schema(
                path,
                format!("bad optimizer flag {other} in trainer state"),
            ))
        }
    };
    let n_history = r.u64().map_err(fail)? as usize;
    let mut history = Vec::with_capacity(n_history);
    for _ in 0..n_history {
        let epoch = r.u64().map_err(fail)? as usize;
        let train_loss = r.f64().map_err(fail)?;
        let valid_auc = r.f64().map_err(fail)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            valid_auc,
        });
    }
    r.expect_eof().map_err(fail)?;
    Ok(TrainerState {
        epoch,
        params,
        adam,
        best_params,
        best_metric,
        best_epoch,
        stale,
        history,
    })
}
