//! End-to-end orchestration shared by the command-line tool and the
//! Python bindings: loading, pair sampling, matrix construction,
//! training, evaluation, scoring, and the label-ratio sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::corpus::{
    load_links, load_location_platform, load_text_platform, sample_negatives, split,
    LocationRecord, LocationSequences, PairDataset, Split, Stopwords, TextRecord, TextSequences,
    UserSequence,
};
use crate::correlation::{
    count_cooccurrences, ingest_external_pairs, load_external_pairs, CategoryIndex,
    CorrelationMatrix, Vocabulary,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, roc_auc, write_sweep_csv, EvalReport, SweepRow};
use crate::network::{
    load_checkpoint, save_checkpoint, CheckpointMeta, Model,
};
use crate::tensor::{build_tensor, explain, ExplainRow, TensorConfig};
use crate::trainer::{self, write_history_csv, TrainInputs, TrainOutcome};

/// Everything loaded from the three input files.
pub struct PipelineData {
    pub text_seqs: TextSequences,
    pub loc_seqs: LocationSequences,
    pub links: Vec<(String, String)>,
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(tag)
}

fn stopwords(cfg: &RunConfig) -> Result<Stopwords> {
    match &cfg.stopwords_path {
        Some(path) => Stopwords::from_file(path),
        None => Ok(Stopwords::empty()),
    }
}

/// Loads both platforms' records.
pub fn load_sequences(cfg: &RunConfig) -> Result<(TextSequences, LocationSequences)> {
    let stopwords = stopwords(cfg)?;
    let (text_seqs, text_report) =
        load_text_platform(cfg.require("text_path")?, &stopwords, cfg.words_per_doc)?;
    log::info!(
        "text platform: {} users from {} lines ({} malformed, {} empty after preprocessing)",
        text_seqs.len(),
        text_report.lines,
        text_report.malformed,
        text_report.dropped_empty
    );
    let (loc_seqs, loc_report) = load_location_platform(cfg.require("loc_path")?)?;
    log::info!(
        "location platform: {} users from {} lines ({} malformed)",
        loc_seqs.len(),
        loc_report.lines,
        loc_report.malformed
    );
    Ok((text_seqs, loc_seqs))
}

/// Loads records plus ground-truth links, and verifies every linked user
/// actually has records.
pub fn load_inputs(cfg: &RunConfig) -> Result<PipelineData> {
    let (mut text_seqs, mut loc_seqs) = load_sequences(cfg)?;
    let links_path = cfg.require("links_path")?;
    let links = load_links(links_path)?;
    for (text_user, loc_user) in &links {
        if !text_seqs.contains_key(text_user) {
            return Err(Error::Data(format!(
                "{} references text user {:?} with no usable records",
                links_path.display(),
                text_user
            )));
        }
        if !loc_seqs.contains_key(loc_user) {
            return Err(Error::Data(format!(
                "{} references location user {:?} with no usable records",
                links_path.display(),
                loc_user
            )));
        }
    }
    if cfg.drop_same_timestamp {
        let dropped = crate::corpus::drop_same_timestamp(&mut text_seqs, &mut loc_seqs, &links);
        log::info!("dropped {dropped} records sharing timestamps across linked pairs");
    }
    Ok(PipelineData {
        text_seqs,
        loc_seqs,
        links,
    })
}

/// Samples negatives and splits all pairs. The same (links, config, seed)
/// always yields the identical dataset, which is how train and eval agree
/// on the split without persisting it.
pub fn plan_dataset(data: &PipelineData, cfg: &RunConfig, seed: u64) -> Result<PairDataset> {
    let text_users: Vec<String> = data.text_seqs.keys().cloned().collect();
    let loc_users: Vec<String> = data.loc_seqs.keys().cloned().collect();
    let negatives = sample_negatives(
        &data.links,
        &text_users,
        &loc_users,
        cfg.neg_ratio,
        derive_seed(seed, 1),
    )?;
    let dataset = split(
        data.links.clone(),
        negatives.pairs,
        cfg.fractions(),
        derive_seed(seed, 2),
    )?;
    if cfg.neg_ratio == 1 && !negatives.clipped {
        dataset.validate()?;
    }
    Ok(dataset)
}

/// The links the correlation matrix is counted over: train-split links by
/// default, so evaluation pairs never leak into the matrix.
pub fn matrix_links(data: &PipelineData, dataset: &PairDataset, cfg: &RunConfig) -> Vec<(String, String)> {
    if cfg.matrix_from_all_links {
        data.links.clone()
    } else {
        dataset.links_in(Split::Train)
    }
}

/// Builds the word-location correlation matrix from the given links,
/// optionally folding in the external pair file.
pub fn build_matrix(
    data: &PipelineData,
    links: &[(String, String)],
    cfg: &RunConfig,
    use_external: bool,
) -> Result<CorrelationMatrix> {
    let vocab = Vocabulary::build(&data.text_seqs, cfg.min_count);
    let categories = CategoryIndex::build(&data.loc_seqs);
    let mut counts = count_cooccurrences(
        links,
        &data.text_seqs,
        &data.loc_seqs,
        cfg.window_secs,
        vocab.clone(),
        categories.clone(),
    )?;
    if use_external {
        if let Some(path) = &cfg.external_path {
            let stopwords = stopwords(cfg)?;
            let pairs = load_external_pairs(path, &stopwords, cfg.words_per_doc)?;
            let (delta, skipped) = ingest_external_pairs(&pairs, &vocab, &categories);
            counts.merge(&delta)?;
            log::info!(
                "ingested {} external pairs ({} skipped)",
                pairs.len() - skipped,
                skipped
            );
        }
    }
    CorrelationMatrix::build(&counts, cfg.epsilon)
}

/// corr: build the matrix and save it.
pub fn run_corr(cfg: &RunConfig) -> Result<CorrelationMatrix> {
    let data = load_inputs(cfg)?;
    let dataset = plan_dataset(&data, cfg, cfg.seed)?;
    let links = matrix_links(&data, &dataset, cfg);
    let matrix = build_matrix(&data, &links, cfg, true)?;
    matrix.save(cfg.require("matrix_path")?)?;
    Ok(matrix)
}

/// train: full training run against a previously saved matrix; writes the
/// checkpoint (best validation epoch) and optionally the history CSV.
pub fn run_train(cfg: &RunConfig) -> Result<(TrainOutcome, CheckpointMeta)> {
    let data = load_inputs(cfg)?;
    let dataset = plan_dataset(&data, cfg, cfg.seed)?;
    let matrix = CorrelationMatrix::load(cfg.require("matrix_path")?)?;
    let tensor_config = cfg.tensor_config();
    let inputs = TrainInputs {
        dataset: &dataset,
        matrix: &matrix,
        text_seqs: &data.text_seqs,
        loc_seqs: &data.loc_seqs,
        tensor_config: &tensor_config,
    };
    let outcome = trainer::train(&inputs, &cfg.arch_config(), &cfg.train_config())?;
    let meta = CheckpointMeta {
        matrix_hash: matrix.content_hash(),
        tensor_config,
        seed: cfg.seed,
    };
    save_checkpoint(cfg.require("checkpoint_path")?, &outcome.model, &meta)?;
    if let Some(path) = &cfg.history_path {
        write_history_csv(path, &outcome.history)?;
    }
    Ok((outcome, meta))
}

/// Loads the checkpoint and matrix, refusing the pair if the matrix is
/// not the one the model was trained against.
pub fn load_model_and_matrix(cfg: &RunConfig) -> Result<(Model, CheckpointMeta, CorrelationMatrix)> {
    let checkpoint_path = cfg.require("checkpoint_path")?;
    let (model, meta) = load_checkpoint(checkpoint_path)?;
    let matrix_path = cfg.require("matrix_path")?;
    let matrix = CorrelationMatrix::load(matrix_path)?;
    let actual = matrix.content_hash();
    if actual != meta.matrix_hash {
        return Err(Error::HashMismatch {
            checkpoint: checkpoint_path.to_path_buf(),
            matrix: matrix_path.to_path_buf(),
            expected: meta.matrix_hash,
            actual,
        });
    }
    Ok((model, meta, matrix))
}

/// Scores every pair of one split in row order.
pub fn score_split(
    model: &Model,
    tensor_config: &TensorConfig,
    matrix: &CorrelationMatrix,
    data: &PipelineData,
    dataset: &PairDataset,
    split: Split,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for row in dataset.rows_in(split) {
        let (text, loc) = lookup_pair(&data.text_seqs, &data.loc_seqs, &row.text_user, &row.loc_user)?;
        let tensor = build_tensor(text, loc, matrix, tensor_config)?;
        scores.push(model.predict(&tensor)?);
        labels.push(u8::from(row.label));
    }
    Ok((scores, labels))
}

fn lookup_pair<'a>(
    text_seqs: &'a TextSequences,
    loc_seqs: &'a LocationSequences,
    text_user: &str,
    loc_user: &str,
) -> Result<(&'a UserSequence<TextRecord>, &'a UserSequence<LocationRecord>)> {
    let text = text_seqs
        .get(text_user)
        .ok_or_else(|| Error::Data(format!("unknown text user {text_user:?}")))?;
    let loc = loc_seqs
        .get(loc_user)
        .ok_or_else(|| Error::Data(format!("unknown location user {loc_user:?}")))?;
    Ok((text, loc))
}

/// eval: score the test split under the checkpoint's own seed and tensor
/// settings, and write the report if a path is configured.
pub fn run_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let (model, meta, matrix) = load_model_and_matrix(cfg)?;
    let data = load_inputs(cfg)?;
    let dataset = plan_dataset(&data, cfg, meta.seed)?;
    let (scores, labels) = score_split(
        &model,
        &meta.tensor_config,
        &matrix,
        &data,
        &dataset,
        Split::Test,
    )?;
    let report = evaluate(&scores, &labels, cfg.threshold)?;
    if let Some(path) = &cfg.report_path {
        report.save(path)?;
    }
    Ok(report)
}

/// predict: linkage probability for one explicit pair of accounts.
pub fn run_predict(cfg: &RunConfig, text_user: &str, loc_user: &str) -> Result<f64> {
    let (model, meta, matrix) = load_model_and_matrix(cfg)?;
    let (text_seqs, loc_seqs) = load_sequences(cfg)?;
    let (text, loc) = lookup_pair(&text_seqs, &loc_seqs, text_user, loc_user)?;
    let tensor = build_tensor(text, loc, &matrix, &meta.tensor_config)?;
    model.predict(&tensor)
}

/// explain: the strongest matrix cells behind one pair's tensor. Writes
/// the CSV when a path is configured; the caller prints otherwise.
pub fn run_explain(cfg: &RunConfig, text_user: &str, loc_user: &str) -> Result<Vec<ExplainRow>> {
    let matrix = CorrelationMatrix::load(cfg.require("matrix_path")?)?;
    let (text_seqs, loc_seqs) = load_sequences(cfg)?;
    let (text, loc) = lookup_pair(&text_seqs, &loc_seqs, text_user, loc_user)?;
    let rows = explain(text, loc, &matrix, &cfg.tensor_config(), cfg.explain_top)?;
    if let Some(path) = &cfg.explain_path {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        crate::tensor::write_explain_csv(file, &rows)?;
    }
    Ok(rows)
}

/// Shrinks the train split to the given positive links, trimming train
/// negatives to keep the configured ratio. Valid and test rows are kept
/// untouched.
fn reduce_dataset(
    full: &PairDataset,
    kept_links: &[(String, String)],
    neg_ratio: usize,
) -> PairDataset {
    let kept: std::collections::HashSet<(&str, &str)> = kept_links
        .iter()
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let max_negatives = kept_links.len() * neg_ratio;
    let mut negatives = 0;
    let mut rows = Vec::new();
    for row in &full.rows {
        let keep = match (row.split, row.label) {
            (Split::Train, true) => kept.contains(&(row.text_user.as_str(), row.loc_user.as_str())),
            (Split::Train, false) => {
                negatives += 1;
                negatives <= max_negatives
            }
            _ => true,
        };
        if keep {
            rows.push(row.clone());
        }
    }
    PairDataset { rows }
}

/// sweep: retrain at each training-link ratio, with and without the
/// external pairs when an external file is configured. Both the matrix
/// and the classifier see only the reduced links; validation and test
/// stay fixed. Reports test AUC per cell.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let data = load_inputs(cfg)?;
    let dataset = plan_dataset(&data, cfg, cfg.seed)?;
    let full_links = dataset.links_in(Split::Train);
    let variants: &[bool] = if cfg.external_path.is_some() {
        &[false, true]
    } else {
        &[false]
    };
    let tensor_config = cfg.tensor_config();
    let mut rows = Vec::new();
    for (idx, &ratio) in cfg.sweep_ratios.iter().enumerate() {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config(format!(
                "sweep ratio {ratio} outside [0, 1]"
            )));
        }
        let keep = ((ratio * full_links.len() as f64).round() as usize).min(full_links.len());
        let mut subset = full_links.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1000 + idx as u64));
        subset.shuffle(&mut rng);
        subset.truncate(keep);
        if subset.len() < 2 {
            log::warn!("ratio {ratio} leaves {} training links; skipping", subset.len());
            continue;
        }
        let reduced = reduce_dataset(&dataset, &subset, cfg.neg_ratio);
        for &external in variants {
            let matrix = build_matrix(&data, &subset, cfg, external)?;
            let inputs = TrainInputs {
                dataset: &reduced,
                matrix: &matrix,
                text_seqs: &data.text_seqs,
                loc_seqs: &data.loc_seqs,
                tensor_config: &tensor_config,
            };
            let outcome = trainer::train(&inputs, &cfg.arch_config(), &cfg.train_config())?;
            let (scores, labels) = score_split(
                &outcome.model,
                &tensor_config,
                &matrix,
                &data,
                &reduced,
                Split::Test,
            )?;
            let auc = roc_auc(&scores, &labels).ok_or_else(|| {
                Error::Data("test split holds a single class; AUC undefined".to_string())
            })?;
            log::info!("sweep ratio {ratio} external {external}: test AUC {auc:.4}");
            rows.push(SweepRow {
                ratio,
                external,
                auc,
            });
        }
    }
    if let Some(path) = &cfg.sweep_path {
        write_sweep_csv(path, &rows)?;
    }
    Ok(rows)
}

/// synth: write the synthetic dataset (and external pairs when both a
/// count and a path are configured).
pub fn run_synth(cfg: &RunConfig) -> Result<()> {
    crate::corpus::generate_synthetic(
        &cfg.synthetic_config(),
        cfg.require("text_path")?,
        cfg.require("loc_path")?,
        cfg.require("links_path")?,
    )?;
    if cfg.synth_external_pairs > 0 {
        crate::corpus::generate_external_pairs(
            cfg.synth_external_pairs,
            cfg.synth_vocab,
            cfg.synth_categories,
            cfg.synth_external_words,
            derive_seed(cfg.seed, 3),
            cfg.require("external_path")?,
        )?;
    }
    Ok(())
}
