//! Python bindings for the linkage pipeline. Thin wrappers only: every
//! operation delegates to geolink-core, where the logic is tested.
//!
//! Pipeline functions take a run-config file path plus optional seed and
//! thread-count overrides, mirroring the CLI contract.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use geolink_core::config::RunConfig;
use geolink_core::corpus::{self, Stopwords};
use geolink_core::correlation::CorrelationMatrix;
use geolink_core::{metrics, pipeline, Error};

/// Bad inputs and malformed files raise ValueError, filesystem trouble
/// raises OSError, and training-time failures raise RuntimeError.
fn to_py(err: Error) -> PyErr {
    match &err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::Schema { .. } | Error::Config(_) | Error::Data(_) | Error::Shape { .. } => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn load_cfg(config: &str, seed: Option<u64>, threads: Option<usize>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::from_file(Path::new(config)).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

/// Dense word x category correlation matrix, loaded from its binary file.
#[pyclass(frozen)]
struct Matrix {
    inner: CorrelationMatrix,
}

#[pymethods]
impl Matrix {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = CorrelationMatrix::load(Path::new(path)).map_err(to_py)?;
        Ok(Matrix { inner })
    }

    /// Correlation value for a (word, category) pair by name. Unknown words
    /// fall back to the unknown-token row; unknown categories give 0.
    fn value(&self, word: &str, category: &str) -> f64 {
        self.inner.value_by_name(word, category)
    }

    fn words(&self) -> Vec<String> {
        self.inner.vocab.words().to_vec()
    }

    fn categories(&self) -> Vec<String> {
        self.inner.categories.categories().to_vec()
    }

    fn shape(&self) -> (usize, usize) {
        (self.inner.n_words(), self.inner.n_categories())
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    fn __repr__(&self) -> String {
        format!(
            "Matrix({} words x {} categories)",
            self.inner.n_words(),
            self.inner.n_categories()
        )
    }
}

/// Cleans one raw document: lowercase, drop URLs, strip punctuation,
/// remove stopwords, truncate to `max_len` surviving tokens.
#[pyfunction]
#[pyo3(signature = (raw, stopwords = None, max_len = 50))]
fn preprocess_text(raw: &str, stopwords: Option<Vec<String>>, max_len: usize) -> PyResult<Vec<String>> {
    if max_len == 0 {
        return Err(PyValueError::new_err("max_len must be at least 1"));
    }
    let stop = match stopwords {
        Some(words) => Stopwords::from_words(words),
        None => Stopwords::empty(),
    };
    Ok(corpus::preprocess_text(raw, &stop, max_len))
}

/// Area under the ROC curve via average ranks; ties share their rank.
/// Returns None when the labels hold a single class.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels must have equal length"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(PyValueError::new_err("labels must be 0 or 1"));
    }
    Ok(metrics::roc_auc(&scores, &labels))
}

/// Generates the synthetic two-platform corpus described by the config.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn synth(config: &str, seed: Option<u64>) -> PyResult<()> {
    let cfg = load_cfg(config, seed, None)?;
    pipeline::run_synth(&cfg).map_err(to_py)
}

/// Builds the correlation matrix, writes it to `matrix_path`, and returns it.
#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn corr(config: &str, seed: Option<u64>) -> PyResult<Matrix> {
    let cfg = load_cfg(config, seed, None)?;
    let inner = pipeline::run_corr(&cfg).map_err(to_py)?;
    Ok(Matrix { inner })
}

/// Trains the classifier and writes the checkpoint. Returns the epoch
/// history as (epoch, train_loss, valid_auc) tuples.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = None))]
fn train(config: &str, seed: Option<u64>, threads: Option<usize>) -> PyResult<Vec<(usize, f64, f64)>> {
    let cfg = load_cfg(config, seed, threads)?;
    let (outcome, _) = pipeline::run_train(&cfg).map_err(to_py)?;
    Ok(outcome
        .history
        .iter()
        .map(|e| (e.epoch, e.train_loss, e.valid_auc))
        .collect())
}

/// Scores the test split with the saved checkpoint. Returns a dict with
/// keys f1, accuracy, auc (None for single-class labels), tp, fp, tn, fn, n.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = None))]
fn evaluate<'py>(
    py: Python<'py>,
    config: &str,
    seed: Option<u64>,
    threads: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load_cfg(config, seed, threads)?;
    let report = pipeline::run_eval(&cfg).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("f1", report.f1)?;
    d.set_item("accuracy", report.accuracy)?;
    d.set_item("auc", report.auc)?;
    d.set_item("tp", report.tp)?;
    d.set_item("fp", report.fp)?;
    d.set_item("tn", report.tn)?;
    d.set_item("fn", report.r#fn)?;
    d.set_item("n", report.n)?;
    Ok(d)
}

/// Linkage probability for one (text user, location user) pair.
#[pyfunction]
#[pyo3(signature = (config, text_user, loc_user, seed = None))]
fn predict(config: &str, text_user: &str, loc_user: &str, seed: Option<u64>) -> PyResult<f64> {
    let cfg = load_cfg(config, seed, None)?;
    pipeline::run_predict(&cfg, text_user, loc_user).map_err(to_py)
}

/// Highest-correlation evidence cells for one pair, as a list of dicts with
/// keys doc_idx, checkin_idx, word, category, correlation, time_gap_seconds.
#[pyfunction]
#[pyo3(signature = (config, text_user, loc_user, seed = None))]
fn explain<'py>(
    py: Python<'py>,
    config: &str,
    text_user: &str,
    loc_user: &str,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = load_cfg(config, seed, None)?;
    let rows = pipeline::run_explain(&cfg, text_user, loc_user).map_err(to_py)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let d = PyDict::new(py);
        d.set_item("doc_idx", row.doc_idx)?;
        d.set_item("checkin_idx", row.checkin_idx)?;
        d.set_item("word", row.word)?;
        d.set_item("category", row.category)?;
        d.set_item("correlation", row.correlation)?;
        d.set_item("time_gap_seconds", row.time_gap_seconds)?;
        out.push(d);
    }
    Ok(out)
}

/// Retrains across training-link ratios, with and without the external
/// corpus when one is configured. Returns (ratio, external, test_auc) tuples.
#[pyfunction]
#[pyo3(signature = (config, seed = None, threads = None))]
fn sweep(config: &str, seed: Option<u64>, threads: Option<usize>) -> PyResult<Vec<(f64, bool, f64)>> {
    let cfg = load_cfg(config, seed, threads)?;
    let rows = pipeline::run_sweep(&cfg).map_err(to_py)?;
    Ok(rows.iter().map(|r| (r.ratio, r.external, r.auc)).collect())
}

#[pymodule]
fn geolink_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Matrix>()?;
    m.add_function(wrap_pyfunction!(preprocess_text, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(corr, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
