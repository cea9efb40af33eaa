//! Per-pair interactive tensor: for candidate pair (text user u, location
//! user u') the cell (i, j, k) holds the correlation of the k-th word of
//! document i with check-in j on one channel, and the transformed time gap
//! |t_i - t_j| on the other.

use serde::{Deserialize, Serialize};

use crate::corpus::{LocationRecord, TextRecord, UserSequence};
use crate::correlation::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::network::FeatureMap;

/// Transform applied to the raw time gap in seconds before it enters the
/// time channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeTransform {
    /// ln(1 + gap / 86400); keeps the time channel on the same order of
    /// magnitude as the correlation channel.
    LogDays,
    /// Raw seconds, reproducing the tensor definition literally.
    Identity,
}

impl TimeTransform {
    pub fn apply(self, delta_secs: f64) -> f64 {
        debug_assert!(delta_secs >= 0.0);
        match self {
            TimeTransform::LogDays => (delta_secs / 86400.0).ln_1p(),
            TimeTransform::Identity => delta_secs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorConfig {
    /// Word positions per document (documents are truncated or padded to
    /// this length).
    pub words_per_doc: usize,
    /// Documents kept per pair; the most recent ones win.
    pub max_docs: usize,
    /// Check-ins kept per pair; the most recent ones win.
    pub max_checkins: usize,
    pub time_transform: TimeTransform,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            words_per_doc: 50,
            max_docs: 32,
            max_checkins: 32,
            time_transform: TimeTransform::LogDays,
        }
    }
}

impl TensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.words_per_doc < 1 || self.max_docs < 1 || self.max_checkins < 1 {
            return Err(Error::Config(
                "tensor dimensions must all be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// 4-D interaction tensor with fixed shape
/// (max_docs, max_checkins, words_per_doc, 2). Channel 0 is the word-
/// location correlation, channel 1 the transformed time gap; rows, columns
/// and word positions beyond the real records are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractiveTensor {
    n_docs: usize,
    n_checkins: usize,
    words_per_doc: usize,
    data: Vec<f64>,
}

impl InteractiveTensor {
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n_docs, self.n_checkins, self.words_per_doc, 2)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize, channel: usize) -> usize {
        ((i * self.n_checkins + j) * self.words_per_doc + k) * 2 + channel
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, channel: usize) -> f64 {
        self.data[self.idx(i, j, k, channel)]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Channel-first copy for the convolutional network: shape
    /// (2, max_docs, max_checkins, words_per_doc).
    pub fn to_feature_map(&self) -> FeatureMap {
        let mut map = FeatureMap::zeros(2, self.n_docs, self.n_checkins, self.words_per_doc);
        for i in 0..self.n_docs {
            for j in 0..self.n_checkins {
                for k in 0..self.words_per_doc {
                    for c in 0..2 {
                        map.set(c, i, j, k, self.get(i, j, k, c));
                    }
                }
            }
        }
        map
    }
}

/// Builds the interactive tensor for one candidate pair.
///
/// Both sequences are truncated to their most recent `max_docs` /
/// `max_checkins` records; documents are truncated or padded to
/// `words_per_doc` word positions. Padded word positions carry zero on both
/// channels. Both sequences empty is an error; a single empty side yields
/// an all-zero tensor with a warning.
pub fn build_tensor(
    text_seq: &UserSequence<TextRecord>,
    loc_seq: &UserSequence<LocationRecord>,
    matrix: &CorrelationMatrix,
    cfg: &TensorConfig,
) -> Result<InteractiveTensor> {
    cfg.validate()?;
    if text_seq.is_empty() && loc_seq.is_empty() {
        return Err(Error::Data(format!(
            "cannot build a tensor for pair ({}, {}): both sequences are empty",
            text_seq.user_id(),
            loc_seq.user_id()
        )));
    }
    if text_seq.is_empty() || loc_seq.is_empty() {
        log::warn!(
            "pair ({}, {}): one sequence is empty, tensor is all-zero",
            text_seq.user_id(),
            loc_seq.user_id()
        );
    }

    let docs = text_seq.most_recent(cfg.max_docs);
    let checkins = loc_seq.most_recent(cfg.max_checkins);

    let mut tensor = InteractiveTensor {
        n_docs: cfg.max_docs,
        n_checkins: cfg.max_checkins,
        words_per_doc: cfg.words_per_doc,
        data: vec![0.0; cfg.max_docs * cfg.max_checkins * cfg.words_per_doc * 2],
    };

    // Word ids resolved once per document, not once per cell.
    let doc_words: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| {
            d.tokens
                .iter()
                .take(cfg.words_per_doc)
                .map(|t| matrix.vocab.id(t))
                .collect()
        })
        .collect();
    let checkin_cats: Vec<Option<u32>> =
        checkins.iter().map(|c| matrix.categories.id(&c.category)).collect();

    for (i, doc) in docs.iter().enumerate() {
        let words = &doc_words[i];
        for (j, checkin) in checkins.iter().enumerate() {
            let gap = cfg
                .time_transform
                .apply((doc.time - checkin.time).unsigned_abs() as f64);
            let cat = checkin_cats[j];
            for (k, &w) in words.iter().enumerate() {
                let corr = match cat {
                    Some(c) => matrix.value(w, c),
                    None => 0.0,
                };
                let base = tensor.idx(i, j, k, 0);
                tensor.data[base] = corr;
                tensor.data[base + 1] = gap;
            }
        }
    }
    Ok(tensor)
}

/// One row of the explain export: a high-correlation tensor cell with its
/// provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainRow {
    pub doc_idx: usize,
    pub checkin_idx: usize,
    pub word: String,
    pub category: String,
    pub correlation: f64,
    pub time_gap_seconds: i64,
}

/// Returns the `top_n` cells with the highest correlation values for one
/// pair, the evidence a linkage decision rests on. Zero-correlation cells
/// are never reported, so an all-zero pair yields an empty list.
pub fn explain(
    text_seq: &UserSequence<TextRecord>,
    loc_seq: &UserSequence<LocationRecord>,
    matrix: &CorrelationMatrix,
    cfg: &TensorConfig,
    top_n: usize,
) -> Result<Vec<ExplainRow>> {
    cfg.validate()?;
    if text_seq.is_empty() && loc_seq.is_empty() {
        return Err(Error::Data("cannot explain a pair with two empty sequences".to_string()));
    }
    let docs = text_seq.most_recent(cfg.max_docs);
    let checkins = loc_seq.most_recent(cfg.max_checkins);

    let mut rows = Vec::new();
    for (i, doc) in docs.iter().enumerate() {
        for (j, checkin) in checkins.iter().enumerate() {
            let Some(cat) = matrix.categories.id(&checkin.category) else {
                continue;
            };
            for token in doc.tokens.iter().take(cfg.words_per_doc) {
                let corr = matrix.value(matrix.vocab.id(token), cat);
                if corr > 0.0 {
                    rows.push(ExplainRow {
                        doc_idx: i,
                        checkin_idx: j,
                        word: token.clone(),
                        category: checkin.category.clone(),
                        correlation: corr,
                        time_gap_seconds: (doc.time - checkin.time).abs(),
                    });
                }
            }
        }
    }
    // Highest correlation first; ties resolved by cell position so the
    // output is stable across runs.
    rows.sort_by(|a, b| {
        b.correlation
            .partial_cmp(&a.correlation)
            .unwrap()
            .then_with(|| (a.doc_idx, a.checkin_idx, a.word.as_str()).cmp(&(b.doc_idx, b.checkin_idx, b.word.as_str())))
    });
    rows.truncate(top_n);
    Ok(rows)
}

/// Writes explain rows as CSV with the documented header.
pub fn write_explain_csv<W: std::io::Write>(out: W, rows: &[ExplainRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| Error::Data(format!("cannot write explain CSV: {e}"));
    w.write_record([
        "doc_idx",
        "checkin_idx",
        "word",
        "category",
        "correlation",
        "time_gap_seconds",
    ])
    .map_err(io_err)?;
    for row in rows {
        w.write_record([
            row.doc_idx.to_string(),
            row.checkin_idx.to_string(),
            row.word.clone(),
            row.category.clone(),
            format!("{}", row.correlation),
            row.time_gap_seconds.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("cannot flush explain CSV: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlation::{CategoryIndex, CoocCounts, CorrelationMatrix, Vocabulary};
    use crate::corpus::{LocationRecord, TextRecord};

    fn matrix_with(value: f64) -> CorrelationMatrix {
        // Single real word "pizza" against single category "food"; the
        // requested cell value is planted via a crafted count.
        let vocab = Vocabulary::from_words(
            ["<pad>", "<unk>", "pizza"].iter().map(|s| s.to_string()).collect(),
        );
        let cats = CategoryIndex::from_categories(vec!["food".to_string()]);
        let mut values = vec![0.0; vocab.len() * cats.len()];
        values[2] = value; // row "pizza", column "food"
        CorrelationMatrix::from_parts(vocab, cats, 1.0, values)
    }

    fn one_doc(user: &str, time: i64, tokens: &[&str]) -> UserSequence<TextRecord> {
        UserSequence::new(
            user,
            vec![TextRecord {
                user_id: user.to_string(),
                time,
                tokens: tokens.iter().map(|t| t.to_string()).collect(),
            }],
        )
        .unwrap()
    }

    fn one_checkin(user: &str, time: i64, category: &str) -> UserSequence<LocationRecord> {
        UserSequence::new(
            user,
            vec![LocationRecord {
                user_id: user.to_string(),
                time,
                location_id: "v".to_string(),
                category: category.to_string(),
            }],
        )
        .unwrap()
    }

    fn identity_cfg(k: usize, n: usize) -> TensorConfig {
        TensorConfig {
            words_per_doc: k,
            max_docs: n,
            max_checkins: n,
            time_transform: TimeTransform::Identity,
        }
    }

    #[test]
    fn cell_pairs_correlation_with_time_gap() {
        let m = matrix_with(0.5);
        let text = one_doc("t", 1000, &["pizza"]);
        let loc = one_checkin("l", 400, "food");
        let tensor = build_tensor(&text, &loc, &m, &identity_cfg(4, 2)).unwrap();
        assert_eq!(tensor.get(0, 0, 0, 0), 0.5);
        assert_eq!(tensor.get(0, 0, 0, 1), 600.0);
    }

    #[test]
    fn padded_word_positions_are_zero_on_both_channels() {
        let m = matrix_with(0.5);
        let text = one_doc("t", 1000, &["pizza"]);
        let loc = one_checkin("l", 400, "food");
        let tensor = build_tensor(&text, &loc, &m, &identity_cfg(4, 2)).unwrap();
        for k in 1..4 {
            assert_eq!(tensor.get(0, 0, k, 0), 0.0);
            assert_eq!(tensor.get(0, 0, k, 1), 0.0);
        }
        // Padded doc row and check-in column too.
        for k in 0..4 {
            assert_eq!(tensor.get(1, 0, k, 1), 0.0);
            assert_eq!(tensor.get(0, 1, k, 0), 0.0);
        }
    }

    #[test]
    fn identical_timestamps_zero_the_time_channel() {
        let m = matrix_with(0.5);
        let text = one_doc("t", 777, &["pizza"]);
        let loc = one_checkin("l", 777, "food");
        let tensor = build_tensor(&text, &loc, &m, &identity_cfg(2, 1)).unwrap();
        assert_eq!(tensor.get(0, 0, 0, 1), 0.0);
        assert_eq!(tensor.get(0, 0, 0, 0), 0.5);
    }

    #[test]
    fn time_transform_values() {
        assert_eq!(TimeTransform::LogDays.apply(0.0), 0.0);
        assert!((TimeTransform::LogDays.apply(86400.0) - 2.0f64.ln()).abs() < 1e-12);
        assert_eq!(TimeTransform::Identity.apply(600.0), 600.0);
    }

    #[test]
    fn both_empty_errors_one_empty_zeros() {
        let m = matrix_with(0.5);
        let empty_text = UserSequence::<TextRecord>::new("t", vec![]).unwrap();
        let empty_loc = UserSequence::<LocationRecord>::new("l", vec![]).unwrap();
        assert!(build_tensor(&empty_text, &empty_loc, &m, &identity_cfg(2, 2)).is_err());

        let loc = one_checkin("l", 400, "food");
        let tensor = build_tensor(&empty_text, &loc, &m, &identity_cfg(2, 2)).unwrap();
        assert!(tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncation_keeps_most_recent_records() {
        let m = matrix_with(0.5);
        let text = UserSequence::new(
            "t",
            (0..5)
                .map(|i| TextRecord {
                    user_id: "t".to_string(),
                    time: 100 * i,
                    tokens: vec!["pizza".to_string()],
                })
                .collect(),
        )
        .unwrap();
        let loc = one_checkin("l", 400, "food");
        let cfg = TensorConfig {
            max_docs: 2,
            ..identity_cfg(1, 2)
        };
        let tensor = build_tensor(&text, &loc, &m, &cfg).unwrap();
        // Kept docs are t=300 and t=400 (most recent 2, chronological).
        assert_eq!(tensor.get(0, 0, 0, 1), 100.0);
        assert_eq!(tensor.get(1, 0, 0, 1), 0.0);
        assert_eq!(tensor.get(1, 0, 0, 0), 0.5);
    }

    #[test]
    fn checkin_permutation_permutes_columns() {
        // Two check-ins with distinct categories; swapping them swaps the
        // tensor's j-columns (before truncation effects).
        let vocab = Vocabulary::from_words(
            ["<pad>", "<unk>", "pizza"].iter().map(|s| s.to_string()).collect(),
        );
        let cats = CategoryIndex::from_categories(vec!["food".to_string(), "park".to_string()]);
        let mut counts = CoocCounts::new(vocab.clone(), cats.clone());
        counts.add(2, 0, 1);
        counts.add(2, 1, 3);
        let m = CorrelationMatrix::build(&counts, 1.0).unwrap();

        let text = one_doc("t", 1000, &["pizza"]);
        let mk_loc = |order: &[(i64, &str)]| {
            UserSequence::new(
                "l",
                order
                    .iter()
                    .map(|(t, c)| LocationRecord {
                        user_id: "l".to_string(),
                        time: *t,
                        location_id: "v".to_string(),
                        category: c.to_string(),
                    })
                    .collect::<Vec<_>>(),
            )
            .unwrap()
        };
        // Same timestamps, different insertion order: stable sort preserves
        // insertion order, giving permuted columns.
        let a = mk_loc(&[(400, "food"), (400, "park")]);
        let b = mk_loc(&[(400, "park"), (400, "food")]);
        let cfg = identity_cfg(1, 2);
        let ta = build_tensor(&text, &a, &m, &cfg).unwrap();
        let tb = build_tensor(&text, &b, &m, &cfg).unwrap();
        for c in 0..2 {
            assert_eq!(ta.get(0, 0, 0, c), tb.get(0, 1, 0, c));
            assert_eq!(ta.get(0, 1, 0, c), tb.get(0, 0, 0, c));
        }
    }

    #[test]
    fn zero_matrix_reduces_to_time_geometry() {
        let vocab = Vocabulary::from_words(
            ["<pad>", "<unk>", "pizza"].iter().map(|s| s.to_string()).collect(),
        );
        let cats = CategoryIndex::from_categories(vec!["food".to_string()]);
        let counts = CoocCounts::new(vocab, cats);
        let m = CorrelationMatrix::build(&counts, 1.0).unwrap();
        let text = one_doc("t", 1000, &["pizza"]);
        let loc = one_checkin("l", 400, "food");
        let tensor = build_tensor(&text, &loc, &m, &identity_cfg(2, 2)).unwrap();
        assert_eq!(tensor.get(0, 0, 0, 0), 0.0);
        assert_eq!(tensor.get(0, 0, 0, 1), 600.0);
    }

    #[test]
    fn explain_ranks_by_correlation() {
        let vocab = Vocabulary::from_words(
            ["<pad>", "<unk>", "pizza", "trail"].iter().map(|s| s.to_string()).collect(),
        );
        let cats = CategoryIndex::from_categories(vec!["food".to_string(), "park".to_string()]);
        let mut counts = CoocCounts::new(vocab.clone(), cats.clone());
        counts.add(2, 0, 10); // pizza-food strong
        counts.add(3, 1, 1); // trail-park weak
        let m = CorrelationMatrix::build(&counts, 1.0).unwrap();

        let text = one_doc("t", 1000, &["pizza", "trail"]);
        let loc = UserSequence::new(
            "l",
            vec![
                LocationRecord {
                    user_id: "l".to_string(),
                    time: 900,
                    location_id: "v1".to_string(),
                    category: "food".to_string(),
                },
                LocationRecord {
                    user_id: "l".to_string(),
                    time: 950,
                    location_id: "v2".to_string(),
                    category: "park".to_string(),
                },
            ],
        )
        .unwrap();
        let rows = explain(&text, &loc, &m, &identity_cfg(4, 4), 10).unwrap();
        assert_eq!(rows[0].word, "pizza");
        assert_eq!(rows[0].category, "food");
        assert_eq!(rows[0].time_gap_seconds, 100);
        assert!(rows[0].correlation > rows.last().unwrap().correlation);
        // top_n larger than the nonzero cell count: everything comes back.
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn explain_empty_for_zero_matrix() {
        let vocab = Vocabulary::from_words(
            ["<pad>", "<unk>", "pizza"].iter().map(|s| s.to_string()).collect(),
        );
        let cats = CategoryIndex::from_categories(vec!["food".to_string()]);
        let m = CorrelationMatrix::build(&CoocCounts::new(vocab, cats), 1.0).unwrap();
        let text = one_doc("t", 1000, &["pizza"]);
        let loc = one_checkin("l", 400, "food");
        let rows = explain(&text, &loc, &m, &identity_cfg(2, 2), 5).unwrap();
        assert!(rows.is_empty());
    }
}
