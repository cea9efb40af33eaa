//! Word-location correlation: co-occurrence counting over linked user
//! pairs and the tf-idf style matrix
//!
//! ```text
//! M[w][l] = ln(1 + count(w,l)) * ln(1 + total(w) / (epsilon + count(w,l)))
//! ```
//!
//! where `total(w)` sums count(w, l') over all location categories.

use std::collections::HashMap;
use std::io::{BufRead, BufWriter, Read};
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::binio;
use crate::corpus::{LocationSequences, TextSequences};
use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Word index with reserved `<pad>` (0) and `<unk>` (1) entries. Words seen
/// fewer than `min_count` times map to `<unk>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Vocabulary { words, index }
    }

    /// Builds the vocabulary from every token in the corpus. Ordering is
    /// deterministic: descending frequency, ties broken lexicographically.
    pub fn build(text_seqs: &TextSequences, min_count: u64) -> Self {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for seq in text_seqs.values() {
            for record in seq.records() {
                for token in &record.tokens {
                    *freq.entry(token.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut kept: Vec<(&str, u64)> = freq
            .into_iter()
            .filter(|&(_, n)| n >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut words = Vec::with_capacity(kept.len() + 2);
        words.push(PAD_TOKEN.to_string());
        words.push(UNK_TOKEN.to_string());
        words.extend(kept.into_iter().map(|(w, _)| w.to_string()));
        Vocabulary::from_words(words)
    }

    /// Maps a token to its id, falling back to `<unk>`.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Location-category index, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    categories: Vec<String>,
    index: HashMap<String, u32>,
}

impl CategoryIndex {
    pub fn from_categories(categories: Vec<String>) -> Self {
        let index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i as u32))
            .collect();
        CategoryIndex { categories, index }
    }

    pub fn build(loc_seqs: &LocationSequences) -> Self {
        let mut categories: Vec<String> = loc_seqs
            .values()
            .flat_map(|s| s.records().iter().map(|r| r.category.clone()))
            .collect();
        categories.sort();
        categories.dedup();
        CategoryIndex::from_categories(categories)
    }

    pub fn id(&self, category: &str) -> Option<u32> {
        self.index.get(category).copied()
    }

    pub fn category(&self, id: u32) -> &str {
        &self.categories[id as usize]
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }
}

/// Sparse (word, category) co-occurrence counts plus per-word totals.
#[derive(Debug, Clone)]
pub struct CoocCounts {
    pub vocab: Vocabulary,
    pub categories: CategoryIndex,
    counts: HashMap<(u32, u32), u64>,
    word_totals: Vec<u64>,
}

impl CoocCounts {
    pub fn new(vocab: Vocabulary, categories: CategoryIndex) -> Self {
        let word_totals = vec![0; vocab.len()];
        CoocCounts {
            vocab,
            categories,
            counts: HashMap::new(),
            word_totals,
        }
    }

    pub fn add(&mut self, word: u32, category: u32, n: u64) {
        debug_assert!((word as usize) < self.vocab.len());
        debug_assert!((category as usize) < self.categories.len());
        *self.counts.entry((word, category)).or_insert(0) += n;
        self.word_totals[word as usize] += n;
    }

    pub fn count(&self, word: u32, category: u32) -> u64 {
        self.counts.get(&(word, category)).copied().unwrap_or(0)
    }

    pub fn word_total(&self, word: u32) -> u64 {
        self.word_totals[word as usize]
    }

    pub fn nonzero_entries(&self) -> usize {
        self.counts.len()
    }

    /// Adds another count table over the same indices. Counting is a
    /// commutative-monoid reduction, so merge order never matters.
    pub fn merge(&mut self, other: &CoocCounts) -> Result<()> {
        if other.vocab != self.vocab || other.categories != self.categories {
            return Err(Error::Data(
                "cannot merge co-occurrence counts over different vocabularies".to_string(),
            ));
        }
        for (&key, &n) in &other.counts {
            *self.counts.entry(key).or_insert(0) += n;
            self.word_totals[key.0 as usize] += n;
        }
        Ok(())
    }
}

/// Counts word-category co-occurrences within linked user pairs: every
/// (word occurrence, check-in) of a linked pair whose timestamps differ by
/// at most `window_secs` contributes one count. Pairs missing from either
/// sequence map are skipped.
pub fn count_cooccurrences(
    links: &[(String, String)],
    text_seqs: &TextSequences,
    loc_seqs: &LocationSequences,
    window_secs: i64,
    vocab: Vocabulary,
    categories: CategoryIndex,
) -> Result<CoocCounts> {
    if window_secs <= 0 {
        return Err(Error::Config("co-occurrence window must be positive".to_string()));
    }
    let mut counts = CoocCounts::new(vocab, categories);
    for (text_user, loc_user) in links {
        let (Some(text_seq), Some(loc_seq)) = (text_seqs.get(text_user), loc_seqs.get(loc_user))
        else {
            continue;
        };
        // Both sequences are time-sorted; slide a window over the check-ins.
        let checkins = loc_seq.records();
        let mut lo = 0usize;
        for doc in text_seq.records() {
            while lo < checkins.len() && checkins[lo].time < doc.time - window_secs {
                lo += 1;
            }
            let mut hi = lo;
            while hi < checkins.len() && checkins[hi].time <= doc.time + window_secs {
                hi += 1;
            }
            if lo == hi {
                continue;
            }
            for token in &doc.tokens {
                let w = counts.vocab.id(token);
                for checkin in &checkins[lo..hi] {
                    if let Some(c) = counts.categories.id(&checkin.category) {
                        counts.add(w, c, 1);
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// One external text-category pair, e.g. a review tagged with its venue
/// category.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPair {
    pub tokens: Vec<String>,
    pub category: String,
}

#[derive(Deserialize)]
struct ExternalLine {
    text: String,
    category: String,
}

/// Loads external pairs from JSONL (`{"text": ..., "category": ...}`),
/// applying the same preprocessing as platform text.
pub fn load_external_pairs(
    path: &Path,
    stopwords: &crate::corpus::Stopwords,
    max_len: usize,
) -> Result<Vec<ExternalPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExternalLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed external pair: {e}", path.display(), lineno + 1);
                continue;
            }
        };
        let tokens = crate::corpus::preprocess_text(&parsed.text, stopwords, max_len);
        if !tokens.is_empty() {
            pairs.push(ExternalPair {
                tokens,
                category: parsed.category,
            });
        }
    }
    Ok(pairs)
}

/// Turns external pairs into a count delta over the given indices. Pairs
/// whose category is absent from the index are skipped (returned count).
pub fn ingest_external_pairs(
    pairs: &[ExternalPair],
    vocab: &Vocabulary,
    categories: &CategoryIndex,
) -> (CoocCounts, usize) {
    let mut delta = CoocCounts::new(vocab.clone(), categories.clone());
    let mut skipped = 0;
    for pair in pairs {
        let Some(c) = categories.id(&pair.category) else {
            skipped += 1;
            continue;
        };
        for token in &pair.tokens {
            delta.add(vocab.id(token), c, 1);
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} external pairs with unmapped categories");
    }
    (delta, skipped)
}

/// Dense word x category matrix of correlation values.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub vocab: Vocabulary,
    pub categories: CategoryIndex,
    pub epsilon: f64,
    values: Vec<f64>,
}

const MATRIX_MAGIC: &[u8; 8] = b"GLCORRMX";
const MATRIX_VERSION: u32 = 1;

impl CorrelationMatrix {
    /// Evaluates the correlation formula on every (word, category) cell.
    /// Cells with zero count stay exactly zero because ln(1 + 0) = 0.
    pub fn build(counts: &CoocCounts, epsilon: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::Config("epsilon must be positive and finite".to_string()));
        }
        let n_words = counts.vocab.len();
        let n_cats = counts.categories.len();
        let mut values = vec![0.0; n_words * n_cats];
        for (&(w, c), &n) in &counts.counts {
            if n == 0 {
                continue;
            }
            let total = counts.word_total(w) as f64;
            let n = n as f64;
            values[w as usize * n_cats + c as usize] =
                (1.0 + n).ln() * (1.0 + total / (epsilon + n)).ln();
        }
        Ok(CorrelationMatrix {
            vocab: counts.vocab.clone(),
            categories: counts.categories.clone(),
            epsilon,
            values,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        vocab: Vocabulary,
        categories: CategoryIndex,
        epsilon: f64,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(values.len(), vocab.len() * categories.len());
        CorrelationMatrix {
            vocab,
            categories,
            epsilon,
            values,
        }
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    #[inline]
    pub fn value(&self, word: u32, category: u32) -> f64 {
        self.values[word as usize * self.categories.len() + category as usize]
    }

    pub fn value_by_name(&self, word: &str, category: &str) -> f64 {
        match self.categories.id(category) {
            Some(c) => self.value(self.vocab.id(word), c),
            None => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MATRIX_MAGIC);
        binio::write_u32(&mut out, MATRIX_VERSION).unwrap();
        binio::write_f64(&mut out, self.epsilon).unwrap();
        binio::write_u32(&mut out, self.vocab.len() as u32).unwrap();
        binio::write_u32(&mut out, self.categories.len() as u32).unwrap();
        for word in self.vocab.words() {
            binio::write_str(&mut out, word).unwrap();
        }
        for cat in self.categories.categories() {
            binio::write_str(&mut out, cat).unwrap();
        }
        for v in &self.values {
            binio::write_f64(&mut out, *v).unwrap();
        }
        out
    }

    /// Hex SHA-256 of the serialized matrix; checkpoints embed this so a
    /// model is never evaluated against a different matrix.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.serialize());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.serialize()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file)).map_err(|m| Error::schema(path, m))
    }

    fn read<R: Read>(inner: R) -> std::result::Result<Self, String> {
        let mut r = binio::Reader::new(inner);
        r.magic(MATRIX_MAGIC)?;
        let version = r.u32()?;
        if version != MATRIX_VERSION {
            return Err(format!("unsupported matrix format version {version}"));
        }
        let epsilon = r.f64()?;
        let n_words = r.u32()? as usize;
        let n_cats = r.u32()? as usize;
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(r.str()?);
        }
        let mut cats = Vec::with_capacity(n_cats);
        for _ in 0..n_cats {
            cats.push(r.str()?);
        }
        let mut values = Vec::with_capacity(n_words * n_cats);
        for _ in 0..n_words * n_cats {
            values.push(r.f64()?);
        }
        r.expect_eof()?;
        Ok(CorrelationMatrix {
            vocab: Vocabulary::from_words(words),
            categories: CategoryIndex::from_categories(cats),
            epsilon,
            values,
        })
    }

    /// CSV export of the nonzero entries (`word,category,value`) for
    /// inspection.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut w = csv::Writer::from_writer(&mut out);
        let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        w.write_record(["word", "category", "value"]).map_err(io_err)?;
        for wi in 0..self.vocab.len() {
            for ci in 0..self.categories.len() {
                let v = self.value(wi as u32, ci as u32);
                if v != 0.0 {
                    w.write_record([
                        self.vocab.word(wi as u32),
                        self.categories.category(ci as u32),
                        &format!("{v}"),
                    ])
                    .map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
