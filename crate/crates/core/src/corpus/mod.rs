//! Data model and ingestion for the two platforms: timestamped text posts
//! on one side, geo-location check-ins on the other.

mod load;
mod preprocess;
mod sampling;
mod synthetic;

pub use load::{load_links, load_location_platform, load_text_platform, LoadReport};
pub use preprocess::{preprocess_text, Stopwords};
pub use sampling::{sample_negatives, split, NegativeSample};
pub use synthetic::{
    category_word_ranges, generate_external_pairs, generate_synthetic, SyntheticConfig,
};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One text post after preprocessing. Records with an empty token list are
/// dropped at load time.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRecord {
    pub user_id: String,
    pub time: i64,
    pub tokens: Vec<String>,
}

/// One geo-location check-in. `category` is the location key the
/// correlation matrix is built over; `location_id` identifies the concrete
/// venue and is kept for inspection only.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationRecord {
    pub user_id: String,
    pub time: i64,
    pub location_id: String,
    pub category: String,
}

pub trait Record {
    fn user_id(&self) -> &str;
    fn time(&self) -> i64;
}

impl Record for TextRecord {
    fn user_id(&self) -> &str {
        &self.user_id
    }
    fn time(&self) -> i64 {
        self.time
    }
}

impl Record for LocationRecord {
    fn user_id(&self) -> &str {
        &self.user_id
    }
    fn time(&self) -> i64 {
        self.time
    }
}

/// Chronologically ordered records of a single account on one platform.
#[derive(Debug, Clone)]
pub struct UserSequence<R> {
    user_id: String,
    records: Vec<R>,
}

impl<R: Record> UserSequence<R> {
    /// Builds a sequence, sorting records by time (stable, so equal
    /// timestamps keep input order). All records must carry `user_id`.
    pub fn new(user_id: impl Into<String>, mut records: Vec<R>) -> Result<Self> {
        let user_id = user_id.into();
        if let Some(r) = records.iter().find(|r| r.user_id() != user_id) {
            return Err(Error::Data(format!(
                "record for user {:?} added to sequence of user {:?}",
                r.user_id(),
                user_id
            )));
        }
        records.sort_by_key(|r| r.time());
        Ok(UserSequence { user_id, records })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn records(&self) -> &[R] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The `n` most recent records, in chronological order.
    pub fn most_recent(&self, n: usize) -> &[R] {
        let start = self.records.len().saturating_sub(n);
        &self.records[start..]
    }

    pub(crate) fn retain(&mut self, f: impl FnMut(&R) -> bool) {
        self.records.retain(f);
    }
}

/// User id -> sequence maps. BTreeMap keeps iteration order deterministic,
/// which fixed-seed reproducibility depends on.
pub type TextSequences = BTreeMap<String, UserSequence<TextRecord>>;
pub type LocationSequences = BTreeMap<String, UserSequence<LocationRecord>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// One labeled candidate pair: a text-platform account and a
/// location-platform account, with label 1 iff they belong to the same
/// person.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRow {
    pub text_user: String,
    pub loc_user: String,
    pub label: bool,
    pub split: Split,
}

/// Labeled candidate pairs with their split assignment.
#[derive(Debug, Clone, Default)]
pub struct PairDataset {
    pub rows: Vec<PairRow>,
}

impl PairDataset {
    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &PairRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split, label: bool) -> usize {
        self.rows_in(split).filter(|r| r.label == label).count()
    }

    /// Positive (text_user, loc_user) links in a given split.
    pub fn links_in(&self, split: Split) -> Vec<(String, String)> {
        self.rows_in(split)
            .filter(|r| r.label)
            .map(|r| (r.text_user.clone(), r.loc_user.clone()))
            .collect()
    }

    /// Checks the structural invariants: no duplicate (text, loc) pair and
    /// per-split label balance.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for row in &self.rows {
            if !seen.insert((row.text_user.as_str(), row.loc_user.as_str())) {
                return Err(Error::Data(format!(
                    "duplicate pair ({}, {})",
                    row.text_user, row.loc_user
                )));
            }
        }
        for split in [Split::Train, Split::Valid, Split::Test] {
            let pos = self.count(split, true);
            let neg = self.count(split, false);
            if pos != neg {
                return Err(Error::Data(format!(
                    "{} split is unbalanced: {} positive vs {} negative",
                    split.as_str(),
                    pos,
                    neg
                )));
            }
        }
        Ok(())
    }
}

/// Drops linked users' records that carry the exact same timestamp on both
/// platforms. Off by default; mirrors the cleanup applied to datasets where
/// both "platforms" are one service.
pub fn drop_same_timestamp(
    text_seqs: &mut TextSequences,
    loc_seqs: &mut LocationSequences,
    links: &[(String, String)],
) -> usize {
    use std::collections::HashSet;
    let mut dropped = 0;
    for (text_user, loc_user) in links {
        let times_text: HashSet<i64> = match text_seqs.get(text_user) {
            Some(seq) => seq.records().iter().map(|r| r.time).collect(),
            None => continue,
        };
        let times_loc: HashSet<i64> = match loc_seqs.get(loc_user) {
            Some(seq) => seq.records().iter().map(|r| r.time).collect(),
            None => continue,
        };
        let shared: HashSet<i64> = times_text.intersection(&times_loc).copied().collect();
        if shared.is_empty() {
            continue;
        }
        if let Some(seq) = text_seqs.get_mut(text_user) {
            let before = seq.len();
            seq.retain(|r| !shared.contains(&r.time));
            dropped += before - seq.len();
        }
        if let Some(seq) = loc_seqs.get_mut(loc_user) {
            let before = seq.len();
            seq.retain(|r| !shared.contains(&r.time));
            dropped += before - seq.len();
        }
    }
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(user: &str, time: i64) -> TextRecord {
        TextRecord {
            user_id: user.to_string(),
            time,
            tokens: vec!["x".to_string()],
        }
    }

    #[test]
    fn sequence_sorts_by_time() {
        let seq =
            UserSequence::new("a", vec![text("a", 30), text("a", 10), text("a", 20)]).unwrap();
        let times: Vec<i64> = seq.records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![10, 20, 30]);
    }

    #[test]
    fn sequence_rejects_foreign_user() {
        assert!(UserSequence::new("a", vec![text("b", 0)]).is_err());
    }

    #[test]
    fn most_recent_keeps_chronological_tail() {
        let seq = UserSequence::new(
            "a",
            vec![text("a", 1), text("a", 2), text("a", 3), text("a", 4)],
        )
        .unwrap();
        let tail: Vec<i64> = seq.most_recent(2).iter().map(|r| r.time).collect();
        assert_eq!(tail, vec![3, 4]);
        assert_eq!(seq.most_recent(10).len(), 4);
    }

    #[test]
    fn validate_catches_duplicates_and_imbalance() {
        let row = PairRow {
            text_user: "t".into(),
            loc_user: "l".into(),
            label: true,
            split: Split::Train,
        };
        let ds = PairDataset {
            rows: vec![row.clone(), row.clone()],
        };
        assert!(ds.validate().is_err());

        let ds = PairDataset {
            rows: vec![row.clone()],
        };
        assert!(ds.validate().is_err(), "1 pos / 0 neg in train");
    }

    #[test]
    fn same_timestamp_filter_drops_both_sides() {
        let mut text_seqs = TextSequences::new();
        text_seqs.insert(
            "t".into(),
            UserSequence::new("t", vec![text("t", 100), text("t", 200)]).unwrap(),
        );
        let mut loc_seqs = LocationSequences::new();
        loc_seqs.insert(
            "l".into(),
            UserSequence::new(
                "l",
                vec![LocationRecord {
                    user_id: "l".into(),
                    time: 100,
                    location_id: "v".into(),
                    category: "food".into(),
                }],
            )
            .unwrap(),
        );
        let links = vec![("t".to_string(), "l".to_string())];
        let dropped = drop_same_timestamp(&mut text_seqs, &mut loc_seqs, &links);
        assert_eq!(dropped, 2);
        assert_eq!(text_seqs["t"].len(), 1);
        assert!(loc_seqs["l"].is_empty());
    }
}
