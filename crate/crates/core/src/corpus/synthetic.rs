//! Synthetic two-platform corpus with planted text-location correlations.
//!
//! Each synthetic person owns one account per platform. Every post is
//! temporally paired with one of the person's check-ins (publish time =
//! check-in time + jitter); with probability `signal_strength` the post's
//! words are drawn from the topical word subset of the co-occurring
//! check-in's category, otherwise uniformly from the whole vocabulary. So
//! at signal 0 the only linkage evidence is temporal, and at signal 1 with
//! zero jitter every correlated post matches its co-event category exactly.

use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::load::write_links;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub vocab_size: usize,
    pub n_categories: usize,
    /// Probability that a post draws its words from the co-occurring
    /// check-in's category instead of uniformly.
    pub signal_strength: f64,
    pub records_per_user: usize,
    pub words_per_post: usize,
    /// Post publish time = paired check-in time + uniform jitter in
    /// [-jitter_max_secs, jitter_max_secs].
    pub jitter_max_secs: i64,
    /// All base timestamps fall in [start_time, start_time + span_secs).
    pub span_secs: i64,
    pub start_time: i64,
    pub locations_per_category: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 100,
            vocab_size: 2000,
            n_categories: 10,
            signal_strength: 0.8,
            records_per_user: 40,
            words_per_post: 6,
            jitter_max_secs: 4 * 3600,
            span_secs: 14 * 86400,
            start_time: 1_600_000_000,
            locations_per_category: 3,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_users", self.n_users),
            ("vocab_size", self.vocab_size),
            ("n_categories", self.n_categories),
            ("records_per_user", self.records_per_user),
            ("words_per_post", self.words_per_post),
            ("locations_per_category", self.locations_per_category),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < self.n_categories {
            return Err(Error::Config(format!(
                "vocab_size ({}) must be at least n_categories ({})",
                self.vocab_size, self.n_categories
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Config("signal_strength must lie in [0, 1]".to_string()));
        }
        if self.jitter_max_secs < 0 || self.span_secs < 1 || self.start_time < 0 {
            return Err(Error::Config("timing parameters out of range".to_string()));
        }
        Ok(())
    }
}

/// Partition of word indices into per-category topical subsets. Category
/// `c` owns the `c`-th contiguous block; blocks differ in size by at most
/// one word.
pub fn category_word_ranges(vocab_size: usize, n_categories: usize) -> Vec<Range<usize>> {
    let per = vocab_size / n_categories;
    let extra = vocab_size % n_categories;
    let mut ranges = Vec::with_capacity(n_categories);
    let mut start = 0;
    for c in 0..n_categories {
        let len = per + usize::from(c < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}

pub fn word_name(idx: usize) -> String {
    format!("w{idx:05}")
}

pub fn category_name(idx: usize) -> String {
    format!("cat{idx:02}")
}

pub fn text_user_name(idx: usize) -> String {
    format!("text_{idx:04}")
}

pub fn loc_user_name(idx: usize) -> String {
    format!("loc_{idx:04}")
}

#[derive(Serialize)]
struct TextLineOut<'a> {
    user_id: &'a str,
    time: i64,
    text: String,
}

#[derive(Serialize)]
struct LocationLineOut<'a> {
    user_id: &'a str,
    time: i64,
    location_id: String,
    category: &'a str,
}

/// Generates the text platform file, the location platform file, and the
/// ground-truth link file. Byte-identical across runs for the same config.
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
    text_path: &Path,
    loc_path: &Path,
    links_path: &Path,
) -> Result<()> {
    cfg.validate()?;
    let ranges = category_word_ranges(cfg.vocab_size, cfg.n_categories);
    let categories: Vec<String> = (0..cfg.n_categories).map(category_name).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let text_file = std::fs::File::create(text_path).map_err(|e| Error::io(text_path, e))?;
    let mut text_out = BufWriter::new(text_file);
    let loc_file = std::fs::File::create(loc_path).map_err(|e| Error::io(loc_path, e))?;
    let mut loc_out = BufWriter::new(loc_file);
    let mut links = Vec::with_capacity(cfg.n_users);

    for person in 0..cfg.n_users {
        let text_user = text_user_name(person);
        let loc_user = loc_user_name(person);
        links.push((text_user.clone(), loc_user.clone()));

        for _ in 0..cfg.records_per_user {
            let t = cfg.start_time + rng.random_range(0..cfg.span_secs);
            let cat = rng.random_range(0..cfg.n_categories);
            let venue = rng.random_range(0..cfg.locations_per_category);

            let loc_line = LocationLineOut {
                user_id: &loc_user,
                time: t,
                location_id: format!("venue_{cat:02}_{venue}"),
                category: &categories[cat],
            };
            serde_json::to_writer(&mut loc_out, &loc_line)
                .map_err(|e| Error::io(loc_path, std::io::Error::other(e)))?;
            loc_out.write_all(b"\n").map_err(|e| Error::io(loc_path, e))?;

            let jitter = if cfg.jitter_max_secs > 0 {
                rng.random_range(-cfg.jitter_max_secs..=cfg.jitter_max_secs)
            } else {
                0
            };
            let topical = rng.random_bool(cfg.signal_strength);
            let words: Vec<String> = (0..cfg.words_per_post)
                .map(|_| {
                    let idx = if topical {
                        let r = &ranges[cat];
                        rng.random_range(r.start..r.end)
                    } else {
                        rng.random_range(0..cfg.vocab_size)
                    };
                    word_name(idx)
                })
                .collect();
            let text_line = TextLineOut {
                user_id: &text_user,
                time: (t + jitter).max(0),
                text: words.join(" "),
            };
            serde_json::to_writer(&mut text_out, &text_line)
                .map_err(|e| Error::io(text_path, std::io::Error::other(e)))?;
            text_out.write_all(b"\n").map_err(|e| Error::io(text_path, e))?;
        }
    }
    text_out.flush().map_err(|e| Error::io(text_path, e))?;
    loc_out.flush().map_err(|e| Error::io(loc_path, e))?;
    write_links(links_path, &links)?;
    Ok(())
}

#[derive(Serialize)]
struct ExternalLineOut<'a> {
    text: String,
    category: &'a str,
}

/// Writes `n_pairs` external text-category pairs consistent with the
/// planted topical partition: each pair's words are drawn from its
/// category's own word subset.
pub fn generate_external_pairs(
    n_pairs: usize,
    vocab_size: usize,
    n_categories: usize,
    words_per_pair: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    if vocab_size < n_categories || n_categories < 1 || words_per_pair < 1 {
        return Err(Error::Config(
            "external pair generation needs vocab_size >= n_categories >= 1 and words_per_pair >= 1"
                .to_string(),
        ));
    }
    let ranges = category_word_ranges(vocab_size, n_categories);
    let categories: Vec<String> = (0..n_categories).map(category_name).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for _ in 0..n_pairs {
        let cat = rng.random_range(0..n_categories);
        let r = &ranges[cat];
        let words: Vec<String> = (0..words_per_pair)
            .map(|_| word_name(rng.random_range(r.start..r.end)))
            .collect();
        let line = ExternalLineOut {
            text: words.join(" "),
            category: &categories[cat],
        };
        serde_json::to_writer(&mut out, &line)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_links, load_location_platform, load_text_platform, Stopwords};

    fn tiny(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_users: 5,
            vocab_size: 40,
            n_categories: 4,
            signal_strength: 1.0,
            records_per_user: 6,
            words_per_post: 3,
            jitter_max_secs: 0,
            span_secs: 86400,
            seed,
            ..SyntheticConfig::default()
        }
    }

    fn generate(cfg: &SyntheticConfig, dir: &Path) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let text = dir.join("text.jsonl");
        let loc = dir.join("loc.jsonl");
        let links = dir.join("links.csv");
        generate_synthetic(cfg, &text, &loc, &links).unwrap();
        (text, loc, links)
    }

    #[test]
    fn emits_expected_record_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (text, loc, links) = generate(&tiny(1), dir.path());
        let (text_seqs, report) = load_text_platform(&text, &Stopwords::empty(), 50).unwrap();
        assert_eq!(report.loaded, 30);
        assert_eq!(text_seqs.len(), 5);
        let (loc_seqs, report) = load_location_platform(&loc).unwrap();
        assert_eq!(report.loaded, 30);
        assert_eq!(loc_seqs.len(), 5);
        assert_eq!(load_links(&links).unwrap().len(), 5);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        generate(&tiny(7), &a);
        generate(&tiny(7), &b);
        for name in ["text.jsonl", "loc.jsonl", "links.csv"] {
            let ba = std::fs::read(a.join(name)).unwrap();
            let bb = std::fs::read(b.join(name)).unwrap();
            assert_eq!(ba, bb, "{name} differs between runs");
        }
    }

    #[test]
    fn full_signal_zero_jitter_matches_co_event_category() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(3);
        let (text, loc, _) = generate(&cfg, dir.path());
        let (text_seqs, _) = load_text_platform(&text, &Stopwords::empty(), 50).unwrap();
        let (loc_seqs, _) = load_location_platform(&loc).unwrap();
        let ranges = category_word_ranges(cfg.vocab_size, cfg.n_categories);

        for person in 0..cfg.n_users {
            let posts = &text_seqs[&text_user_name(person)];
            let checkins = &loc_seqs[&loc_user_name(person)];
            for post in posts.records() {
                // Zero jitter: the co-event is the check-in at the same time.
                let co = checkins
                    .records()
                    .iter()
                    .find(|c| c.time == post.time)
                    .expect("paired check-in");
                let cat: usize = co.category.trim_start_matches("cat").parse().unwrap();
                for word in &post.tokens {
                    let idx: usize = word.trim_start_matches('w').parse().unwrap();
                    assert!(ranges[cat].contains(&idx), "{word} outside {:?}", ranges[cat]);
                }
            }
        }
    }

    #[test]
    fn zero_signal_words_not_category_bound() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            signal_strength: 0.0,
            n_users: 10,
            records_per_user: 20,
            ..tiny(5)
        };
        let (text, loc, _) = generate(&cfg, dir.path());
        let (text_seqs, _) = load_text_platform(&text, &Stopwords::empty(), 50).unwrap();
        let (loc_seqs, _) = load_location_platform(&loc).unwrap();
        let ranges = category_word_ranges(cfg.vocab_size, cfg.n_categories);

        // With 3 uniform words per post and 4 categories, a post fully inside
        // its co-event's subset has probability (1/4)^3; over 200 posts some
        // must escape it.
        let mut escaped = 0;
        for person in 0..cfg.n_users {
            let posts = &text_seqs[&text_user_name(person)];
            let checkins = &loc_seqs[&loc_user_name(person)];
            for post in posts.records() {
                let co = checkins.records().iter().find(|c| c.time == post.time).unwrap();
                let cat: usize = co.category.trim_start_matches("cat").parse().unwrap();
                let all_topical = post.tokens.iter().all(|w| {
                    let idx: usize = w.trim_start_matches('w').parse().unwrap();
                    ranges[cat].contains(&idx)
                });
                if !all_topical {
                    escaped += 1;
                }
            }
        }
        assert!(escaped > 100, "only {escaped} posts escaped the co-event category");
    }

    #[test]
    fn word_ranges_partition_the_vocabulary() {
        let ranges = category_word_ranges(11, 3);
        assert_eq!(ranges, vec![0..4, 4..8, 8..11]);
        let ranges = category_word_ranges(9, 3);
        assert_eq!(ranges, vec![0..3, 3..6, 6..9]);
    }

    #[test]
    fn rejects_vocab_smaller_than_categories() {
        let cfg = SyntheticConfig {
            vocab_size: 2,
            n_categories: 4,
            ..tiny(1)
        };
        let dir = tempfile::tempdir().unwrap();
        let err = generate_synthetic(
            &cfg,
            &dir.path().join("t"),
            &dir.path().join("l"),
            &dir.path().join("k"),
        );
        assert!(err.is_err());
    }

    #[test]
    fn external_pairs_are_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.jsonl");
        generate_external_pairs(50, 40, 4, 3, 9, &path).unwrap();
        let ranges = category_word_ranges(40, 4);
        let content = std::fs::read_to_string(&path).unwrap();
        let mut n = 0;
        for line in content.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let cat: usize = v["category"].as_str().unwrap().trim_start_matches("cat").parse().unwrap();
            for word in v["text"].as_str().unwrap().split(' ') {
                let idx: usize = word.trim_start_matches('w').parse().unwrap();
                assert!(ranges[cat].contains(&idx));
            }
            n += 1;
        }
        assert_eq!(n, 50);
    }
}
