//! Text cleaning: lowercasing, URL and punctuation removal, stopword
//! filtering, truncation to a fixed token budget.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// Stopword set loaded from a one-token-per-line file.
#[derive(Debug, Clone, Default)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    pub fn empty() -> Self {
        Stopwords::default()
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        Stopwords {
            words: words.into_iter().map(|w| w.into().to_lowercase()).collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut words = HashSet::new();
        for line in std::io::BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let token = line.trim();
            if !token.is_empty() {
                words.insert(token.to_lowercase());
            }
        }
        Ok(Stopwords { words })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

// Scheme-prefix rule: "<alnum..>://" or a leading "www." marks a URL token.
fn is_url(token: &str) -> bool {
    if let Some(pos) = token.find("://") {
        pos > 0 && token[..pos].chars().all(|c| c.is_ascii_alphanumeric())
    } else {
        token.starts_with("www.")
    }
}

/// Cleans one raw document into at most `max_len` tokens.
///
/// Whitespace-tokenizes, lowercases, drops URL tokens, strips punctuation
/// and symbol characters (anything non-alphanumeric), then drops empties
/// and stopwords. Truncation to `max_len` applies to the surviving tokens.
/// An empty result is valid; callers drop such records.
pub fn preprocess_text(raw: &str, stopwords: &Stopwords, max_len: usize) -> Vec<String> {
    assert!(max_len >= 1, "max_len must be at least 1");
    let mut tokens = Vec::new();
    for piece in raw.split_whitespace() {
        let lowered = piece.to_lowercase();
        if is_url(&lowered) {
            continue;
        }
        let stripped: String = lowered.chars().filter(|c| c.is_alphanumeric()).collect();
        if stripped.is_empty() || stopwords.contains(&stripped) {
            continue;
        }
        tokens.push(stripped);
        if tokens.len() == max_len {
            break;
        }
    }
    tokens
}
