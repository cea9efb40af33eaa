//! JSONL platform-file loaders and the positive-link CSV reader.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::Deserialize;

use super::preprocess::{preprocess_text, Stopwords};
use super::{LocationRecord, LocationSequences, TextRecord, TextSequences, UserSequence};
use crate::error::{Error, Result};

/// Per-file ingestion accounting. `lines = loaded + malformed + dropped_empty`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub loaded: usize,
    pub malformed: usize,
    /// Text records whose token list came out empty after preprocessing.
    pub dropped_empty: usize,
}

#[derive(Deserialize)]
struct TextLine {
    user_id: String,
    time: i64,
    text: String,
}

#[derive(Deserialize)]
struct LocationLine {
    user_id: String,
    time: i64,
    location_id: String,
    category: String,
}

fn group_into_sequences<R: super::Record>(
    grouped: BTreeMap<String, Vec<R>>,
) -> Result<BTreeMap<String, UserSequence<R>>> {
    grouped
        .into_iter()
        .map(|(user, records)| Ok((user.clone(), UserSequence::new(user, records)?)))
        .collect()
}

/// Loads a text platform file: one JSON object per line with fields
/// `user_id`, `time`, `text`. Text is preprocessed on ingestion; records
/// left with no tokens are dropped. Malformed lines are skipped with a
/// warning and counted in the report.
pub fn load_text_platform(
    path: &Path,
    stopwords: &Stopwords,
    max_len: usize,
) -> Result<(TextSequences, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut grouped: BTreeMap<String, Vec<TextRecord>> = BTreeMap::new();

    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let parsed: TextLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed line: {e}", path.display(), lineno + 1);
                report.malformed += 1;
                continue;
            }
        };
        if parsed.time < 0 {
            log::warn!("{}:{}: skipping record with negative time", path.display(), lineno + 1);
            report.malformed += 1;
            continue;
        }
        let tokens = preprocess_text(&parsed.text, stopwords, max_len);
        if tokens.is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        report.loaded += 1;
        grouped.entry(parsed.user_id.clone()).or_default().push(TextRecord {
            user_id: parsed.user_id,
            time: parsed.time,
            tokens,
        });
    }
    Ok((group_into_sequences(grouped)?, report))
}

/// Loads a location platform file: one JSON object per line with fields
/// `user_id`, `time`, `location_id`, `category`.
pub fn load_location_platform(path: &Path) -> Result<(LocationSequences, LoadReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut grouped: BTreeMap<String, Vec<LocationRecord>> = BTreeMap::new();

    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let parsed: LocationLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{}:{}: skipping malformed line: {e}", path.display(), lineno + 1);
                report.malformed += 1;
                continue;
            }
        };
        if parsed.time < 0 || parsed.category.is_empty() {
            log::warn!(
                "{}:{}: skipping record with negative time or empty category",
                path.display(),
                lineno + 1
            );
            report.malformed += 1;
            continue;
        }
        report.loaded += 1;
        grouped.entry(parsed.user_id.clone()).or_default().push(LocationRecord {
            user_id: parsed.user_id,
            time: parsed.time,
            location_id: parsed.location_id,
            category: parsed.category,
        });
    }
    Ok((group_into_sequences(grouped)?, report))
}

/// Reads the positive-link CSV (`text_user_id,location_user_id` header).
pub fn load_links(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::schema(path, e.to_string()),
    })?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::schema(path, e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != ["text_user_id", "location_user_id"] {
            return Err(Error::schema(
                path,
                format!("expected header text_user_id,location_user_id, found {got:?}"),
            ));
        }
    }
    let mut links = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        if record.len() != 2 {
            return Err(Error::schema(path, format!("expected 2 columns, found {}", record.len())));
        }
        links.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(links)
}

/// Writes a positive-link CSV.
pub fn write_links(path: &Path, links: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    w.write_record(["text_user_id", "location_user_id"])
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for (t, l) in links {
        w.write_record([t, l])
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn groups_by_user() {
        let f = write_tmp(concat!(
            "{\"user_id\":\"a\",\"time\":3,\"text\":\"one\"}\n",
            "{\"user_id\":\"b\",\"time\":1,\"text\":\"two\"}\n",
            "{\"user_id\":\"a\",\"time\":1,\"text\":\"three\"}\n",
            "{\"user_id\":\"a\",\"time\":2,\"text\":\"four\"}\n",
            "{\"user_id\":\"b\",\"time\":2,\"text\":\"five\"}\n",
        ));
        let (seqs, report) = load_text_platform(f.path(), &Stopwords::empty(), 50).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs["a"].len(), 3);
        assert_eq!(seqs["b"].len(), 2);
        assert_eq!(report.loaded, 5);
        assert_eq!(report.malformed, 0);
    }

    #[test]
    fn malformed_line_skipped_with_count() {
        let f = write_tmp(concat!(
            "{\"user_id\":\"a\",\"time\":3,\"text\":\"ok\"}\n",
            "{\"user_id\":\"a\",\"text\":\"missing time\"}\n",
        ));
        let (seqs, report) = load_text_platform(f.path(), &Stopwords::empty(), 50).unwrap();
        assert_eq!(seqs["a"].len(), 1);
        assert_eq!(report.malformed, 1);
        assert_eq!(report.lines, report.loaded + report.malformed + report.dropped_empty);
    }

    #[test]
    fn out_of_order_timestamps_sorted() {
        let f = write_tmp(concat!(
            "{\"user_id\":\"a\",\"time\":100,\"text\":\"late\"}\n",
            "{\"user_id\":\"a\",\"time\":5,\"text\":\"early\"}\n",
        ));
        let (seqs, _) = load_text_platform(f.path(), &Stopwords::empty(), 50).unwrap();
        let times: Vec<i64> = seqs["a"].records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![5, 100]);
    }

    #[test]
    fn empty_after_preprocessing_dropped() {
        let f = write_tmp("{\"user_id\":\"a\",\"time\":1,\"text\":\"!!! ???\"}\n");
        let (seqs, report) = load_text_platform(f.path(), &Stopwords::empty(), 50).unwrap();
        assert!(seqs.is_empty());
        assert_eq!(report.dropped_empty, 1);
    }

    #[test]
    fn location_loader_rejects_empty_category() {
        let f = write_tmp(concat!(
            "{\"user_id\":\"a\",\"time\":1,\"location_id\":\"v1\",\"category\":\"food\"}\n",
            "{\"user_id\":\"a\",\"time\":2,\"location_id\":\"v2\",\"category\":\"\"}\n",
        ));
        let (seqs, report) = load_location_platform(f.path()).unwrap();
        assert_eq!(seqs["a"].len(), 1);
        assert_eq!(report.malformed, 1);
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = load_text_platform(Path::new("/nonexistent/x.jsonl"), &Stopwords::empty(), 50);
        assert!(err.is_err());
    }

    #[test]
    fn links_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("links.csv");
        let links = vec![
            ("t1".to_string(), "l1".to_string()),
            ("t2".to_string(), "l2".to_string()),
        ];
        write_links(&path, &links).unwrap();
        assert_eq!(load_links(&path).unwrap(), links);
    }

    #[test]
    fn links_bad_header_rejected() {
        let f = write_tmp("a,b\nx,y\n");
        assert!(load_links(f.path()).is_err());
    }
}
