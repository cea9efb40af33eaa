//! Negative-pair sampling and stratified train/valid/test splitting.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PairDataset, PairRow, Split};
use crate::error::{Error, Result};

/// Outcome of negative sampling: the drawn pairs plus whether the request
/// had to be clipped to the number of available non-linked pairs.
#[derive(Debug, Clone)]
pub struct NegativeSample {
    pub pairs: Vec<(String, String)>,
    pub clipped: bool,
}

/// Draws `ratio * |positives|` non-linked (text, location) pairs uniformly
/// from the cross product of the given user lists minus the positive links,
/// without duplicates. Deterministic for a fixed seed.
///
/// If the request exceeds the number of available non-linked pairs, all
/// available pairs are returned and `clipped` is set.
pub fn sample_negatives(
    positives: &[(String, String)],
    text_users: &[String],
    loc_users: &[String],
    ratio: usize,
    seed: u64,
) -> Result<NegativeSample> {
    if text_users.len() < 2 || loc_users.len() < 2 {
        return Err(Error::Data(
            "negative sampling needs at least 2 distinct users per platform".to_string(),
        ));
    }
    // Sorted copies make the index space independent of caller ordering.
    let mut text_users: Vec<&String> = text_users.iter().collect();
    text_users.sort();
    text_users.dedup();
    let mut loc_users: Vec<&String> = loc_users.iter().collect();
    loc_users.sort();
    loc_users.dedup();

    let positive_set: HashSet<(&str, &str)> = positives
        .iter()
        .map(|(t, l)| (t.as_str(), l.as_str()))
        .collect();
    let positives_in_grid = positive_set
        .iter()
        .filter(|(t, l)| {
            text_users.binary_search_by(|u| u.as_str().cmp(t)).is_ok()
                && loc_users.binary_search_by(|u| u.as_str().cmp(l)).is_ok()
        })
        .count();

    let total = text_users.len() * loc_users.len();
    let available = total - positives_in_grid;
    let requested = ratio * positives.len();
    let clipped = requested > available;
    if clipped {
        log::warn!(
            "requested {requested} negatives but only {available} non-linked pairs exist; returning all"
        );
    }
    let want = requested.min(available);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(String, String)>;
    if 2 * want > available {
        // Dense request: enumerate every non-linked pair, shuffle, take.
        pairs = Vec::with_capacity(available);
        for t in &text_users {
            for l in &loc_users {
                if !positive_set.contains(&(t.as_str(), l.as_str())) {
                    pairs.push(((*t).clone(), (*l).clone()));
                }
            }
        }
        pairs.shuffle(&mut rng);
        pairs.truncate(want);
    } else {
        // Sparse request: rejection-sample over the index grid.
        let mut drawn: HashSet<(usize, usize)> = HashSet::with_capacity(want);
        pairs = Vec::with_capacity(want);
        while pairs.len() < want {
            let i = rng.random_range(0..text_users.len());
            let j = rng.random_range(0..loc_users.len());
            if positive_set.contains(&(text_users[i].as_str(), loc_users[j].as_str())) {
                continue;
            }
            if drawn.insert((i, j)) {
                pairs.push((text_users[i].clone(), loc_users[j].clone()));
            }
        }
    }
    Ok(NegativeSample { pairs, clipped })
}

/// Assigns labeled pairs to train/valid/test splits, stratified by label so
/// balance carries over to every split. Deterministic for a fixed seed.
pub fn split(
    positives: Vec<(String, String)>,
    negatives: Vec<(String, String)>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<PairDataset> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be non-negative and sum to 1, got ({ft}, {fv}, {fs})"
        )));
    }
    let n = positives.len() + negatives.len();
    if n < 10 {
        return Err(Error::Data(format!(
            "cannot split {n} pairs; at least 10 are required"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for (label, mut stratum) in [(true, positives), (false, negatives)] {
        stratum.shuffle(&mut rng);
        let m = stratum.len();
        let n_train = (m as f64 * ft).round() as usize;
        let n_valid = ((m as f64 * (ft + fv)).round() as usize).saturating_sub(n_train);
        for (idx, (text_user, loc_user)) in stratum.into_iter().enumerate() {
            let split = if idx < n_train {
                Split::Train
            } else if idx < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
            rows.push(PairRow {
                text_user,
                loc_user,
                label,
                split,
            });
        }
    }
    Ok(PairDataset { rows })
}
