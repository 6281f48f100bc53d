//! Levenshtein-ratio name matching shared by the risk tables and the knowledge store.

use crate::trial::normalize_name;

/// Minimum similarity accepted when resolving names against outcome tables.
pub const RISK_TABLE_THRESHOLD: f64 = 0.8;

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over chars; two empty strings are identical.
pub fn similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Best key for `query` at the risk-table threshold.
pub fn fuzzy_match<'k, I>(query: &str, keys: I) -> Option<(&'k str, f64)>
where
    I: IntoIterator<Item = &'k str>,
{
    fuzzy_match_with_threshold(query, keys, RISK_TABLE_THRESHOLD)
}

/// Returns the key with the highest similarity to `normalize_name(query)`,
/// provided it reaches `threshold`. Ties go to the lexicographically smallest key.
/// Keys are expected to be normalized already.
pub fn fuzzy_match_with_threshold<'k, I>(query: &str, keys: I, threshold: f64) -> Option<(&'k str, f64)>
where
    I: IntoIterator<Item = &'k str>,
{
    let query = normalize_name(query);
    let mut best: Option<(&'k str, f64)> = None;
    for key in keys {
        let score = similarity(&query, key);
        let better = match best {
            None => true,
            Some((best_key, best_score)) => score > best_score || (score == best_score && key < best_key),
        };
        if better {
            best = Some((key, score));
        }
    }
    best.filter(|&(_, score)| score >= threshold)
}
