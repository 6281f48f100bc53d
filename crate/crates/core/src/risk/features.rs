//! Hashed bag-of-words featurization of a trial's criteria and entities.

use crate::trial::{normalize_name, SegmentedCriteria};

/// Number of hashed token buckets (2^16).
pub const HASH_BUCKETS: usize = 1 << 16;
/// Inclusion clause count, exclusion clause count, criteria characters / 1000.
pub const DENSE_FEATURES: usize = 3;
pub const FEATURE_DIM: usize = HASH_BUCKETS + DENSE_FEATURES;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn bucket_of(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % HASH_BUCKETS as u64) as usize
}

/// Tokens of `text`: the words of its normalized form.
pub fn tokens(text: &str) -> Vec<String> {
    normalize_name(text).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Sparse vector of dimension [`FEATURE_DIM`]; indices ascending, no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    /// Builds from unsorted (index, value) pairs, summing duplicates and dropping zeros.
    pub fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(pairs.len());
        for (index, value) in pairs {
            match entries.last_mut() {
                Some((last, acc)) if *last == index => *acc += value,
                _ => entries.push((index, value)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        FeatureVector { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(values.iter().copied().enumerate().collect())
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|&(i, _)| i)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| weights[i] * v).sum()
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Inclusion tokens add 1 to their bucket, exclusion tokens subtract 1,
/// drug and disease tokens add 1; the three dense features follow the buckets.
pub fn featurize<D: AsRef<str>, S: AsRef<str>>(criteria: &SegmentedCriteria, drugs: &[D], diseases: &[S]) -> FeatureVector {
    let mut pairs = Vec::new();
    let mut add_text = |text: &str, sign: f64| {
        pairs.extend(tokens(text).iter().map(|t| (bucket_of(t), sign)));
    };
    for clause in &criteria.inclusion {
        add_text(clause, 1.0);
    }
    for clause in &criteria.exclusion {
        add_text(clause, -1.0);
    }
    for name in drugs.iter().map(AsRef::as_ref).chain(diseases.iter().map(AsRef::as_ref)) {
        add_text(name, 1.0);
    }
    let characters: usize = criteria.clauses().map(|c| c.chars().count()).sum();
    pairs.push((HASH_BUCKETS, criteria.inclusion.len() as f64));
    pairs.push((HASH_BUCKETS + 1, criteria.exclusion.len() as f64));
    pairs.push((HASH_BUCKETS + 2, characters as f64 / 1000.0));
    FeatureVector::from_pairs(pairs)
}
