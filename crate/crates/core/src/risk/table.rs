use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{fuzzy_match, RiskError};
use crate::trial::{normalize_name, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Drug,
    Disease,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Drug => "drug",
            EntityKind::Disease => "disease",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub success: u32,
    pub total: u32,
}

impl OutcomeCounts {
    pub fn success_rate(self) -> f64 {
        f64::from(self.success) / f64::from(self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskScore {
    pub failure_rate: f64,
    pub matched_name: String,
    pub match_similarity: f64,
    pub support: u32,
}

/// Per-entity historical trial outcomes, keyed by normalized name.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    kind: EntityKind,
    entries: BTreeMap<String, OutcomeCounts>,
}

impl OutcomeTable {
    pub fn empty(kind: EntityKind) -> Self {
        OutcomeTable { kind, entries: BTreeMap::new() }
    }

    /// Counts outcomes per drug (or disease). A trial counts once for every
    /// distinct normalized entity it lists.
    pub fn build(records: &[TrialRecord], kind: EntityKind) -> Result<Self, RiskError> {
        let mut table = OutcomeTable::empty(kind);
        for record in records {
            let label = record.label.ok_or_else(|| RiskError::Unlabeled(record.trial_id.clone()))?;
            let names = match kind {
                EntityKind::Drug => &record.drugs,
                EntityKind::Disease => &record.diseases,
            };
            let distinct: BTreeSet<String> = names.iter().map(|n| normalize_name(n)).filter(|n| !n.is_empty()).collect();
            for name in distinct {
                let counts = table.entries.entry(name).or_insert(OutcomeCounts { success: 0, total: 0 });
                counts.total += 1;
                counts.success += u32::from(label.is_success());
            }
        }
        Ok(table)
    }

    pub fn from_counts<I, S>(kind: EntityKind, counts: I) -> Result<Self, RiskError>
    where
        I: IntoIterator<Item = (S, OutcomeCounts)>,
        S: AsRef<str>,
    {
        let mut table = OutcomeTable::empty(kind);
        for (name, c) in counts {
            if c.total == 0 || c.success > c.total {
                return Err(RiskError::InvalidModel(format!(
                    "invalid counts for {:?}: {} successes of {}",
                    name.as_ref(),
                    c.success,
                    c.total
                )));
            }
            table.entries.insert(normalize_name(name.as_ref()), c);
        }
        Ok(table)
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self, normalized: &str) -> Option<OutcomeCounts> {
        self.entries.get(normalized).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, OutcomeCounts)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// `failures / total` for the exact or fuzzy-matched entry; `None` when nothing matches.
    pub fn failure_rate(&self, name: &str) -> Option<RiskScore> {
        let key = normalize_name(name);
        let (matched, similarity) = match self.entries.get_key_value(&key) {
            Some((k, _)) => (k.as_str(), 1.0),
            None => fuzzy_match(&key, self.entries.keys().map(String::as_str))?,
        };
        let counts = self.entries[matched];
        Some(RiskScore {
            failure_rate: f64::from(counts.total - counts.success) / f64::from(counts.total),
            matched_name: matched.to_string(),
            match_similarity: similarity,
            support: counts.total,
        })
    }

    /// Highest failure rate among the names that resolve; `None` when none do.
    pub fn trial_risk<S: AsRef<str>>(&self, names: &[S]) -> Option<RiskScore> {
        names
            .iter()
            .filter_map(|n| self.failure_rate(n.as_ref()))
            .fold(None, |best: Option<RiskScore>, score| match best {
                Some(b) if b.failure_rate >= score.failure_rate => Some(b),
                _ => Some(score),
            })
    }
}
