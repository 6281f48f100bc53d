use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Loaded, MatchKind, StoreError, ENTITY_RESOLUTION_THRESHOLD};
use crate::risk::fuzzy_match_with_threshold;
use crate::trial::normalize_name;

pub const DRUGBANK_COLUMNS: [&str; 5] = ["name", "description", "indication", "mechanism", "smiles"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrugEntry {
    pub name: String,
    pub description: String,
    pub indication: String,
    pub mechanism: String,
    #[serde(default)]
    pub smiles: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugMatch<'a> {
    pub entry: &'a DrugEntry,
    pub kind: MatchKind,
    pub similarity: f64,
}

/// Drug descriptions keyed by normalized name.
#[derive(Debug, Clone, Default)]
pub struct DrugStore {
    entries: BTreeMap<String, DrugEntry>,
}

impl DrugStore {
    /// Reads a tab-separated file with header `name description indication mechanism smiles`.
    /// Later rows whose normalized name repeats an earlier one are dropped with a warning.
    pub fn load<R: Read>(source: R) -> Result<Loaded<DrugStore>, StoreError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .has_headers(true)
            .from_reader(source);
        let headers = reader.headers()?.clone();
        let mut columns = [0usize; 5];
        for (slot, name) in columns.iter_mut().zip(DRUGBANK_COLUMNS) {
            *slot = headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| StoreError::MissingColumn(name.to_string()))?;
        }

        let mut store = DrugStore::default();
        let mut warnings = Vec::new();
        for (index, row) in reader.records().enumerate() {
            let row_number = index + 1;
            let row = row.map_err(|e| StoreError::Row { row: row_number, message: e.to_string() })?;
            let cell = |i: usize| row.get(columns[i]).unwrap_or("").trim().to_string();
            let entry = DrugEntry {
                name: cell(0),
                description: cell(1),
                indication: cell(2),
                mechanism: cell(3),
                smiles: cell(4),
            };
            let key = normalize_name(&entry.name);
            if key.is_empty() {
                return Err(StoreError::Row { row: row_number, message: "drug name is empty".into() });
            }
            if let Some(existing) = store.entries.get(&key) {
                let warning = format!(
                    "row {row_number}: drug {:?} duplicates {:?} (normalized {key:?}); keeping the first",
                    entry.name, existing.name
                );
                log::warn!("{warning}");
                warnings.push(warning);
                continue;
            }
            store.entries.insert(key, entry);
        }
        Ok(Loaded { value: store, warnings })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = DrugEntry>) -> Self {
        let mut store = DrugStore::default();
        for entry in entries {
            store.entries.entry(normalize_name(&entry.name)).or_insert(entry);
        }
        store
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Exact normalized match first, otherwise the closest name scoring at least 0.6.
    pub fn lookup(&self, name: &str) -> Option<DrugMatch<'_>> {
        let key = normalize_name(name);
        if let Some(entry) = self.entries.get(&key) {
            return Some(DrugMatch { entry, kind: MatchKind::Exact, similarity: 1.0 });
        }
        let (matched, similarity) = fuzzy_match_with_threshold(&key, self.keys(), ENTITY_RESOLUTION_THRESHOLD)?;
        Some(DrugMatch { entry: &self.entries[matched], kind: MatchKind::Fuzzy, similarity })
    }
}
