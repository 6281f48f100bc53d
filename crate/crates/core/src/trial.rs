//! Trial records, CSV dataset ingestion, entity-name normalization and
//! eligibility-criteria segmentation.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::TrialError;

/// Columns every trial CSV must carry.
pub const REQUIRED_COLUMNS: [&str; 6] = ["trial_id", "phase", "drugs", "diseases", "criteria", "label"];

/// Optional column holding enrollment-success labels for the enrollment model.
pub const ENROLL_LABEL_COLUMN: &str = "enroll_label";

const LIST_SEPARATOR: char = ';';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    One,
    Two,
    Three,
    Four,
    Unknown,
}

impl Phase {
    /// Accepts `phase 1` .. `phase 4` in any case and spacing; everything else is unknown.
    pub fn parse(raw: &str) -> Phase {
        let compact: String = raw
            .chars()
            .filter(|c| !c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect();
        match compact.as_str() {
            "phase1" => Phase::One,
            "phase2" => Phase::Two,
            "phase3" => Phase::Three,
            "phase4" => Phase::Four,
            _ => Phase::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::One => "phase 1",
            Phase::Two => "phase 2",
            Phase::Three => "phase 3",
            Phase::Four => "phase 4",
            Phase::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Phase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        Ok(Phase::parse(&raw))
    }
}

/// Binary outcome: `1` is success.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(bool);

impl Label {
    pub const FAILURE: Label = Label(false);
    pub const SUCCESS: Label = Label(true);

    pub fn from_int(value: i64) -> Option<Label> {
        match value {
            0 => Some(Label::FAILURE),
            1 => Some(Label::SUCCESS),
            _ => None,
        }
    }

    pub fn parse(raw: &str) -> Option<Label> {
        match raw.trim() {
            "0" => Some(Label::FAILURE),
            "1" => Some(Label::SUCCESS),
            _ => None,
        }
    }

    pub fn is_success(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(deserializer)?;
        Label::from_int(raw).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {raw}")))
    }
}

/// One clinical trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrialRecord")]
pub struct TrialRecord {
    pub trial_id: String,
    pub phase: Phase,
    pub drugs: Vec<String>,
    pub diseases: Vec<String>,
    pub criteria: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enroll_label: Option<Label>,
}

#[derive(Deserialize)]
struct RawTrialRecord {
    trial_id: String,
    #[serde(default = "unknown_phase")]
    phase: Phase,
    drugs: Vec<String>,
    diseases: Vec<String>,
    #[serde(default)]
    criteria: String,
    #[serde(default)]
    label: Option<Label>,
    #[serde(default)]
    enroll_label: Option<Label>,
}

fn unknown_phase() -> Phase {
    Phase::Unknown
}

impl TryFrom<RawTrialRecord> for TrialRecord {
    type Error = TrialError;

    fn try_from(raw: RawTrialRecord) -> Result<Self, Self::Error> {
        let mut record = TrialRecord::new(raw.trial_id, raw.phase, raw.drugs, raw.diseases, raw.criteria)?;
        record.label = raw.label;
        record.enroll_label = raw.enroll_label;
        Ok(record)
    }
}

impl TrialRecord {
    /// Builds a record, trimming entity names and rejecting empty entity lists.
    pub fn new(
        trial_id: impl Into<String>,
        phase: Phase,
        drugs: Vec<String>,
        diseases: Vec<String>,
        criteria: impl Into<String>,
    ) -> Result<Self, TrialError> {
        let trial_id = trial_id.into();
        let drugs = clean_entity_list(&trial_id, "drugs", drugs)?;
        let diseases = clean_entity_list(&trial_id, "diseases", diseases)?;
        Ok(TrialRecord {
            trial_id,
            phase,
            drugs,
            diseases,
            criteria: criteria.into(),
            label: None,
            enroll_label: None,
        })
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn segmented_criteria(&self) -> SegmentedCriteria {
        segment_criteria(&self.criteria)
    }
}

fn clean_entity_list(trial_id: &str, field: &str, names: Vec<String>) -> Result<Vec<String>, TrialError> {
    let mut cleaned = Vec::with_capacity(names.len());
    for name in names {
        let trimmed = name.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.contains(LIST_SEPARATOR) {
            return Err(TrialError::InvalidRecord {
                trial_id: trial_id.to_string(),
                message: format!("{field} entry {trimmed:?} contains the list separator ';'"),
            });
        }
        cleaned.push(trimmed.to_string());
    }
    if cleaned.is_empty() {
        return Err(TrialError::InvalidRecord {
            trial_id: trial_id.to_string(),
            message: format!("{field} must contain at least one non-empty name"),
        });
    }
    Ok(cleaned)
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(LIST_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestMode {
    /// The first bad row aborts ingestion.
    #[default]
    Strict,
    /// Bad rows are skipped and reported.
    Lenient,
}

/// A row that failed validation; `row` is the 1-based data row number (header excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct TrialDataset {
    pub records: Vec<TrialRecord>,
    /// Only populated in lenient mode.
    pub skipped: Vec<RowIssue>,
}

/// Reads a trial CSV (`trial_id,phase,drugs,diseases,criteria,label[,enroll_label]`).
pub fn parse_trial_dataset<R: Read>(source: R, mode: IngestMode) -> Result<TrialDataset, TrialError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut positions = [0usize; 6];
    for (slot, name) in positions.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = column(name).ok_or_else(|| TrialError::MissingColumn(name.to_string()))?;
    }
    let [id_col, phase_col, drugs_col, diseases_col, criteria_col, label_col] = positions;
    let enroll_col = column(ENROLL_LABEL_COLUMN);

    let mut dataset = TrialDataset::default();
    for (index, row) in reader.records().enumerate() {
        let row_number = index + 1;
        let parsed = row.map_err(TrialError::from).and_then(|row| {
            let cell = |i: usize| row.get(i).unwrap_or("");
            let label = parse_label_cell(cell(label_col), "label")?;
            let enroll_label = match enroll_col {
                Some(i) => parse_label_cell(cell(i), ENROLL_LABEL_COLUMN)?,
                None => None,
            };
            let mut record = TrialRecord::new(
                cell(id_col).trim(),
                Phase::parse(cell(phase_col)),
                split_list(cell(drugs_col)),
                split_list(cell(diseases_col)),
                cell(criteria_col),
            )?;
            record.label = label;
            record.enroll_label = enroll_label;
            Ok(record)
        });
        match parsed {
            Ok(record) => dataset.records.push(record),
            Err(err) => {
                let message = match err {
                    TrialError::InvalidRecord { message, .. } => message,
                    other => other.to_string(),
                };
                match mode {
                    IngestMode::Strict => return Err(TrialError::Row { row: row_number, message }),
                    IngestMode::Lenient => {
                        log::warn!("skipping trial row {row_number}: {message}");
                        dataset.skipped.push(RowIssue { row: row_number, message });
                    }
                }
            }
        }
    }
    Ok(dataset)
}

fn parse_label_cell(raw: &str, column: &str) -> Result<Option<Label>, TrialError> {
    if raw.trim().is_empty() {
        return Ok(None);
    }
    Label::parse(raw).map(Some).ok_or_else(|| TrialError::InvalidRecord {
        trial_id: String::new(),
        message: format!("{column} must be 0, 1 or empty, got {raw:?}"),
    })
}

/// Writes records in the ingestion format. The `enroll_label` column is
/// emitted only when at least one record carries an enrollment label.
pub fn write_trial_dataset<W: Write>(sink: W, records: &[TrialRecord]) -> Result<(), TrialError> {
    let with_enroll = records.iter().any(|r| r.enroll_label.is_some());
    let mut writer = csv::Writer::from_writer(sink);
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    if with_enroll {
        header.push(ENROLL_LABEL_COLUMN);
    }
    writer.write_record(&header)?;
    let label_cell = |label: Option<Label>| label.map(|l| l.as_u8().to_string()).unwrap_or_default();
    for record in records {
        let mut row = vec![
            record.trial_id.clone(),
            record.phase.as_str().to_string(),
            record.drugs.join(";"),
            record.diseases.join(";"),
            record.criteria.clone(),
            label_cell(record.label),
        ];
        if with_enroll {
            row.push(label_cell(record.enroll_label));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Lowercase, NFC, punctuation to spaces, whitespace collapsed and trimmed.
/// Combining marks are kept so diacritics survive.
pub fn normalize_name(name: &str) -> String {
    let lowered: String = name.nfc().flat_map(char::to_lowercase).collect();
    let spaced: String = lowered
        .nfc()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() || is_combining_mark(c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Eligibility criteria split into inclusion and exclusion clauses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedCriteria {
    pub inclusion: Vec<String>,
    pub exclusion: Vec<String>,
}

impl SegmentedCriteria {
    pub fn is_empty(&self) -> bool {
        self.inclusion.is_empty() && self.exclusion.is_empty()
    }

    pub fn clauses(&self) -> impl Iterator<Item = &str> {
        self.inclusion.iter().chain(&self.exclusion).map(String::as_str)
    }

    /// Renders back to headed bullet lists; `segment_criteria` recovers `self` from this text.
    pub fn render(&self) -> String {
        let mut out = String::from("Inclusion Criteria:\n");
        for clause in &self.inclusion {
            out.push_str("- ");
            out.push_str(clause);
            out.push('\n');
        }
        out.push_str("Exclusion Criteria:\n");
        for clause in &self.exclusion {
            out.push_str("- ");
            out.push_str(clause);
            out.push('\n');
        }
        out
    }
}

const INCLUSION_HEADER: &str = "inclusion criteria";
const EXCLUSION_HEADER: &str = "exclusion criteria";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Inclusion,
    Exclusion,
}

/// Splits criteria text at its `Inclusion Criteria` / `Exclusion Criteria`
/// headers (case-insensitive) and then into clauses on newlines, stripping a
/// leading bullet marker from each line.
///
/// Text before the first header is dropped. Without any header, every clause
/// goes to `inclusion`.
pub fn segment_criteria(criteria: &str) -> SegmentedCriteria {
    let headers = find_headers(criteria);
    let mut segmented = SegmentedCriteria::default();
    if headers.is_empty() {
        segmented.inclusion = split_clauses(criteria);
        return segmented;
    }

    let mut section = Section::Preamble;
    let mut cursor = 0;
    for (start, end, next) in headers {
        push_section(&mut segmented, section, &criteria[cursor..start]);
        section = next;
        cursor = skip_header_colon(criteria, end);
    }
    push_section(&mut segmented, section, &criteria[cursor..]);
    segmented
}

fn push_section(out: &mut SegmentedCriteria, section: Section, text: &str) {
    match section {
        Section::Preamble => {}
        Section::Inclusion => out.inclusion.extend(split_clauses(text)),
        Section::Exclusion => out.exclusion.extend(split_clauses(text)),
    }
}

/// Byte ranges of every header occurrence, in text order.
fn find_headers(text: &str) -> Vec<(usize, usize, Section)> {
    // ASCII lowercasing keeps byte offsets aligned with the original text.
    let lowered = text.to_ascii_lowercase();
    let mut found = Vec::new();
    for (needle, section) in [(INCLUSION_HEADER, Section::Inclusion), (EXCLUSION_HEADER, Section::Exclusion)] {
        found.extend(lowered.match_indices(needle).map(|(start, m)| (start, start + m.len(), section)));
    }
    found.sort_by_key(|&(start, _, _)| start);
    found
}

fn skip_header_colon(text: &str, mut pos: usize) -> usize {
    let bytes = text.as_bytes();
    while pos < bytes.len() && (bytes[pos] == b' ' || bytes[pos] == b'\t') {
        pos += 1;
    }
    if pos < bytes.len() && bytes[pos] == b':' {
        pos += 1;
    }
    pos
}

fn split_clauses(text: &str) -> Vec<String> {
    text.lines()
        .map(|line| strip_bullet(line.trim()).trim())
        .filter(|clause| !clause.is_empty())
        .map(str::to_string)
        .collect()
}

/// Removes one leading `-`, `*`, `1.` or `1)` marker when it is followed by whitespace or ends the line.
fn strip_bullet(line: &str) -> &str {
    let marker_len = if line.starts_with('-') || line.starts_with('*') {
        1
    } else {
        let digits = line.bytes().take_while(u8::is_ascii_digit).count();
        match line.as_bytes().get(digits) {
            Some(b'.') | Some(b')') if digits > 0 => digits + 1,
            _ => 0,
        }
    };
    if marker_len == 0 {
        return line;
    }
    let rest = &line[marker_len..];
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        rest
    } else {
        line
    }
}
