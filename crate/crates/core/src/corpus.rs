//! Deviation-record data model, corpus ingestion and text normalization.
//!
//! A corpus file is UTF-8 with one JSON object per line. `normalized_text`
//! is never read from or written to disk; it is always recomputed from
//! `raw_text`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dates;

/// Lowercases `raw` and collapses every whitespace run to a single space,
/// trimming both ends.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    // Some lowercase mappings (e.g. U+0130) emit combining marks but never
    // whitespace, so a single pass is already idempotent.
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line_no}: malformed record: {reason}")]
    MalformedRecord { line_no: usize, reason: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("corpus io: {0}")]
    Io(#[from] io::Error),
}

/// Outcome of a quality-impact assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityImpact {
    Impacted,
    NotImpacted,
    Indeterminate,
}

impl QualityImpact {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityImpact::Impacted => "impacted",
            QualityImpact::NotImpacted => "not_impacted",
            QualityImpact::Indeterminate => "indeterminate",
        }
    }
}

impl fmt::Display for QualityImpact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground truth for the extraction tasks plus filterable attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentMetadata {
    #[serde(with = "iso_date")]
    pub occurrence_date: NaiveDate,
    pub site: String,
    #[serde(default)]
    pub batches: Vec<String>,
    pub quality_impact: QualityImpact,
    pub root_cause: String,
    pub product_line: String,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

mod iso_date {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(date: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&date.format("%Y-%m-%d"))
    }

    // Accepts any of the recognized date spellings and normalizes to ISO.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let raw = String::deserialize(d)?;
        crate::dates::parse_exact(&raw).ok_or_else(|| serde::de::Error::custom(format!("unrecognized date {raw:?}")))
    }
}

/// One historical incident.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationRecord {
    pub id: String,
    raw_text: String,
    normalized_text: String,
    pub description: String,
    pub metadata: IncidentMetadata,
}

impl DeviationRecord {
    pub fn new(
        id: impl Into<String>,
        raw_text: impl Into<String>,
        description: impl Into<String>,
        metadata: IncidentMetadata,
    ) -> Self {
        let raw_text = raw_text.into();
        Self {
            id: id.into(),
            normalized_text: normalize_text(&raw_text),
            raw_text,
            description: description.into(),
            metadata,
        }
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn normalized_text(&self) -> &str {
        &self.normalized_text
    }

    pub fn set_raw_text(&mut self, raw_text: impl Into<String>) {
        self.raw_text = raw_text.into();
        self.normalized_text = normalize_text(&self.raw_text);
    }
}

/// On-disk shape of a record; `normalized_text` is deliberately absent.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    raw_text: String,
    #[serde(default)]
    description: String,
    metadata: IncidentMetadata,
}

impl From<RecordLine> for DeviationRecord {
    fn from(line: RecordLine) -> Self {
        DeviationRecord::new(line.id, line.raw_text, line.description, line.metadata)
    }
}

impl Serialize for DeviationRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RecordLine {
            id: self.id.clone(),
            raw_text: self.raw_text.clone(),
            description: self.description.clone(),
            metadata: self.metadata.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DeviationRecord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        RecordLine::deserialize(d).map(Into::into)
    }
}

/// A broken invariant on a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Lists every invariant `record` breaks; empty when the record is valid.
pub fn validate_record(record: &DeviationRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push(Violation {
            field: "id",
            rule: "empty".into(),
        });
    }
    if record.description.trim().is_empty() {
        out.push(Violation {
            field: "description",
            rule: "empty".into(),
        });
    }
    if record.normalized_text != normalize_text(&record.raw_text) {
        out.push(Violation {
            field: "normalized_text",
            rule: "stale".into(),
        });
    }
    let mut seen = HashSet::new();
    for batch in &record.metadata.batches {
        if !seen.insert(batch.as_str()) {
            out.push(Violation {
                field: "batches",
                rule: format!("duplicate entry {batch}"),
            });
        }
    }
    out
}

/// An ordered, id-unique collection of records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    records: Vec<DeviationRecord>,
    pub source_path: String,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn from_records(records: Vec<DeviationRecord>, source_path: impl Into<String>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            source_path: source_path.into(),
        })
    }

    pub fn records(&self) -> &[DeviationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DeviationRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    /// Replaces the description of `id`, returning the previous one.
    pub fn set_description(&mut self, id: &str, description: String) -> Option<String> {
        self.records
            .iter_mut()
            .find(|r| r.id == id)
            .map(|r| std::mem::replace(&mut r.description, description))
    }

    /// Writes the corpus in the line-delimited file format.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let file = fs::File::create(path)?;
        self.write_to(io::BufWriter::new(file))?;
        Ok(())
    }
}

/// Parses a corpus from a reader; `source` is recorded as provenance.
pub fn read_corpus<R: BufRead>(reader: R, source: &str) -> Result<Corpus, CorpusError> {
    let mut records: Vec<DeviationRecord> = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DeviationRecord = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line_no,
            reason: e.to_string(),
        })?;
        // An empty description is legal at ingest; build_index rejects it.
        if let Some(v) = validate_record(&record).into_iter().find(|v| v.field != "description") {
            return Err(CorpusError::MalformedRecord {
                line_no,
                reason: v.to_string(),
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId(record.id));
        }
        records.push(record);
    }
    Ok(Corpus {
        records,
        source_path: source.to_string(),
    })
}

/// Loads a line-delimited corpus file, preserving file order.
pub fn ingest_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

/// Parses a date in any recognized spelling; used by metadata filters.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    dates::parse_exact(raw)
}
