//! Exact embedding index over incident descriptions.
//!
//! Scores are computed with a plain sequential dot product and cached
//! sequential norms, so a query equal to a stored description reproduces
//! that record's matrix row bit-for-bit. Search is a brute-force scan with
//! phrase and metadata pre-filters; ties break on record id ascending.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{normalize_text, parse_date, Corpus, DeviationRecord};
use crate::llm_gateway::{EmbeddingVector, Gateway, GatewayError};

const MAGIC: &[u8; 4] = b"DVIX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("record {0} has no description")]
    MissingDescription(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("index and corpus disagree: {0}")]
    InconsistentIndex(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("index file version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("index file checksum mismatch")]
    ChecksumMismatch,
    #[error("index file malformed: {0}")]
    Format(String),
    #[error("index io: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += x * y;
    }
    sum
}

fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum += d * d;
    }
    sum.sqrt()
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, IndexError> {
    if a.dimension() != b.dimension() {
        return Err(IndexError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(IndexError::ZeroVector);
    }
    Ok(cosine_with_norms(a.values(), na, b.values(), nb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub record_id: String,
    pub vector: EmbeddingVector,
    pub norm: f64,
}

impl IndexEntry {
    pub fn new(record_id: impl Into<String>, vector: EmbeddingVector) -> Result<Self, IndexError> {
        let norm = vector.norm();
        if norm == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        Ok(Self {
            record_id: record_id.into(),
            vector,
            norm,
        })
    }
}

/// Ranking metric. `L2` reports `1 / (1 + distance)` as the similarity so
/// the ranking contract (higher is better) is unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    L2,
}

/// One embedding per record, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub provider_id: String,
    pub dimension: usize,
    entries: Vec<IndexEntry>,
}

impl Index {
    pub fn from_entries(
        provider_id: impl Into<String>,
        dimension: usize,
        entries: Vec<IndexEntry>,
    ) -> Result<Self, IndexError> {
        if let Some(e) = entries.iter().find(|e| e.vector.dimension() != dimension) {
            return Err(IndexError::DimensionMismatch(dimension, e.vector.dimension()));
        }
        Ok(Self {
            provider_id: provider_id.into(),
            dimension,
            entries,
        })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.record_id.as_str()).collect()
    }

    /// All pairwise cosines; the upper triangle is computed once and mirrored.
    pub fn pairwise_matrix(&self) -> Result<SimilarityMatrix, IndexError> {
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let n = self.entries.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let a = &self.entries[i];
            for j in i..n {
                let b = &self.entries[j];
                let s = cosine_with_norms(a.vector.values(), a.norm, b.vector.values(), b.norm);
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        Ok(SimilarityMatrix {
            ids: self.entries.iter().map(|e| e.record_id.clone()).collect(),
            values,
        })
    }

    fn check_consistent(&self, corpus: &Corpus) -> Result<(), IndexError> {
        if self.entries.len() != corpus.len() {
            return Err(IndexError::InconsistentIndex(format!(
                "index has {} entries, corpus has {} records",
                self.entries.len(),
                corpus.len()
            )));
        }
        let ids: std::collections::HashSet<&str> = corpus.ids().collect();
        for e in &self.entries {
            if !ids.contains(e.record_id.as_str()) {
                return Err(IndexError::InconsistentIndex(format!(
                    "index entry {} not in corpus",
                    e.record_id
                )));
            }
        }
        Ok(())
    }

    /// Ranks filtered records against an already-embedded query.
    pub fn search_vector(
        &self,
        corpus: &Corpus,
        query_vector: &EmbeddingVector,
        query: &RetrievalQuery,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        query.validate()?;
        self.check_consistent(corpus)?;
        if query_vector.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch(self.dimension, query_vector.dimension()));
        }
        let qn = query_vector.norm();
        if qn == 0.0 {
            return Err(IndexError::ZeroVector);
        }
        let phrases: Vec<String> = query.phrase_filters.iter().map(|p| normalize_text(p)).collect();
        let records: HashMap<&str, &DeviationRecord> = corpus.records().iter().map(|r| (r.id.as_str(), r)).collect();

        let mut scored: Vec<(&str, f64)> = Vec::new();
        for e in &self.entries {
            let record = records[e.record_id.as_str()];
            if !phrases.iter().all(|p| record.normalized_text().contains(p.as_str())) {
                continue;
            }
            if !query.metadata_filters.iter().all(|f| f.matches(record)) {
                continue;
            }
            let s = match query.metric {
                Metric::Cosine => cosine_with_norms(query_vector.values(), qn, e.vector.values(), e.norm),
                Metric::L2 => 1.0 / (1.0 + l2_distance(query_vector.values(), e.vector.values())),
            };
            if query.min_similarity.is_some_and(|min| s < min) {
                continue;
            }
            scored.push((e.record_id.as_str(), s));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(scored
            .into_iter()
            .take(query.top_k)
            .enumerate()
            .map(|(i, (id, s))| RetrievalHit {
                record_id: id.to_string(),
                similarity: s,
                rank: i + 1,
            })
            .collect())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), IndexError> {
        let mut payload = Vec::with_capacity(self.entries.len() * (self.dimension * 8 + 16));
        for e in &self.entries {
            payload.extend_from_slice(&(e.record_id.len() as u32).to_le_bytes());
            payload.extend_from_slice(e.record_id.as_bytes());
            for v in e.vector.values() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut header = Vec::with_capacity(24 + self.provider_id.len());
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        header.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        header.extend_from_slice(&(self.provider_id.len() as u32).to_le_bytes());
        header.extend_from_slice(self.provider_id.as_bytes());
        let checksum = Sha256::new().chain_update(&header).chain_update(&payload).finalize();
        w.write_all(&header)?;
        w.write_all(&checksum)?;
        w.write_all(&payload)?;
        w.flush()?;
        Ok(())
    }

    /// Parses an index file image. Nothing is returned unless the whole
    /// image verifies.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut cur = Cursor { buf: bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::FormatVersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dimension = cur.u32()? as usize;
        let count = cur.u64()? as usize;
        let provider_len = cur.u32()? as usize;
        let provider_raw = cur.take(provider_len)?;
        let header = &bytes[..cur.pos];
        let checksum = cur.take(32)?;
        let payload = &bytes[cur.pos..];
        if Sha256::new()
            .chain_update(header)
            .chain_update(payload)
            .finalize()
            .as_slice()
            != checksum
        {
            return Err(IndexError::ChecksumMismatch);
        }
        let provider_id = String::from_utf8(provider_raw.to_vec())
            .map_err(|_| IndexError::Format("provider id is not UTF-8".into()))?;
        if dimension == 0 {
            return Err(IndexError::Format("zero dimension".into()));
        }
        let mut body = Cursor { buf: payload, pos: 0 };
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let id_len = body.u32()? as usize;
            let id = String::from_utf8(body.take(id_len)?.to_vec())
                .map_err(|_| IndexError::Format(format!("entry {i}: id is not UTF-8")))?;
            let raw = body.take(dimension * 8).map_err(|_| {
                IndexError::Format(format!("entry {i} ({id}): vector shorter than dimension {dimension}"))
            })?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let vector =
                EmbeddingVector::new(values).map_err(|e| IndexError::Format(format!("entry {i} ({id}): {e}")))?;
            entries.push(IndexEntry::new(id, vector).map_err(|e| IndexError::Format(e.to_string()))?);
        }
        if body.pos != payload.len() {
            return Err(IndexError::Format(format!(
                "{} trailing bytes after {count} entries",
                payload.len() - body.pos
            )));
        }
        Index::from_entries(provider_id, dimension, entries)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Format(format!("unexpected end of data at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_index(index: &Index, path: impl AsRef<Path>) -> Result<(), IndexError> {
    let file = fs::File::create(path)?;
    index.write_to(io::BufWriter::new(file))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<Index, IndexError> {
    Index::from_bytes(&fs::read(path)?)
}

/// Embeds every record's normalized description.
pub fn build_index(corpus: &Corpus, embedder: &Gateway) -> Result<Index, IndexError> {
    let mut texts = Vec::with_capacity(corpus.len());
    for r in corpus.records() {
        let text = normalize_text(&r.description);
        if text.is_empty() {
            return Err(IndexError::MissingDescription(r.id.clone()));
        }
        texts.push(text);
    }
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        embedder.embed_batch(&texts)?
    };
    let entries = corpus
        .records()
        .iter()
        .zip(vectors)
        .map(|(r, v)| IndexEntry::new(r.id.clone(), v))
        .collect::<Result<Vec<_>, _>>()?;
    Index::from_entries(embedder.id(), embedder.config().dimension, entries)
}

/// Embeds `query.text` and ranks the corpus against it.
pub fn search(
    index: &Index,
    corpus: &Corpus,
    query: &RetrievalQuery,
    embedder: &Gateway,
) -> Result<Vec<RetrievalHit>, IndexError> {
    query.validate()?;
    if embedder.id() != index.provider_id {
        return Err(IndexError::InconsistentIndex(format!(
            "index built with provider {}, query embedder is {}",
            index.provider_id,
            embedder.id()
        )));
    }
    let qv = embedder.embed_one(&normalize_text(&query.text))?;
    index.search_vector(corpus, &qv, query)
}

/// Symmetric n x n cosine map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Statistics over the off-diagonal entries, for threshold calibration.
    pub fn off_diagonal_summary(&self) -> Option<ScoreSummary> {
        let n = self.ids.len();
        let mut v: Vec<f64> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let pct = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Some(ScoreSummary {
            pairs: v.len(),
            min: v[0],
            p25: pct(0.25),
            median: pct(0.5),
            p75: pct(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    /// CSV with a header row of ids; six decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.row(i) {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreSummary {
    pub pairs: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
    pub mean: f64,
}

/// Fields of [`crate::corpus::IncidentMetadata`] a filter may target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FilterField {
    OccurrenceDate,
    Site,
    Batches,
    QualityImpact,
    RootCause,
    ProductLine,
    Extra(String),
}

impl FromStr for FilterField {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "occurrence_date" => FilterField::OccurrenceDate,
            "site" => FilterField::Site,
            "batches" => FilterField::Batches,
            "quality_impact" => FilterField::QualityImpact,
            "root_cause" => FilterField::RootCause,
            "product_line" => FilterField::ProductLine,
            other => match other.strip_prefix("extra.") {
                Some(key) if !key.is_empty() => FilterField::Extra(key.to_string()),
                _ => return Err(IndexError::InvalidQuery(format!("unknown filter field {other:?}"))),
            },
        })
    }
}

impl TryFrom<String> for FilterField {
    type Error = IndexError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<FilterField> for String {
    fn from(f: FilterField) -> String {
        f.to_string()
    }
}

impl fmt::Display for FilterField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterField::OccurrenceDate => f.write_str("occurrence_date"),
            FilterField::Site => f.write_str("site"),
            FilterField::Batches => f.write_str("batches"),
            FilterField::QualityImpact => f.write_str("quality_impact"),
            FilterField::RootCause => f.write_str("root_cause"),
            FilterField::ProductLine => f.write_str("product_line"),
            FilterField::Extra(k) => write!(f, "extra.{k}"),
        }
    }
}

/// Requires a metadata field to equal `value`. Text comparisons are on
/// normalized text; `batches` matches if any batch equals the value
/// (case-insensitive); dates accept any recognized spelling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataFilter {
    pub field: FilterField,
    pub value: String,
}

impl MetadataFilter {
    pub fn new(field: &str, value: &str) -> Result<Self, IndexError> {
        Ok(Self {
            field: field.parse()?,
            value: value.to_string(),
        })
    }

    pub fn matches(&self, record: &DeviationRecord) -> bool {
        let m = &record.metadata;
        let want = normalize_text(&self.value);
        match &self.field {
            FilterField::OccurrenceDate => parse_date(&self.value) == Some(m.occurrence_date),
            FilterField::Site => normalize_text(&m.site) == want,
            FilterField::Batches => m
                .batches
                .iter()
                .any(|b| b.trim().eq_ignore_ascii_case(self.value.trim())),
            FilterField::QualityImpact => m.quality_impact.as_str() == want,
            FilterField::RootCause => normalize_text(&m.root_cause) == want,
            FilterField::ProductLine => normalize_text(&m.product_line) == want,
            FilterField::Extra(k) => m.extra.get(k).is_some_and(|v| normalize_text(v) == want),
        }
    }
}

impl FromStr for MetadataFilter {
    type Err = IndexError;

    /// Parses `field=value`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (field, value) = s
            .split_once('=')
            .ok_or_else(|| IndexError::InvalidQuery(format!("filter {s:?} is not field=value")))?;
        MetadataFilter::new(field, value)
    }
}

fn default_top_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub text: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Phrases that must occur in the record's normalized report text.
    #[serde(default)]
    pub phrase_filters: Vec<String>,
    #[serde(default)]
    pub metadata_filters: Vec<MetadataFilter>,
    #[serde(default)]
    pub min_similarity: Option<f64>,
    #[serde(default)]
    pub metric: Metric,
}

impl RetrievalQuery {
    pub fn new(text: impl Into<String>, top_k: usize) -> Self {
        Self {
            text: text.into(),
            top_k,
            phrase_filters: Vec::new(),
            metadata_filters: Vec::new(),
            min_similarity: None,
            metric: Metric::Cosine,
        }
    }

    pub fn with_phrase(mut self, phrase: impl Into<String>) -> Self {
        self.phrase_filters.push(phrase.into());
        self
    }

    pub fn with_filter(mut self, filter: MetadataFilter) -> Self {
        self.metadata_filters.push(filter);
        self
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        if self.top_k == 0 {
            return Err(IndexError::InvalidQuery("top_k must be at least 1".into()));
        }
        if let Some(min) = self.min_similarity {
            if !(-1.0..=1.0).contains(&min) {
                return Err(IndexError::InvalidQuery(format!(
                    "min_similarity {min} outside [-1, 1]"
                )));
            }
        }
        if self.phrase_filters.iter().any(|p| normalize_text(p).is_empty()) {
            return Err(IndexError::InvalidQuery("empty phrase filter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub record_id: String,
    pub similarity: f64,
    pub rank: usize,
}
