//! Three-level grading of extraction results and per-task count reports.
//!
//! The automatic rubric is deterministic; a human-maintained override table
//! takes precedence for any (record, task) it lists.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, Corpus, IncidentMetadata, QualityImpact};
use crate::extraction::{ExtractionResult, ExtractionTask, ParsedValue};

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("duplicate score for record {record_id}, task {task}, provider {provider_id}")]
    DuplicateScored {
        record_id: String,
        task: ExtractionTask,
        provider_id: String,
    },
    #[error("{count} scored records for provider {provider_id}, task {task} exceed corpus size {corpus_size}")]
    TooManyScored {
        provider_id: String,
        task: ExtractionTask,
        count: usize,
        corpus_size: usize,
    },
    #[error("override table line {line_no}: {reason}")]
    BadOverride { line_no: usize, reason: String },
    #[error("unknown record id {0}")]
    UnknownRecord(String),
    #[error("override io: {0}")]
    Io(#[from] io::Error),
}

/// Ordered so that `Accurate > Acceptable > Inaccurate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    Inaccurate,
    Acceptable,
    Accurate,
}

impl Score {
    pub fn as_str(self) -> &'static str {
        match self {
            Score::Accurate => "accurate",
            Score::Acceptable => "acceptable",
            Score::Inaccurate => "inaccurate",
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Score {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "accurate" => Ok(Score::Accurate),
            "acceptable" => Ok(Score::Acceptable),
            "inaccurate" => Ok(Score::Inaccurate),
            other => Err(format!("unknown score {other:?}")),
        }
    }
}

/// Root-cause F1 thresholds. Calibration constants, not measured values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricConfig {
    pub accurate_f1: f64,
    pub acceptable_f1: f64,
}

impl Default for RubricConfig {
    fn default() -> Self {
        Self {
            accurate_f1: 0.8,
            acceptable_f1: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub score: Score,
    pub note: String,
}

/// Human verdicts keyed by (record id, task).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverrideTable {
    entries: HashMap<(String, ExtractionTask), Override>,
}

impl OverrideTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record_id: &str, task: ExtractionTask, score: Score, note: &str) {
        self.entries.insert(
            (record_id.to_string(), task),
            Override {
                score,
                note: note.to_string(),
            },
        );
    }

    pub fn get(&self, record_id: &str, task: ExtractionTask) -> Option<&Override> {
        self.entries.get(&(record_id.to_string(), task))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tab-separated lines: record_id, task, score, note. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, EvaluationError> {
        let mut table = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(4, '\t');
            let bad = |reason: String| EvaluationError::BadOverride { line_no, reason };
            let record_id = cols.next().unwrap_or("").trim();
            let task = cols.next().ok_or_else(|| bad("missing task".into()))?;
            let score = cols.next().ok_or_else(|| bad("missing score".into()))?;
            let note = cols.next().unwrap_or("").trim();
            if record_id.is_empty() {
                return Err(bad("empty record id".into()));
            }
            let task: ExtractionTask = task
                .parse()
                .map_err(|e: crate::extraction::ExtractionError| bad(e.to_string()))?;
            let score: Score = score.parse().map_err(bad)?;
            table.insert(record_id, task, score, note);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvaluationError> {
        Self::read(BufReader::new(fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub record_id: String,
    pub task: ExtractionTask,
    pub provider_id: String,
    pub score: Score,
    pub rationale: String,
    pub overridden: bool,
}

/// Multiset token-overlap F1 over whitespace tokens of the normalized texts.
/// Two empty texts agree perfectly; one empty text scores zero.
pub fn token_f1(predicted: &str, truth: &str) -> f64 {
    let p = normalize_text(predicted);
    let t = normalize_text(truth);
    let p: Vec<&str> = p.split(' ').filter(|s| !s.is_empty()).collect();
    let t: Vec<&str> = t.split(' ').filter(|s| !s.is_empty()).collect();
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    if p.is_empty() || t.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in &t {
        *counts.entry(tok).or_default() += 1;
    }
    let mut overlap = 0usize;
    for tok in &p {
        if let Some(c) = counts.get_mut(tok) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (p.len() + t.len()) as f64
}

fn batch_key(b: &str) -> String {
    b.trim().to_uppercase()
}

/// Grades one result. Overrides win; otherwise the per-task rule applies.
pub fn score_field(
    task: ExtractionTask,
    result: &ExtractionResult,
    truth: &IncidentMetadata,
    overrides: &OverrideTable,
    rubric: &RubricConfig,
) -> ScoredResult {
    let scored = |score: Score, rationale: String, overridden: bool| ScoredResult {
        record_id: result.record_id.clone(),
        task,
        provider_id: result.provider_id.clone(),
        score,
        rationale,
        overridden,
    };
    if let Some(o) = overrides.get(&result.record_id, task) {
        return scored(o.score, format!("override: {}", o.note), true);
    }
    let (score, rationale) = match (task, &result.parsed) {
        (ExtractionTask::OccurrenceDate, ParsedValue::Date(d)) => {
            if *d == truth.occurrence_date {
                (Score::Accurate, "date: exact match".to_string())
            } else {
                (Score::Inaccurate, format!("date: {d} != {}", truth.occurrence_date))
            }
        }
        (ExtractionTask::Site, ParsedValue::Site(s)) => {
            let got = normalize_text(s);
            let want = normalize_text(&truth.site);
            if got == want {
                (Score::Accurate, "site: normalized match".into())
            } else if !got.is_empty() && !want.is_empty() && (got.contains(&want) || want.contains(&got)) {
                (Score::Acceptable, "site: partial containment".into())
            } else {
                (Score::Inaccurate, "site: mismatch".into())
            }
        }
        (ExtractionTask::Batches, ParsedValue::Batches(got)) => {
            let got: HashSet<String> = got.iter().map(|b| batch_key(b)).collect();
            let want: HashSet<String> = truth.batches.iter().map(|b| batch_key(b)).collect();
            if got == want {
                (Score::Accurate, "batches: set equality".into())
            } else if got.intersection(&want).next().is_some() {
                (Score::Acceptable, "batches: partial overlap".into())
            } else {
                (Score::Inaccurate, "batches: disjoint".into())
            }
        }
        (ExtractionTask::QualityImpact, ParsedValue::QualityImpact(q)) => {
            if *q == truth.quality_impact {
                (Score::Accurate, "quality_impact: exact match".into())
            } else if truth.quality_impact == QualityImpact::Indeterminate {
                (Score::Acceptable, "quality_impact: ground truth indeterminate".into())
            } else {
                (
                    Score::Inaccurate,
                    format!("quality_impact: {q} != {}", truth.quality_impact),
                )
            }
        }
        (ExtractionTask::RootCause, ParsedValue::Text(text)) => {
            let f1 = token_f1(text, &truth.root_cause);
            if f1 >= rubric.accurate_f1 {
                (
                    Score::Accurate,
                    format!("root_cause: f1 {f1:.3} >= {}", rubric.accurate_f1),
                )
            } else if f1 >= rubric.acceptable_f1 {
                (
                    Score::Acceptable,
                    format!("root_cause: f1 {f1:.3} >= {}", rubric.acceptable_f1),
                )
            } else {
                (
                    Score::Inaccurate,
                    format!("root_cause: f1 {f1:.3} < {}", rubric.acceptable_f1),
                )
            }
        }
        (ExtractionTask::OccurrenceDate, ParsedValue::Unparsed(_)) => (Score::Inaccurate, "date: unparsed".into()),
        _ => (Score::Inaccurate, format!("{task}: parsed value has wrong shape")),
    };
    scored(score, rationale, false)
}

/// Grades a batch of results against the corpus ground truth.
pub fn score_results(
    results: &[ExtractionResult],
    corpus: &Corpus,
    overrides: &OverrideTable,
    rubric: &RubricConfig,
) -> Result<Vec<ScoredResult>, EvaluationError> {
    results
        .iter()
        .map(|r| {
            let record = corpus
                .get(&r.record_id)
                .ok_or_else(|| EvaluationError::UnknownRecord(r.record_id.clone()))?;
            Ok(score_field(r.task, r, &record.metadata, overrides, rubric))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreCounts {
    pub accurate: usize,
    pub acceptable: usize,
    pub inaccurate: usize,
}

impl ScoreCounts {
    pub fn total(&self) -> usize {
        self.accurate + self.acceptable + self.inaccurate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub provider: String,
    pub task: ExtractionTask,
    #[serde(flatten)]
    pub counts: ScoreCounts,
}

/// Counts per (provider, task); every row sums to `corpus_size`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub corpus_size: usize,
    pub rows: Vec<ReportRow>,
}

impl EvaluationReport {
    pub fn get(&self, provider: &str, task: ExtractionTask) -> Option<ScoreCounts> {
        self.rows
            .iter()
            .find(|r| r.provider == provider && r.task == task)
            .map(|r| r.counts)
    }
}

/// Tallies scores per (provider, task). Pairs absent from `scored` count as
/// inaccurate ("missing").
pub fn aggregate_report(scored: &[ScoredResult], corpus_size: usize) -> Result<EvaluationReport, EvaluationError> {
    let mut seen = HashSet::new();
    let mut tallies: BTreeMap<(String, ExtractionTask), ScoreCounts> = BTreeMap::new();
    for s in scored {
        if !seen.insert((s.record_id.as_str(), s.task, s.provider_id.as_str())) {
            return Err(EvaluationError::DuplicateScored {
                record_id: s.record_id.clone(),
                task: s.task,
                provider_id: s.provider_id.clone(),
            });
        }
        let c = tallies.entry((s.provider_id.clone(), s.task)).or_default();
        match s.score {
            Score::Accurate => c.accurate += 1,
            Score::Acceptable => c.acceptable += 1,
            Score::Inaccurate => c.inaccurate += 1,
        }
    }
    let mut rows = Vec::with_capacity(tallies.len());
    for ((provider, task), mut counts) in tallies {
        let count = counts.total();
        if count > corpus_size {
            return Err(EvaluationError::TooManyScored {
                provider_id: provider,
                task,
                count,
                corpus_size,
            });
        }
        counts.inaccurate += corpus_size - count;
        rows.push(ReportRow { provider, task, counts });
    }
    Ok(EvaluationReport { corpus_size, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

pub const REPORT_CSV_HEADER: &str = "provider,task,accurate,acceptable,inaccurate";

/// Deterministic rendering, rows sorted by (provider, task number).
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    let mut rows: Vec<&ReportRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| a.provider.cmp(&b.provider).then(a.task.cmp(&b.task)));
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(REPORT_CSV_HEADER);
            out.push('\n');
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.provider, r.task, r.counts.accurate, r.counts.acceptable, r.counts.inaccurate
                );
            }
        }
        ReportFormat::Text => {
            let _ = writeln!(out, "corpus size: {}", report.corpus_size);
            let _ = writeln!(
                out,
                "{:<16} {:<16} {:>8} {:>10} {:>10}",
                "provider", "task", "accurate", "acceptable", "inaccurate"
            );
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<16} {:<16} {:>8} {:>10} {:>10}",
                    r.provider, r.task, r.counts.accurate, r.counts.acceptable, r.counts.inaccurate
                );
            }
        }
    }
    out
}
