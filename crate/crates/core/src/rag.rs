//! Zero-shot and retrieval-augmented answering over the incident corpus.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DeviationRecord};
use crate::embedding_index::{search, Index, IndexError, MetadataFilter, Metric, RetrievalHit, RetrievalQuery};
use crate::extraction::render_template;
use crate::llm_gateway::{Gateway, GatewayError, PromptBundle};

pub const ZERO_SHOT_INTRO: &str =
    "You are assisting with a pharmaceutical manufacturing deviation investigation. Answer the question.";

pub const DEFAULT_RAG_INTRO: &str = "You are assisting with a pharmaceutical manufacturing deviation \
investigation. Related historical investigation records are provided as context. Use them to answer \
the question and cite the record ids you relied on.";

pub const DEFAULT_DESCRIBE_INTRO: &str = "You are assisting with a pharmaceutical manufacturing \
deviation investigation. The full investigation report is provided as context.";

pub const DESCRIBE_QUESTION: &str =
    "Write a short one-paragraph description of the incident, without root cause or corrective actions.";

pub const DEFAULT_DOC_HEADER: &str = "[{{rank}}] record {{record_id}} (similarity {{similarity}})\n";

pub const TRUNCATION_MARKER: &str = " [truncated]";

pub const NO_RELATED_NOTICE: &str = "no related records found; answered zero-shot";

const DOC_SEPARATOR: &str = "\n";

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("hit refers to unknown record {0}")]
    UnknownRecordId(String),
    #[error("invalid context budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("audit log: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    ZeroShot,
    Rag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerWithCitations {
    pub text: String,
    pub cited_record_ids: Vec<String>,
    pub mode: AnswerMode,
    /// Hits whose records were placed in the context, in rank order.
    pub hits: Vec<RetrievalHit>,
    pub provider_id: String,
    /// The exact bundle sent to the generator, kept for audit.
    pub prompt: PromptBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBudget {
    pub max_chars: usize,
    /// Template with `{{rank}}`, `{{record_id}}` and `{{similarity}}`.
    pub per_doc_header: String,
}

impl Default for ContextBudget {
    fn default() -> Self {
        Self {
            max_chars: 8000,
            per_doc_header: DEFAULT_DOC_HEADER.to_string(),
        }
    }
}

impl ContextBudget {
    pub fn new(max_chars: usize) -> Self {
        Self {
            max_chars,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RagError> {
        if !self.per_doc_header.contains("{{record_id}}") {
            return Err(RagError::InvalidBudget("header must contain {{record_id}}".into()));
        }
        if self.max_chars < self.per_doc_header.chars().count() {
            return Err(RagError::InvalidBudget(format!(
                "max_chars {} is shorter than the document header",
                self.max_chars
            )));
        }
        Ok(())
    }

    fn header(&self, hit: &RetrievalHit) -> Result<String, RagError> {
        let rank = hit.rank.to_string();
        let sim = format!("{:.4}", hit.similarity);
        render_template(
            &self.per_doc_header,
            &[("rank", &rank), ("record_id", &hit.record_id), ("similarity", &sim)],
        )
        .map_err(|e| RagError::InvalidBudget(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledContext {
    pub text: String,
    /// Number of leading hits whose records made it into `text`.
    pub included: usize,
    pub truncated: bool,
}

fn take_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Packs whole records in rank order until the next would overflow
/// `max_chars`. The rank-1 record is always present, truncated with a
/// marker if it alone is too long.
pub fn assemble_context(
    hits: &[RetrievalHit],
    corpus: &Corpus,
    budget: &ContextBudget,
) -> Result<AssembledContext, RagError> {
    budget.validate()?;
    let records: Vec<&DeviationRecord> = hits
        .iter()
        .map(|h| {
            corpus
                .get(&h.record_id)
                .ok_or_else(|| RagError::UnknownRecordId(h.record_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut text = String::new();
    let mut used = 0usize;
    let mut included = 0usize;
    let mut truncated = false;
    for (hit, record) in hits.iter().zip(records) {
        let header = budget.header(hit)?;
        let body = record.normalized_text();
        let sep = if included == 0 { 0 } else { DOC_SEPARATOR.len() };
        let need = sep + header.chars().count() + body.chars().count();
        if used + need <= budget.max_chars {
            if included > 0 {
                text.push_str(DOC_SEPARATOR);
            }
            text.push_str(&header);
            text.push_str(body);
            used += need;
            included += 1;
            continue;
        }
        if included == 0 {
            let fixed = header.chars().count() + TRUNCATION_MARKER.chars().count();
            if fixed <= budget.max_chars {
                text.push_str(&header);
                text.push_str(take_chars(body, budget.max_chars - fixed));
                text.push_str(TRUNCATION_MARKER);
            } else {
                text.push_str(take_chars(&header, budget.max_chars));
            }
            included = 1;
            truncated = true;
        }
        break;
    }
    Ok(AssembledContext {
        text,
        included,
        truncated,
    })
}

/// Retrieval settings for a question; the question itself is the query text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOptions {
    #[serde(default = "default_rag_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub phrase_filters: Vec<String>,
    #[serde(default)]
    pub metadata_filters: Vec<MetadataFilter>,
    #[serde(default)]
    pub min_similarity: Option<f64>,
    #[serde(default)]
    pub metric: Metric,
}

fn default_rag_top_k() -> usize {
    3
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            top_k: default_rag_top_k(),
            phrase_filters: Vec::new(),
            metadata_filters: Vec::new(),
            min_similarity: None,
            metric: Metric::Cosine,
        }
    }
}

impl RetrievalOptions {
    pub fn query(&self, question: &str) -> RetrievalQuery {
        RetrievalQuery {
            text: question.to_string(),
            top_k: self.top_k,
            phrase_filters: self.phrase_filters.clone(),
            metadata_filters: self.metadata_filters.clone(),
            min_similarity: self.min_similarity,
            metric: self.metric,
        }
    }
}

/// What will be sent to the generator for a question.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerPlan {
    pub mode: AnswerMode,
    pub bundle: PromptBundle,
    pub hits: Vec<RetrievalHit>,
    pub notice: Option<String>,
}

pub fn zero_shot_bundle(question: &str) -> Result<PromptBundle, RagError> {
    if question.trim().is_empty() {
        return Err(RagError::EmptyQuestion);
    }
    Ok(PromptBundle::new(ZERO_SHOT_INTRO, "", question)?)
}

/// Retrieves, packs context and builds the bundle without calling the
/// generator.
pub fn plan_answer(
    question: &str,
    index: &Index,
    corpus: &Corpus,
    embedder: &Gateway,
    opts: &RetrievalOptions,
    budget: &ContextBudget,
    rag_intro: &str,
) -> Result<AnswerPlan, RagError> {
    if question.trim().is_empty() {
        return Err(RagError::EmptyQuestion);
    }
    budget.validate()?;
    let hits = search(index, corpus, &opts.query(question), embedder)?;
    if hits.is_empty() {
        return Ok(AnswerPlan {
            mode: AnswerMode::ZeroShot,
            bundle: zero_shot_bundle(question)?,
            hits,
            notice: Some(NO_RELATED_NOTICE.to_string()),
        });
    }
    let ctx = assemble_context(&hits, corpus, budget)?;
    let mut hits = hits;
    hits.truncate(ctx.included);
    Ok(AnswerPlan {
        mode: AnswerMode::Rag,
        bundle: PromptBundle::new(rag_intro, ctx.text, question)?,
        hits,
        notice: None,
    })
}

fn finish(plan: AnswerPlan, chat: &Gateway) -> Result<AnswerWithCitations, RagError> {
    let outcome = chat.chat(&plan.bundle)?;
    Ok(AnswerWithCitations {
        text: outcome.text,
        cited_record_ids: plan.hits.iter().map(|h| h.record_id.clone()).collect(),
        mode: plan.mode,
        hits: plan.hits,
        provider_id: outcome.provider_id,
        prompt: plan.bundle,
        notice: plan.notice,
    })
}

/// Asks the question with no supporting context.
pub fn answer_zero_shot(question: &str, chat: &Gateway) -> Result<AnswerWithCitations, RagError> {
    let plan = AnswerPlan {
        mode: AnswerMode::ZeroShot,
        bundle: zero_shot_bundle(question)?,
        hits: Vec::new(),
        notice: None,
    };
    finish(plan, chat)
}

/// Retrieves related records, supplies them as context, and asks. Falls
/// back to zero-shot (with a notice) when nothing is retrieved.
#[allow(clippy::too_many_arguments)]
pub fn answer_with_retrieval(
    question: &str,
    index: &Index,
    corpus: &Corpus,
    chat: &Gateway,
    embedder: &Gateway,
    opts: &RetrievalOptions,
    budget: &ContextBudget,
    rag_intro: &str,
) -> Result<AnswerWithCitations, RagError> {
    let plan = plan_answer(question, index, corpus, embedder, opts, budget, rag_intro)?;
    finish(plan, chat)
}

pub fn describe_bundle(record: &DeviationRecord, intro: Option<&str>) -> Result<PromptBundle, RagError> {
    Ok(PromptBundle::new(
        intro.unwrap_or(DEFAULT_DESCRIBE_INTRO),
        record.normalized_text(),
        DESCRIBE_QUESTION,
    )?)
}

/// Asks the model for a candidate description. The record is not modified;
/// accepting the draft is the caller's decision.
pub fn draft_description(record: &DeviationRecord, chat: &Gateway, intro: Option<&str>) -> Result<String, RagError> {
    Ok(chat.chat(&describe_bundle(record, intro)?)?.text)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: String,
    pub mode: AnswerMode,
    pub question_digest: String,
    pub cited_record_ids: Vec<String>,
    pub provider_id: String,
}

impl AuditEntry {
    pub fn for_answer(answer: &AnswerWithCitations) -> Self {
        use sha2::{Digest, Sha256};
        Self {
            timestamp: chrono::Utc::now().to_rfc3339(),
            mode: answer.mode,
            question_digest: hex::encode(Sha256::digest(answer.prompt.question.as_bytes())),
            cited_record_ids: answer.cited_record_ids.clone(),
            provider_id: answer.provider_id.clone(),
        }
    }
}

/// Append-only JSON-lines audit trail of answers.
#[derive(Debug)]
pub struct AuditLog {
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RagError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Mutex::new(file) })
    }

    pub fn record(&self, answer: &AnswerWithCitations) -> Result<(), RagError> {
        let mut line = serde_json::to_vec(&AuditEntry::for_answer(answer)).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IncidentMetadata, QualityImpact};
    use crate::llm_gateway::TranscriptStore;
    use chrono::NaiveDate;

    fn record(id: &str, text: &str) -> DeviationRecord {
        DeviationRecord::new(
            id,
            text,
            "desc",
            IncidentMetadata {
                occurrence_date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
                site: "s".into(),
                batches: vec![],
                quality_impact: QualityImpact::Indeterminate,
                root_cause: "r".into(),
                product_line: "p".into(),
                extra: Default::default(),
            },
        )
    }

    fn corpus() -> Corpus {
        Corpus::from_records(
            vec![
                record("a", &"x".repeat(40)),
                record("b", &"y".repeat(40)),
                record("c", &"z".repeat(40)),
            ],
            "mem",
        )
        .unwrap()
    }

    fn hits() -> Vec<RetrievalHit> {
        ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, id)| RetrievalHit {
                record_id: id.to_string(),
                similarity: 0.9 - i as f64 / 10.0,
                rank: i + 1,
            })
            .collect()
    }

    #[test]
    fn packs_all_when_budget_large() {
        let ctx = assemble_context(&hits(), &corpus(), &ContextBudget::new(10_000)).unwrap();
        assert_eq!(ctx.included, 3);
        assert!(!ctx.truncated);
        let pa = ctx.text.find("record a").unwrap();
        let pb = ctx.text.find("record b").unwrap();
        let pc = ctx.text.find("record c").unwrap();
        assert!(pa < pb && pb < pc);
    }

    #[test]
    fn whole_document_packing() {
        let one = assemble_context(&hits()[..1], &corpus(), &ContextBudget::new(10_000)).unwrap();
        let budget = ContextBudget::new(one.text.chars().count() + 10);
        let ctx = assemble_context(&hits(), &corpus(), &budget).unwrap();
        assert_eq!(ctx.included, 1);
        assert_eq!(ctx.text, one.text);
        assert!(!ctx.text.contains("record b"));
    }

    #[test]
    fn rank_one_overflow_truncates() {
        let budget = ContextBudget::new(60);
        let ctx = assemble_context(&hits(), &corpus(), &budget).unwrap();
        assert_eq!(ctx.included, 1);
        assert!(ctx.truncated);
        assert!(ctx.text.ends_with(TRUNCATION_MARKER));
        assert!(ctx.text.contains("record a"));
        assert!(ctx.text.chars().count() <= 60);
    }

    #[test]
    fn unknown_hit_and_bad_budget() {
        let mut h = hits();
        h[1].record_id = "zz".into();
        assert!(matches!(
            assemble_context(&h, &corpus(), &ContextBudget::new(1000)),
            Err(RagError::UnknownRecordId(id)) if id == "zz"
        ));
        let bad = ContextBudget {
            max_chars: 1000,
            per_doc_header: "no id".into(),
        };
        assert!(assemble_context(&hits(), &corpus(), &bad).is_err());
        assert!(assemble_context(&hits(), &corpus(), &ContextBudget::new(3)).is_err());
    }

    #[test]
    fn zero_shot_contract() {
        let q = "what is a deviation?";
        let mut store = TranscriptStore::new();
        store.script(&zero_shot_bundle(q).unwrap(), "an unplanned departure", None);
        let gw = Gateway::with_transcripts("replay", store);
        let a = answer_zero_shot(q, &gw).unwrap();
        assert_eq!(a.mode, AnswerMode::ZeroShot);
        assert!(a.cited_record_ids.is_empty() && a.hits.is_empty());
        assert_eq!(a.prompt.context, "");
        assert_eq!(a, answer_zero_shot(q, &gw).unwrap());
        assert!(matches!(answer_zero_shot(" ", &gw), Err(RagError::EmptyQuestion)));
    }

    #[test]
    fn audit_log_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&path).unwrap();
        let answer = AnswerWithCitations {
            text: "t".into(),
            cited_record_ids: vec!["a".into()],
            mode: AnswerMode::Rag,
            hits: vec![],
            provider_id: "replay".into(),
            prompt: PromptBundle::new("i", "c", "q").unwrap(),
            notice: None,
        };
        log.record(&answer).unwrap();
        log.record(&answer).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let e: AuditEntry = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(e.cited_record_ids, ["a"]);
        assert_eq!(e.mode, AnswerMode::Rag);
    }
}
