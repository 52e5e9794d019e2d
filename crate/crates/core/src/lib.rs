//! Tooling for manufacturing deviation investigations: a corpus of
//! historical incident reports, LLM-backed extraction of incident details
//! with a graded evaluation harness, and embedding retrieval of related
//! incidents feeding retrieval-augmented answers.
//!
//! Every provider has an offline counterpart (replayed transcripts and a
//! feature-hash embedder), so the whole pipeline runs deterministically
//! without network access.

pub mod corpus;
mod dates;
pub mod embedding_index;
pub mod evaluation;
pub mod extraction;
pub mod llm_gateway;
pub mod rag;

pub use corpus::{
    ingest_corpus, normalize_text, validate_record, Corpus, CorpusError, DeviationRecord, IncidentMetadata,
    QualityImpact, Violation,
};
pub use dates::{find_first as find_first_date, format_day_month_year};
pub use embedding_index::{
    build_index, cosine_similarity, load_index, save_index, search, FilterField, Index, IndexEntry, IndexError,
    MetadataFilter, Metric, RetrievalHit, RetrievalQuery, SimilarityMatrix,
};
pub use evaluation::{
    aggregate_report, render_report, score_field, score_results, token_f1, EvaluationError, EvaluationReport,
    OverrideTable, ReportFormat, RubricConfig, Score, ScoreCounts, ScoredResult,
};
pub use extraction::{
    build_prompt, extract, parse_answer, run_extraction, AnswerParser, ExtractionError, ExtractionResult,
    ExtractionRun, ExtractionTask, ParsedValue, TemplateSet,
};
pub use llm_gateway::{
    hash_embed, ChatOutcome, EmbeddingVector, Gateway, GatewayError, PromptBundle, ProviderConfig, ProviderKind,
    TranscriptStore,
};
pub use rag::{
    answer_with_retrieval, answer_zero_shot, assemble_context, draft_description, AnswerMode, AnswerWithCitations,
    AuditLog, ContextBudget, RagError, RetrievalOptions,
};
