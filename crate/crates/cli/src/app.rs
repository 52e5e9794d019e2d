//! Loaded state shared by CLI subcommands and service handlers.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use devinv_core::rag::DEFAULT_RAG_INTRO;
use devinv_core::{
    aggregate_report, answer_with_retrieval, answer_zero_shot, build_index, extract, ingest_corpus, load_index,
    run_extraction, score_results, AnswerParser, AnswerWithCitations, AuditLog, ContextBudget, Corpus, DeviationRecord,
    EvaluationReport, ExtractionResult, ExtractionRun, ExtractionTask, Gateway, Index, MetadataFilter, Metric,
    OverrideTable, RetrievalHit, RetrievalOptions, RetrievalQuery, TemplateSet,
};
use serde::{Deserialize, Serialize};

use crate::{AppConfig, AppError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractRequest {
    pub record_id: String,
    pub task: ExtractionTask,
    #[serde(default)]
    pub provider: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub zero_shot: bool,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub phrase_filters: Vec<String>,
    #[serde(default)]
    pub metadata_filters: Vec<MetadataFilter>,
    #[serde(default)]
    pub min_similarity: Option<f64>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub max_chars: Option<usize>,
    #[serde(default)]
    pub provider: Option<String>,
}

pub struct App {
    pub config: AppConfig,
    pub corpus: Corpus,
    parser: AnswerParser,
    gateways: Mutex<HashMap<String, Arc<Gateway>>>,
    templates: Mutex<Option<Arc<TemplateSet>>>,
    indexes: Mutex<HashMap<String, Arc<Index>>>,
    reports: Mutex<HashMap<String, Arc<EvaluationReport>>>,
}

impl App {
    pub fn open(config: AppConfig) -> Result<Self, AppError> {
        let corpus = ingest_corpus(&config.corpus_path)
            .map_err(|e| AppError::Internal(format!("{}: {e}", config.corpus_path.display())))?;
        Self::with_corpus(config, corpus)
    }

    pub fn with_corpus(config: AppConfig, corpus: Corpus) -> Result<Self, AppError> {
        config.validate()?;
        let parser = AnswerParser::new(&config.batch_id_pattern).map_err(|e| AppError::Config(e.to_string()))?;
        Ok(Self {
            config,
            corpus,
            parser,
            gateways: Mutex::default(),
            templates: Mutex::default(),
            indexes: Mutex::default(),
            reports: Mutex::default(),
        })
    }

    pub fn gateway(&self, name: &str) -> Result<Arc<Gateway>, AppError> {
        let mut cache = self.gateways.lock().unwrap();
        if let Some(g) = cache.get(name) {
            return Ok(g.clone());
        }
        let g = Arc::new(Gateway::new(self.config.provider(name)?.clone())?);
        cache.insert(name.to_string(), g.clone());
        Ok(g)
    }

    fn chat(&self, name: Option<&str>) -> Result<Arc<Gateway>, AppError> {
        let g = self.gateway(name.unwrap_or(&self.config.default_chat))?;
        if !g.config().kind.is_chat() {
            return Err(AppError::Usage(format!("provider {:?} cannot chat", g.id())));
        }
        Ok(g)
    }

    fn embedder(&self, name: Option<&str>) -> Result<Arc<Gateway>, AppError> {
        let g = self.gateway(name.unwrap_or(&self.config.default_embed))?;
        if !g.config().kind.is_embed() {
            return Err(AppError::Usage(format!("provider {:?} cannot embed", g.id())));
        }
        Ok(g)
    }

    pub fn templates(&self) -> Result<Arc<TemplateSet>, AppError> {
        let mut slot = self.templates.lock().unwrap();
        if let Some(t) = slot.as_ref() {
            return Ok(t.clone());
        }
        let t = TemplateSet::load_dir(&self.config.template_dir)
            .map_err(|e| AppError::Config(format!("{}: {e}", self.config.template_dir.display())))?;
        let t = Arc::new(t);
        *slot = Some(t.clone());
        Ok(t)
    }

    pub fn record(&self, id: &str) -> Result<&DeviationRecord, AppError> {
        self.corpus
            .get(id)
            .ok_or_else(|| AppError::NotFound(format!("unknown record id {id}")))
    }

    /// Embeds every description with `embed`.
    pub fn build_index(&self, embed: Option<&str>) -> Result<Index, AppError> {
        Ok(build_index(&self.corpus, &*self.embedder(embed)?)?)
    }

    /// The saved index when it was built by the same embedder, otherwise a
    /// fresh in-memory one.
    pub fn index(&self, embed: Option<&str>) -> Result<Arc<Index>, AppError> {
        let embedder = self.embedder(embed)?;
        let mut cache = self.indexes.lock().unwrap();
        if let Some(i) = cache.get(embedder.id()) {
            return Ok(i.clone());
        }
        let path = &self.config.index_path;
        let saved = if path.exists() { Some(load_index(path)?) } else { None };
        let index = match saved {
            Some(i) if i.provider_id == embedder.id() && i.len() == self.corpus.len() => i,
            Some(i) => {
                tracing::info!(
                    saved = %i.provider_id,
                    wanted = %embedder.id(),
                    "saved index does not match; rebuilding in memory"
                );
                build_index(&self.corpus, &embedder)?
            }
            None => build_index(&self.corpus, &embedder)?,
        };
        let index = Arc::new(index);
        cache.insert(embedder.id().to_string(), index.clone());
        Ok(index)
    }

    pub fn search(&self, query: &RetrievalQuery, embed: Option<&str>) -> Result<Vec<RetrievalHit>, AppError> {
        let embedder = self.embedder(embed)?;
        let index = self.index(Some(embedder.id()))?;
        Ok(devinv_core::search(&index, &self.corpus, query, &embedder)?)
    }

    pub fn extract_one(&self, req: &ExtractRequest) -> Result<ExtractionResult, AppError> {
        let record = self.record(&req.record_id)?;
        let chat = self.chat(req.provider.as_deref())?;
        Ok(extract(record, req.task, &chat, &*self.templates()?, &self.parser)?)
    }

    /// Runs `tasks` over the given records (all when `ids` is empty).
    pub fn extract_many(
        &self,
        ids: &[String],
        tasks: &[ExtractionTask],
        provider: Option<&str>,
    ) -> Result<ExtractionRun, AppError> {
        let chat = self.chat(provider)?;
        let templates = self.templates()?;
        if ids.is_empty() {
            return Ok(run_extraction(&self.corpus, tasks, &chat, &templates, &self.parser)?);
        }
        let records = ids
            .iter()
            .map(|id| self.record(id).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let subset = Corpus::from_records(records, self.corpus.source_path.clone())?;
        Ok(run_extraction(&subset, tasks, &chat, &templates, &self.parser)?)
    }

    fn overrides(&self) -> Result<OverrideTable, AppError> {
        match &self.config.overrides_path {
            Some(p) => Ok(OverrideTable::load(p)?),
            None => Ok(OverrideTable::new()),
        }
    }

    /// Extracts every task over the corpus and grades it. Failed extractions
    /// count as inaccurate.
    pub fn evaluate(
        &self,
        provider: Option<&str>,
        overrides: Option<&OverrideTable>,
    ) -> Result<EvaluationReport, AppError> {
        let run = self.extract_many(&[], &ExtractionTask::ALL, provider)?;
        for f in &run.failures {
            tracing::warn!(record = %f.record_id, task = %f.task, error = %f.error, "extraction failed");
        }
        let owned;
        let overrides = match overrides {
            Some(o) => o,
            None => {
                owned = self.overrides()?;
                &owned
            }
        };
        let scored = score_results(&run.results, &self.corpus, overrides, &(&self.config.rubric).into())?;
        Ok(aggregate_report(&scored, self.corpus.len())?)
    }

    /// Latest report for `provider`, computed on first request.
    pub fn report(&self, provider: Option<&str>) -> Result<Arc<EvaluationReport>, AppError> {
        let name = provider.unwrap_or(&self.config.default_chat).to_string();
        if let Some(r) = self.reports.lock().unwrap().get(&name) {
            return Ok(r.clone());
        }
        let report = Arc::new(self.evaluate(Some(&name), None)?);
        self.reports.lock().unwrap().insert(name, report.clone());
        Ok(report)
    }

    pub fn ask(&self, req: &AskRequest) -> Result<AnswerWithCitations, AppError> {
        let chat = self.chat(req.provider.as_deref())?;
        let answer = if req.zero_shot {
            answer_zero_shot(&req.question, &chat)?
        } else {
            let embedder = self.embedder(None)?;
            let index = self.index(Some(embedder.id()))?;
            let templates = self.templates()?;
            let intro = templates.rag_intro.as_deref().unwrap_or(DEFAULT_RAG_INTRO);
            let opts = RetrievalOptions {
                top_k: req.top_k.unwrap_or(self.config.rag.top_k),
                phrase_filters: req.phrase_filters.clone(),
                metadata_filters: req.metadata_filters.clone(),
                min_similarity: req.min_similarity,
                metric: req.metric,
            };
            let budget = ContextBudget::new(req.max_chars.unwrap_or(self.config.rag.max_chars));
            answer_with_retrieval(
                &req.question,
                &index,
                &self.corpus,
                &chat,
                &embedder,
                &opts,
                &budget,
                intro,
            )?
        };
        if let Some(path) = &self.config.rag.audit_log {
            AuditLog::open(path)?.record(&answer)?;
        }
        Ok(answer)
    }
}
