//! Prompt construction for the five incident-detail tasks and parsing of
//! free-text answers into typed values.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, Corpus, DeviationRecord, QualityImpact};
use crate::dates;
use crate::llm_gateway::{Gateway, GatewayError, PromptBundle};

/// Default batch-identifier pattern: a letter, a digit, then at least two
/// more alphanumerics (e.g. `A1234`).
pub const DEFAULT_BATCH_PATTERN: &str = r"\b[A-Za-z][0-9][A-Za-z0-9]{2,}\b";

/// Tokens before an impact cue that are searched for a negation.
pub const NEGATION_WINDOW: usize = 3;

const NEGATION_CUES: [&str; 3] = ["no", "not", "without"];
const IMPACT_CUES: [&str; 3] = ["impact", "affected", "adulterated"];

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("template set has no question for task {0}")]
    MissingTemplate(ExtractionTask),
    #[error("unknown placeholder {{{{{0}}}}} in template")]
    UnknownPlaceholder(String),
    #[error("prompt context of {chars} chars exceeds provider limit {limit}")]
    ContextTooLarge { chars: usize, limit: usize },
    #[error("invalid batch id pattern: {0}")]
    BadPattern(#[from] regex::Error),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("template io: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionTask {
    OccurrenceDate,
    Site,
    Batches,
    QualityImpact,
    RootCause,
}

impl ExtractionTask {
    pub const ALL: [ExtractionTask; 5] = [
        ExtractionTask::OccurrenceDate,
        ExtractionTask::Site,
        ExtractionTask::Batches,
        ExtractionTask::QualityImpact,
        ExtractionTask::RootCause,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionTask::OccurrenceDate => "occurrence_date",
            ExtractionTask::Site => "site",
            ExtractionTask::Batches => "batches",
            ExtractionTask::QualityImpact => "quality_impact",
            ExtractionTask::RootCause => "root_cause",
        }
    }

    /// 1-based position in the canonical task order.
    pub fn number(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for ExtractionTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExtractionTask {
    type Err = ExtractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExtractionTask::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| ExtractionError::UnknownTask(s.to_string()))
    }
}

/// Prompt templates. Placeholders use `{{name}}` syntax.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    pub intro: String,
    pub questions: BTreeMap<ExtractionTask, String>,
    pub rag_intro: Option<String>,
    pub describe_intro: Option<String>,
}

impl TemplateSet {
    /// Reads `intro.txt`, `q_<task>.txt`, and optionally `rag_intro.txt` and
    /// `describe_intro.txt` from `dir`. Missing question files are tolerated
    /// here and reported when a prompt for that task is built.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ExtractionError> {
        let dir = dir.as_ref();
        let read_opt = |name: &str| -> Result<Option<String>, io::Error> {
            match fs::read_to_string(dir.join(name)) {
                Ok(s) => Ok(Some(s.trim_end().to_string())),
                Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(e),
            }
        };
        let intro = fs::read_to_string(dir.join("intro.txt"))?.trim_end().to_string();
        let mut questions = BTreeMap::new();
        for task in ExtractionTask::ALL {
            if let Some(q) = read_opt(&format!("q_{task}.txt"))? {
                questions.insert(task, q);
            }
        }
        Ok(Self {
            intro,
            questions,
            rag_intro: read_opt("rag_intro.txt")?,
            describe_intro: read_opt("describe_intro.txt")?,
        })
    }
}

/// Replaces `{{key}}` placeholders; unknown keys are an error.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, ExtractionError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let key = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| ExtractionError::UnknownPlaceholder(key.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Builds the (intro, full report, task question) bundle for one record.
pub fn build_prompt(
    record: &DeviationRecord,
    task: ExtractionTask,
    templates: &TemplateSet,
) -> Result<PromptBundle, ExtractionError> {
    let question = templates
        .questions
        .get(&task)
        .ok_or(ExtractionError::MissingTemplate(task))?;
    let vars = [("record_id", record.id.as_str()), ("task", task.as_str())];
    let question = render_template(question, &vars)?;
    let intro = render_template(&templates.intro, &vars)?;
    Ok(PromptBundle::new(intro, record.normalized_text(), question)?)
}

/// Typed interpretation of a model answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ParsedValue {
    Date(NaiveDate),
    /// No recognizable value; carries the raw answer.
    Unparsed(String),
    Site(String),
    Batches(Vec<String>),
    QualityImpact(QualityImpact),
    Text(String),
}

/// Task-aware answer parser; holds the configured batch-id pattern.
#[derive(Debug, Clone)]
pub struct AnswerParser {
    batch_pattern: Regex,
}

impl Default for AnswerParser {
    fn default() -> Self {
        Self {
            batch_pattern: Regex::new(DEFAULT_BATCH_PATTERN).expect("valid default"),
        }
    }
}

impl AnswerParser {
    pub fn new(batch_pattern: &str) -> Result<Self, ExtractionError> {
        Ok(Self {
            batch_pattern: Regex::new(batch_pattern)?,
        })
    }

    pub fn parse(&self, task: ExtractionTask, raw: &str) -> ParsedValue {
        match task {
            ExtractionTask::OccurrenceDate => match dates::find_first(raw) {
                Some(d) => ParsedValue::Date(d),
                None => ParsedValue::Unparsed(raw.to_string()),
            },
            ExtractionTask::Site => ParsedValue::Site(
                raw.lines()
                    .map(str::trim)
                    .find(|l| !l.is_empty())
                    .unwrap_or("")
                    .to_string(),
            ),
            ExtractionTask::Batches => ParsedValue::Batches(self.batches(raw)),
            ExtractionTask::QualityImpact => ParsedValue::QualityImpact(classify_impact(raw)),
            ExtractionTask::RootCause => ParsedValue::Text(raw.to_string()),
        }
    }

    fn batches(&self, raw: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        self.batch_pattern
            .find_iter(raw)
            .map(|m| m.as_str().to_string())
            .filter(|b| seen.insert(b.clone()))
            .collect()
    }
}

/// Parses with the default batch pattern.
pub fn parse_answer(task: ExtractionTask, raw: &str) -> ParsedValue {
    static DEFAULT: LazyLock<AnswerParser> = LazyLock::new(AnswerParser::default);
    DEFAULT.parse(task, raw)
}

/// Word tokens of the normalized text with edge punctuation stripped.
fn impact_tokens(raw: &str) -> Vec<String> {
    normalize_text(raw)
        .split(' ')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

fn is_impact_cue(token: &str) -> bool {
    IMPACT_CUES.iter().any(|cue| token.starts_with(cue))
}

/// Negated cue anywhere wins, then any bare cue, else indeterminate.
pub fn classify_impact(raw: &str) -> QualityImpact {
    let tokens = impact_tokens(raw);
    let mut bare_cue = false;
    for (i, tok) in tokens.iter().enumerate() {
        if !is_impact_cue(tok) {
            continue;
        }
        let window = &tokens[i.saturating_sub(NEGATION_WINDOW)..i];
        if window.iter().any(|w| NEGATION_CUES.contains(&w.as_str())) {
            return QualityImpact::NotImpacted;
        }
        bare_cue = true;
    }
    if bare_cue {
        QualityImpact::Impacted
    } else {
        QualityImpact::Indeterminate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub record_id: String,
    pub task: ExtractionTask,
    pub raw_answer: String,
    pub parsed: ParsedValue,
    pub provider_id: String,
}

fn check_context(bundle: &PromptBundle, gateway: &Gateway) -> Result<(), ExtractionError> {
    if let Some(limit) = gateway.config().max_context_chars {
        let chars = bundle.intro.chars().count() + bundle.context.chars().count() + bundle.question.chars().count();
        if chars > limit {
            return Err(ExtractionError::ContextTooLarge { chars, limit });
        }
    }
    Ok(())
}

/// Prompts the provider for one task on one record and parses the answer.
pub fn extract(
    record: &DeviationRecord,
    task: ExtractionTask,
    gateway: &Gateway,
    templates: &TemplateSet,
    parser: &AnswerParser,
) -> Result<ExtractionResult, ExtractionError> {
    let bundle = build_prompt(record, task, templates)?;
    check_context(&bundle, gateway)?;
    let outcome = gateway.chat(&bundle)?;
    Ok(ExtractionResult {
        record_id: record.id.clone(),
        task,
        parsed: parser.parse(task, &outcome.text),
        raw_answer: outcome.text,
        provider_id: outcome.provider_id,
    })
}

#[derive(Debug)]
pub struct ExtractionFailure {
    pub record_id: String,
    pub task: ExtractionTask,
    pub error: ExtractionError,
}

/// Results of a batch, in (record order, task order).
#[derive(Debug, Default)]
pub struct ExtractionRun {
    pub results: Vec<ExtractionResult>,
    pub failures: Vec<ExtractionFailure>,
}

/// Runs every (record, task) pair, up to the provider's `max_parallel` at a
/// time. Individual failures are collected, not fatal.
pub fn run_extraction(
    corpus: &Corpus,
    tasks: &[ExtractionTask],
    gateway: &Gateway,
    templates: &TemplateSet,
    parser: &AnswerParser,
) -> Result<ExtractionRun, ExtractionError> {
    if corpus.is_empty() {
        return Err(ExtractionError::EmptyCorpus);
    }
    let mut task_order: Vec<ExtractionTask> = Vec::new();
    for t in tasks {
        if !task_order.contains(t) {
            task_order.push(*t);
        }
    }
    let pairs: Vec<(usize, &DeviationRecord, ExtractionTask)> = corpus
        .records()
        .iter()
        .flat_map(|r| task_order.iter().map(move |t| (r, *t)))
        .enumerate()
        .map(|(i, (r, t))| (i, r, t))
        .collect();
    if pairs.is_empty() {
        return Ok(ExtractionRun::default());
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ExtractionResult, ExtractionError>>>> =
        Mutex::new((0..pairs.len()).map(|_| None).collect());
    let workers = gateway.config().max_parallel.min(pairs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(slot, record, task)) = pairs.get(i) else {
                    break;
                };
                let out = extract(record, task, gateway, templates, parser);
                slots.lock().unwrap_or_else(|e| e.into_inner())[slot] = Some(out);
            });
        }
    });

    let mut run = ExtractionRun::default();
    let slots = slots.into_inner().unwrap_or_else(|e| e.into_inner());
    for ((_, record, task), out) in pairs.iter().zip(slots) {
        match out.expect("every slot filled") {
            Ok(r) => run.results.push(r),
            Err(error) => run.failures.push(ExtractionFailure {
                record_id: record.id.clone(),
                task: *task,
                error,
            }),
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_answer(
                ExtractionTask::OccurrenceDate,
                "the event occurred on 12 March 2021 during shift 2"
            ),
            ParsedValue::Date(ymd(2021, 3, 12))
        );
        assert_eq!(
            parse_answer(ExtractionTask::OccurrenceDate, "unknown"),
            ParsedValue::Unparsed("unknown".into())
        );
        assert_eq!(
            parse_answer(ExtractionTask::QualityImpact, "there was no impact to product quality"),
            ParsedValue::QualityImpact(QualityImpact::NotImpacted)
        );
        assert_eq!(
            parse_answer(ExtractionTask::Batches, "batches A1234 and A1234 and B9876 were staged"),
            ParsedValue::Batches(vec!["A1234".into(), "B9876".into()])
        );
        assert_eq!(
            parse_answer(ExtractionTask::Site, "\n  Riverside plant \nsecond line"),
            ParsedValue::Site("Riverside plant".into())
        );
        assert_eq!(
            parse_answer(ExtractionTask::RootCause, " verbatim. "),
            ParsedValue::Text(" verbatim. ".into())
        );
    }

    #[test]
    fn impact_rule_edges() {
        use QualityImpact::*;
        assert_eq!(classify_impact("product was adulterated"), Impacted);
        assert_eq!(classify_impact("not, in any way, impacted"), Impacted);
        assert_eq!(classify_impact("not in any impacted"), NotImpacted);
        assert_eq!(classify_impact("unclear"), Indeterminate);
        assert_eq!(classify_impact("impact! no impact"), NotImpacted);
    }

    #[test]
    fn templates_render() {
        assert_eq!(
            render_template("id {{ record_id }} / {{task}}", &[("record_id", "x"), ("task", "t")]).unwrap(),
            "id x / t"
        );
        assert!(matches!(
            render_template("{{nope}}", &[]),
            Err(ExtractionError::UnknownPlaceholder(k)) if k == "nope"
        ));
        assert_eq!(render_template("open {{ only", &[]).unwrap(), "open {{ only");
    }

    #[test]
    fn task_names_round_trip() {
        for t in ExtractionTask::ALL {
            assert_eq!(t.as_str().parse::<ExtractionTask>().unwrap(), t);
        }
        assert_eq!(ExtractionTask::RootCause.number(), 5);
        assert!("bogus".parse::<ExtractionTask>().is_err());
    }

    #[test]
    fn custom_batch_pattern() {
        let p = AnswerParser::new(r"LOT-\d+").unwrap();
        assert_eq!(
            p.parse(ExtractionTask::Batches, "LOT-1 and LOT-22, LOT-1"),
            ParsedValue::Batches(vec!["LOT-1".into(), "LOT-22".into()])
        );
        assert!(AnswerParser::new("(").is_err());
    }
}
