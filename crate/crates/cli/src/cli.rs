//! `devinv` argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use devinv_core::{
    draft_description, render_report, save_index, validate_record, ExtractionTask, MetadataFilter, Metric,
    OverrideTable, ReportFormat, RetrievalQuery,
};

use crate::app::{AskRequest, ExtractRequest};
use crate::render::{self, Format};
use crate::{server, App, AppConfig, AppError};

#[derive(Debug, Parser)]
#[command(
    name = "devinv",
    version,
    about = "Deviation investigation toolkit: extraction, evaluation and retrieval"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = crate::config::CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Corpus file (overrides the configured path).
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Index file (overrides the configured path).
    #[arg(long, global = true)]
    pub index: Option<PathBuf>,
    /// Embedding provider name.
    #[arg(long, global = true)]
    pub embed: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Cosine,
    L2,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::L2 => Metric::L2,
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RetrievalArgs {
    /// Phrase the report text must contain (repeatable).
    #[arg(long = "phrase")]
    pub phrases: Vec<String>,
    /// Metadata filter `field=value` (repeatable).
    #[arg(long = "filter")]
    pub filters: Vec<MetadataFilter>,
    #[arg(long)]
    pub min_similarity: Option<f64>,
    #[arg(long, value_enum, default_value = "cosine")]
    pub metric: MetricArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the corpus.
    Ingest {
        /// Draft descriptions for records that lack one.
        #[arg(long)]
        describe: bool,
        /// Chat provider for --describe.
        #[arg(long)]
        provider: Option<String>,
        /// Persist the (possibly updated) corpus back to its file.
        #[arg(long)]
        write: bool,
    },
    /// Embed all descriptions and save the index.
    Embed {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise similarity matrix over the index.
    Matrix {
        /// Print off-diagonal summary statistics instead of the matrix.
        #[arg(long)]
        summary: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Rank records against a query.
    Search {
        #[arg(long)]
        query: String,
        #[arg(long)]
        top_k: Option<usize>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run extraction tasks with a chat provider.
    Extract {
        /// Record id (repeatable; default all).
        #[arg(long = "record")]
        records: Vec<String>,
        /// Task (repeatable; default all).
        #[arg(long = "task")]
        tasks: Vec<ExtractionTask>,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Extract all tasks and grade them against the corpus.
    Evaluate {
        #[arg(long)]
        provider: Option<String>,
        /// Reviewer override table (TSV).
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Answer a question, with retrieved records as context unless --zero-shot.
    Ask {
        question: String,
        #[arg(long)]
        zero_shot: bool,
        #[arg(long)]
        top_k: Option<usize>,
        #[command(flatten)]
        retrieval: RetrievalArgs,
        /// Context budget in characters.
        #[arg(long)]
        max_chars: Option<usize>,
        #[arg(long)]
        provider: Option<String>,
        /// Append an audit entry to this file.
        #[arg(long)]
        audit_log: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

fn config_for(cli: &Cli) -> Result<AppConfig, AppError> {
    let mut cfg = AppConfig::discover(cli.config.as_deref())?;
    if let Some(p) = &cli.corpus {
        cfg.corpus_path = p.clone();
    }
    if let Some(p) = &cli.index {
        cfg.index_path = p.clone();
    }
    if let Some(e) = &cli.embed {
        cfg.provider(e)?;
        cfg.default_embed = e.clone();
    }
    Ok(cfg)
}

fn query_from(text: &str, top_k: usize, r: &RetrievalArgs) -> RetrievalQuery {
    RetrievalQuery {
        text: text.to_string(),
        top_k,
        phrase_filters: r.phrases.clone(),
        metadata_filters: r.filters.clone(),
        min_similarity: r.min_similarity,
        metric: r.metric.into(),
    }
}

/// Executes a parsed command, returning what goes to standard out.
pub fn execute(cli: Cli) -> Result<String, AppError> {
    let mut cfg = config_for(&cli)?;
    match cli.command {
        Command::Ingest {
            describe,
            provider,
            write,
        } => {
            let mut app = App::open(cfg)?;
            let mut out = String::new();
            let missing: Vec<String> = app
                .corpus
                .records()
                .iter()
                .filter(|r| validate_record(r).iter().any(|v| v.field == "description"))
                .map(|r| r.id.clone())
                .collect();
            out.push_str(&format!(
                "{} records from {}; {} without description\n",
                app.corpus.len(),
                app.corpus.source_path,
                missing.len()
            ));
            if describe && !missing.is_empty() {
                let chat = app.gateway(provider.as_deref().unwrap_or(&app.config.default_chat))?;
                let templates = app.templates()?;
                let mut drafts = Vec::new();
                for id in &missing {
                    let record = app.record(id)?;
                    let draft = draft_description(record, &chat, templates.describe_intro.as_deref())?;
                    out.push_str(&format!("{id}: {draft}\n"));
                    drafts.push((id.clone(), draft));
                }
                for (id, d) in drafts {
                    app.corpus.set_description(&id, d);
                }
            }
            if write {
                app.corpus.save(&app.config.corpus_path)?;
                out.push_str(&format!("wrote {}\n", app.config.corpus_path.display()));
            }
            Ok(out)
        }
        Command::Embed { out } => {
            let app = App::open(cfg)?;
            let index = app.build_index(None)?;
            let path = out.unwrap_or_else(|| app.config.index_path.clone());
            save_index(&index, &path)?;
            Ok(format!(
                "indexed {} records with {} (dimension {}) into {}\n",
                index.len(),
                index.provider_id,
                index.dimension,
                path.display()
            ))
        }
        Command::Matrix { summary, format } => {
            let app = App::open(cfg)?;
            let m = app.index(None)?.pairwise_matrix()?;
            if summary {
                let s = m
                    .off_diagonal_summary()
                    .ok_or_else(|| AppError::BadRequest("need at least two records for a summary".into()))?;
                return Ok(match format {
                    Format::Json => render::json(&s),
                    _ => render::summary_text(&s),
                });
            }
            Ok(match format {
                Format::Json => {
                    let rows: Vec<&[f64]> = (0..m.len()).map(|i| m.row(i)).collect();
                    render::json(&serde_json::json!({ "ids": m.ids, "rows": rows }))
                }
                _ => m.to_csv(),
            })
        }
        Command::Search {
            query,
            top_k,
            retrieval,
            format,
        } => {
            let top_k = top_k.unwrap_or(cfg.rag.top_k);
            let app = App::open(cfg)?;
            let hits = app.search(&query_from(&query, top_k, &retrieval), None)?;
            Ok(render::hits(&hits, &app.corpus, format))
        }
        Command::Extract {
            records,
            tasks,
            provider,
            format,
        } => {
            let app = App::open(cfg)?;
            let tasks = if tasks.is_empty() {
                ExtractionTask::ALL.to_vec()
            } else {
                tasks
            };
            if records.len() == 1 && tasks.len() == 1 && format == Format::Json {
                let req = ExtractRequest {
                    record_id: records[0].clone(),
                    task: tasks[0],
                    provider,
                };
                return Ok(render::json(&app.extract_one(&req)?));
            }
            let run = app.extract_many(&records, &tasks, provider.as_deref())?;
            for f in &run.failures {
                eprintln!("devinv: {} {}: {}", f.record_id, f.task, f.error);
            }
            Ok(render::extractions(&run.results, format))
        }
        Command::Evaluate {
            provider,
            overrides,
            format,
        } => {
            if let Some(p) = overrides {
                cfg.overrides_path = Some(p);
            }
            let app = App::open(cfg)?;
            let table = match &app.config.overrides_path {
                Some(p) => OverrideTable::load(p)?,
                None => OverrideTable::new(),
            };
            let report = app.evaluate(provider.as_deref(), Some(&table))?;
            Ok(match format {
                Format::Json => render::json(&report),
                Format::Csv => render_report(&report, ReportFormat::Csv),
                Format::Text => render_report(&report, ReportFormat::Text),
            })
        }
        Command::Ask {
            question,
            zero_shot,
            top_k,
            retrieval,
            max_chars,
            provider,
            audit_log,
            format,
        } => {
            if let Some(p) = audit_log {
                cfg.rag.audit_log = Some(p);
            }
            let app = App::open(cfg)?;
            let req = AskRequest {
                question,
                zero_shot,
                top_k,
                phrase_filters: retrieval.phrases,
                metadata_filters: retrieval.filters,
                min_similarity: retrieval.min_similarity,
                metric: retrieval.metric.into(),
                max_chars,
                provider,
            };
            let a = app.ask(&req)?;
            Ok(match format {
                Format::Json => render::json(&a),
                _ => {
                    let mut s = format!("{}\n", a.text.trim_end());
                    if let Some(n) = &a.notice {
                        s.push_str(&format!("\n({n})\n"));
                    }
                    if !a.cited_record_ids.is_empty() {
                        s.push_str(&format!("\ncited: {}\n", a.cited_record_ids.join(", ")));
                    }
                    s
                }
            })
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or_else(|| cfg.service_bind_address.clone());
            let app = Arc::new(App::open(cfg)?);
            // Fail at startup rather than on the first request.
            app.index(None)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| AppError::Internal(e.to_string()))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .map_err(|e| AppError::Internal(format!("bind {bind}: {e}")))?;
                eprintln!(
                    "listening on {}",
                    listener.local_addr().map(|a| a.to_string()).unwrap_or(bind)
                );
                server::serve(app, listener, server::ctrl_c())
                    .await
                    .map_err(|e| AppError::Internal(e.to_string()))
            })?;
            Ok(String::new())
        }
    }
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("devinv: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_search_flags() {
        let cli = Cli::try_parse_from([
            "devinv",
            "search",
            "--query",
            "broken glass vial",
            "--phrase",
            "glass",
            "--top-k",
            "3",
            "--filter",
            "site=Riverside plant",
            "--format",
            "csv",
        ])
        .unwrap();
        match cli.command {
            Command::Search {
                query,
                top_k,
                retrieval,
                format,
            } => {
                assert_eq!(query, "broken glass vial");
                assert_eq!(top_k, Some(3));
                assert_eq!(retrieval.phrases, ["glass"]);
                assert_eq!(retrieval.filters[0].value, "Riverside plant");
                assert_eq!(format, Format::Csv);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["devinv", "frobnicate"]), 2);
        assert_eq!(run(["devinv", "search"]), 2);
        assert_eq!(run(["devinv", "extract", "--task", "colour"]), 2);
    }
}
