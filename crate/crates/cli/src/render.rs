//! Output encodings shared by the CLI and the service.

use devinv_core::embedding_index::ScoreSummary;
use devinv_core::{Corpus, ExtractionResult, ParsedValue, RetrievalHit};
use serde::Serialize;

pub const HITS_CSV_HEADER: [&str; 3] = ["rank", "record_id", "similarity"];
pub const EXTRACTION_CSV_HEADER: [&str; 5] = ["record_id", "task", "provider", "parsed", "raw_answer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

fn csv_string(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    rows(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn hits_csv(hits: &[RetrievalHit]) -> String {
    csv_string(|w| {
        w.write_record(HITS_CSV_HEADER)?;
        for h in hits {
            w.write_record([h.rank.to_string(), h.record_id.clone(), format!("{:.6}", h.similarity)])?;
        }
        Ok(())
    })
}

pub fn hits_text(hits: &[RetrievalHit], corpus: &Corpus) -> String {
    if hits.is_empty() {
        return "no matching records\n".into();
    }
    let mut out = String::new();
    for h in hits {
        let desc = corpus.get(&h.record_id).map(|r| r.description.as_str()).unwrap_or("");
        out.push_str(&format!(
            "{:>2}. {}  {:.4}  {}\n",
            h.rank, h.record_id, h.similarity, desc
        ));
    }
    out
}

pub fn hits(hits: &[RetrievalHit], corpus: &Corpus, format: Format) -> String {
    match format {
        Format::Text => hits_text(hits, corpus),
        Format::Csv => hits_csv(hits),
        Format::Json => json(hits),
    }
}

/// Flat spelling of a parsed value; batches are `;`-joined.
pub fn parsed_cell(p: &ParsedValue) -> String {
    match p {
        ParsedValue::Date(d) => d.to_string(),
        ParsedValue::Unparsed(_) => String::new(),
        ParsedValue::Site(s) | ParsedValue::Text(s) => s.clone(),
        ParsedValue::Batches(b) => b.join(";"),
        ParsedValue::QualityImpact(q) => q.as_str().to_string(),
    }
}

pub fn extraction_csv(results: &[ExtractionResult]) -> String {
    csv_string(|w| {
        w.write_record(EXTRACTION_CSV_HEADER)?;
        for r in results {
            w.write_record([
                r.record_id.as_str(),
                r.task.as_str(),
                r.provider_id.as_str(),
                &parsed_cell(&r.parsed),
                r.raw_answer.as_str(),
            ])?;
        }
        Ok(())
    })
}

pub fn extraction_text(results: &[ExtractionResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{} {:<15} {}\n",
            r.record_id,
            r.task.as_str(),
            parsed_cell(&r.parsed)
        ));
    }
    out
}

pub fn extractions(results: &[ExtractionResult], format: Format) -> String {
    match format {
        Format::Text => extraction_text(results),
        Format::Csv => extraction_csv(results),
        Format::Json => json(results),
    }
}

pub fn summary_text(s: &ScoreSummary) -> String {
    format!(
        "pairs {}\nmin {:.4}\np25 {:.4}\nmedian {:.4}\np75 {:.4}\nmax {:.4}\nmean {:.4}\n",
        s.pairs, s.min, s.p25, s.median, s.p75, s.max, s.mean
    )
}
