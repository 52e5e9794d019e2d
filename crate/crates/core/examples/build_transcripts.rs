//! Regenerates `transcripts.jsonl` for the replay provider from the scripted
//! answers under `<fixtures>/scripted/`.
//!
//! cargo run -p devinv-core --example build_transcripts -- fixtures

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use devinv_core::rag::{self, plan_answer, ContextBudget, RetrievalOptions, DEFAULT_RAG_INTRO};
use devinv_core::{
    build_index, build_prompt, ingest_corpus, ExtractionTask, Gateway, MetadataFilter, PromptBundle, ProviderConfig,
    TemplateSet, TranscriptStore,
};
use serde::Deserialize;

#[derive(Deserialize)]
struct ExtractionLine {
    record_id: String,
    task: String,
    answer: String,
}

#[derive(Deserialize)]
struct RagCase {
    name: String,
    question: String,
    top_k: usize,
    phrase_filters: Vec<String>,
    metadata_filters: Vec<String>,
    min_similarity: Option<f64>,
    budget: usize,
    answer: String,
}

#[derive(Deserialize)]
struct QaLine {
    question: String,
    answer: String,
}

#[derive(Deserialize)]
struct DescribeLine {
    record_id: String,
    answer: String,
}

fn lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Vec<T> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .collect()
}

fn put(store: &mut TranscriptStore, bundle: &PromptBundle, answer: &str, note: String) {
    let digest = bundle.digest();
    if let Some(prev) = store.get(&digest) {
        assert_eq!(prev, answer, "conflicting scripted answers for {note}");
        return;
    }
    store.script(bundle, answer, Some(note));
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into());
    let dir = Path::new(&dir);
    let corpus = ingest_corpus(dir.join("corpus.jsonl")).expect("corpus");
    let templates = TemplateSet::load_dir(dir.join("templates")).expect("templates");
    let scripted = dir.join("scripted");
    let mut store = TranscriptStore::new();

    for line in lines::<ExtractionLine>(&scripted.join("extraction.jsonl")) {
        let task: ExtractionTask = line.task.parse().expect("task");
        let record = corpus.get(&line.record_id).expect("record id");
        let bundle = build_prompt(record, task, &templates).expect("prompt");
        put(
            &mut store,
            &bundle,
            &line.answer,
            format!("{} {}", line.record_id, task),
        );
    }

    for line in lines::<QaLine>(&scripted.join("zero_shot.jsonl")) {
        let bundle = rag::zero_shot_bundle(&line.question).expect("question");
        put(&mut store, &bundle, &line.answer, "zero-shot".into());
    }

    let embedder = Gateway::new(ProviderConfig::hash_embed("hash64", 64, 42)).expect("embedder");
    let index = build_index(&corpus, &embedder).expect("index");
    let rag_intro = templates.rag_intro.as_deref().unwrap_or(DEFAULT_RAG_INTRO);
    for case in lines::<RagCase>(&scripted.join("rag.jsonl")) {
        let opts = RetrievalOptions {
            top_k: case.top_k,
            phrase_filters: case.phrase_filters,
            metadata_filters: case
                .metadata_filters
                .iter()
                .map(|f| f.parse::<MetadataFilter>().expect("filter"))
                .collect(),
            min_similarity: case.min_similarity,
            ..RetrievalOptions::default()
        };
        let plan = plan_answer(
            &case.question,
            &index,
            &corpus,
            &embedder,
            &opts,
            &ContextBudget::new(case.budget),
            rag_intro,
        )
        .expect("plan");
        put(&mut store, &plan.bundle, &case.answer, case.name);
    }

    for line in lines::<DescribeLine>(&scripted.join("describe.jsonl")) {
        let record = corpus.get(&line.record_id).expect("record id");
        let bundle = rag::describe_bundle(record, templates.describe_intro.as_deref()).expect("bundle");
        put(
            &mut store,
            &bundle,
            &line.answer,
            format!("describe {}", line.record_id),
        );
    }

    let out = dir.join("transcripts.jsonl");
    let file = fs::File::create(&out).expect("create transcripts");
    store.write_to(BufWriter::new(file)).expect("write transcripts");
    eprintln!("wrote {} entries to {}", store.len(), out.display());
}
