//! Synthetic workloads shared by the benchmarks.

use std::collections::BTreeMap;

use devinv_core::{Corpus, DeviationRecord, EmbeddingVector, IncidentMetadata, Index, IndexEntry, QualityImpact};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const WORDS: [&str; 16] = [
    "vial",
    "glass",
    "particle",
    "filter",
    "pressure",
    "label",
    "tablet",
    "weight",
    "seal",
    "pump",
    "alarm",
    "temperature",
    "excursion",
    "operator",
    "cleaning",
    "line",
];

pub fn random_vector(rng: &mut StdRng, dim: usize) -> EmbeddingVector {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    v[0] += 2.0;
    EmbeddingVector::new(v).unwrap()
}

pub fn sentence(rng: &mut StdRng, words: usize) -> String {
    (0..words)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A corpus of `n` records and a random index over it.
pub fn synthetic(n: usize, dim: usize, seed: u64) -> (Corpus, Index) {
    let mut rng = StdRng::seed_from_u64(seed);
    let sites = ["Riverside plant", "Lakeside plant", "Northfield plant"];
    let mut records = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("r{i:05}");
        let meta = IncidentMetadata {
            occurrence_date: chrono_date(2020 + (i % 4) as i32, 1 + (i % 12) as u32, 1 + (i % 28) as u32),
            site: sites[i % sites.len()].to_string(),
            batches: vec![format!("A{}", 1000 + i)],
            quality_impact: QualityImpact::Indeterminate,
            root_cause: sentence(&mut rng, 6),
            product_line: "sterile injectables".into(),
            extra: BTreeMap::new(),
        };
        records.push(DeviationRecord::new(
            &id,
            sentence(&mut rng, 60),
            sentence(&mut rng, 20),
            meta,
        ));
        entries.push(IndexEntry::new(id, random_vector(&mut rng, dim)).unwrap());
    }
    let corpus = Corpus::from_records(records, "synthetic").unwrap();
    let index = Index::from_entries("bench", dim, entries).unwrap();
    (corpus, index)
}

fn chrono_date(y: i32, m: u32, d: u32) -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(y, m, d).unwrap()
}
