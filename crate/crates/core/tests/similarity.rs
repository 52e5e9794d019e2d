use devinv_core::llm_gateway::hash_bucket;
use devinv_core::{cosine_similarity, hash_embed, EmbeddingVector, Index, IndexEntry};
use proptest::prelude::*;
use sha2::{Digest, Sha256};

fn vector(dim: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    dim.prop_flat_map(|d| prop::collection::vec(-100.0f64..100.0, d))
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-6))
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..64).prop_flat_map(|d| {
        let one =
            prop::collection::vec(-100.0f64..100.0, d).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-6));
        (one.clone(), one)
    })
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in pair()) {
        let ab = cosine_similarity(&ev(&a), &ev(&b)).unwrap();
        let ba = cosine_similarity(&ev(&b), &ev(&a)).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn cosine_self_is_one(a in vector(2..256)) {
        prop_assert!((cosine_similarity(&ev(&a), &ev(&a)).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn cosine_ignores_positive_scale((a, b) in pair(), k in 1e-3f64..1e3) {
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        let base = cosine_similarity(&ev(&a), &ev(&b)).unwrap();
        let s = cosine_similarity(&ev(&scaled), &ev(&b)).unwrap();
        prop_assert!((base - s).abs() <= 1e-9);
    }

    #[test]
    fn hash_embeddings_are_unit_length(text in "[a-z]{1,8}( [a-z]{1,8}){0,20}", dim in 2usize..128, seed in any::<u64>()) {
        let v = hash_embed(&text, dim, seed).unwrap();
        prop_assert_eq!(v.dimension(), dim);
        prop_assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal(vs in prop::collection::vec(vector(8..9), 1..12)) {
        let entries = vs
            .iter()
            .enumerate()
            .map(|(i, v)| IndexEntry::new(format!("r{i}"), ev(v)).unwrap())
            .collect();
        let m = Index::from_entries("t", 8, entries).unwrap().pairwise_matrix().unwrap();
        for i in 0..m.len() {
            prop_assert!((m.get(i, i) - 1.0).abs() <= 1e-9);
            for j in 0..m.len() {
                prop_assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-12);
            }
        }
    }
}

fn oracle_bucket(token: &str, seed: u64, dim: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let d = h.finalize();
    (u64::from_le_bytes(d[..8].try_into().unwrap()) % dim as u64) as usize
}

#[test]
fn hash_embed_matches_independent_oracle() {
    let text = "Broken  GLASS vial found";
    let (dim, seed) = (64, 42);
    let mut counts = vec![0.0f64; dim];
    for tok in ["broken", "glass", "vial", "found"] {
        counts[oracle_bucket(tok, seed, dim)] += 1.0;
        assert_eq!(hash_bucket(tok, seed, dim), oracle_bucket(tok, seed, dim));
    }
    let n = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    let want: Vec<f64> = counts.iter().map(|c| c / n).collect();
    let got = hash_embed(text, dim, seed).unwrap();
    for (g, w) in got.values().iter().zip(&want) {
        assert!((g - w).abs() < 1e-15);
    }
}
