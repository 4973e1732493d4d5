//! Golden values for the feature-hash embedder and the adapter digest.
//! Expected values were produced by a separate Python implementation.

use rttc_core::model::{adapter_digest, AdapterState, Embedder, HashEmbedder, TrainHyper};
use rttc_core::synthetic;

fn sparse(e: &rttc_core::Embedding) -> Vec<(usize, f64)> {
    e.values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

fn check(text: &str, dim: usize, want: &[(usize, f64)]) {
    let got = sparse(&HashEmbedder::new(dim).unwrap().embed(text).unwrap());
    assert_eq!(got.len(), want.len(), "{text}: {got:?}");
    for ((gi, gv), (wi, wv)) in got.iter().zip(want) {
        assert_eq!(gi, wi, "{text}");
        assert!((gv - wv).abs() < 1e-15, "{text}: {gv} vs {wv}");
    }
}

#[test]
fn golden_vectors() {
    check("Hello, world", 8, &[(3, 1.0)]);
    check(
        "the cat sat on the mat",
        16,
        &[
            (0, -0.31622776601683794),
            (7, -0.6324555320336759),
            (12, -0.6324555320336759),
            (13, -0.31622776601683794),
        ],
    );
    check(
        "RTTC routes queries",
        64,
        &[(3, -0.5773502691896258), (18, -0.5773502691896258), (55, 0.5773502691896258)],
    );
}

#[test]
fn case_and_punctuation_insensitive() {
    let e = HashEmbedder::default();
    assert_eq!(e.embed("Routes, QUERIES!").unwrap(), e.embed("routes queries").unwrap());
}

#[test]
fn random_token_texts_can_collide() {
    // Short unrelated texts are not guaranteed dissimilar in 64 dims, which is
    // why the stream generators filter candidates by similarity.
    let e = HashEmbedder::default();
    let qs = synthetic::random_queries(5, 200, "q");
    let embs: Vec<_> = qs.iter().map(|q| e.embed(&q.text).unwrap()).collect();
    let mut worst = f64::MIN;
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            worst = worst.max(embs[i].dot(&embs[j]).unwrap());
        }
    }
    assert!(worst > 0.5);
    let qs = synthetic::distinct_queries(5, 200, "q", &e, 0.5).unwrap();
    assert_eq!(qs.len(), 200);
}

#[test]
fn adapter_digest_golden() {
    let want = "1f39ad23f1d73eb6826b417cd2800f9583d872aeedcfe8d8d2ad947eee4b2b0f";
    let ids = vec!["s0000001".to_string(), "s0000002".to_string()];
    assert_eq!(adapter_digest(&ids, &TrainHyper::default()), want);
    let a = AdapterState::derive("base", ["s0000002", "s0000001"], &TrainHyper::default()).unwrap();
    assert_eq!(a.digest, want);
}
