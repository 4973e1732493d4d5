//! Multi-domain knowledge base: ingestion, exact top-k retrieval, and the
//! retrieval log behind the domain-distribution statistic.

mod index;
mod store;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Embedder;
use crate::types::{KnowledgeSample, RetrievedSample, RetrievedSet};
use crate::Embedding;

pub use index::FlatIndex;
pub use store::{KbManifest, MANIFEST_FILE, SAMPLES_FILE};

/// Anything that can answer a top-k similarity request.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query_id: &str, e: &Embedding, k: usize) -> Result<RetrievedSet>;
}

/// An ingestion record before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub prompt: String,
    #[serde(default)]
    pub completion: String,
    pub domain: String,
}

impl RawRecord {
    pub fn new(prompt: impl Into<String>, completion: impl Into<String>, domain: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            completion: completion.into(),
            domain: domain.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbStats {
    pub total: usize,
    pub dim: usize,
    pub domains: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    dim: usize,
    samples: Vec<KnowledgeSample>,
    index: FlatIndex<f64>,
    ids: HashSet<String>,
    domain_counts: BTreeMap<String, usize>,
}

impl KnowledgeBase {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            samples: Vec::new(),
            index: FlatIndex::new(dim),
            ids: HashSet::new(),
            domain_counts: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[KnowledgeSample] {
        &self.samples
    }

    pub fn domain_counts(&self) -> &BTreeMap<String, usize> {
        &self.domain_counts
    }

    pub fn stats(&self) -> KbStats {
        KbStats {
            total: self.len(),
            dim: self.dim,
            domains: self.domain_counts.clone(),
        }
    }

    /// Appends a fully formed sample.
    pub fn push(&mut self, sample: KnowledgeSample) -> Result<()> {
        if sample.domain.is_empty() {
            return Err(Error::MalformedRecord(format!("sample {} has empty domain", sample.sample_id)));
        }
        if self.ids.contains(&sample.sample_id) {
            return Err(Error::MalformedRecord(format!("duplicate sample_id {}", sample.sample_id)));
        }
        self.index.push(&sample.embedding)?;
        self.ids.insert(sample.sample_id.clone());
        *self.domain_counts.entry(sample.domain.clone()).or_default() += 1;
        self.samples.push(sample);
        Ok(())
    }

    fn fresh_id(&self) -> String {
        let mut n = self.samples.len();
        loop {
            let id = format!("s{n:07}");
            if !self.ids.contains(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Embeds each record's prompt and appends it under a fresh sample id.
    ///
    /// The batch is all-or-nothing: every record is validated and embedded
    /// before any is appended.
    pub fn ingest<I>(&mut self, records: I, embedder: &dyn Embedder) -> Result<usize>
    where
        I: IntoIterator<Item = RawRecord>,
    {
        if embedder.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: embedder.dim(),
            });
        }
        let mut staged = Vec::new();
        for (i, r) in records.into_iter().enumerate() {
            if r.prompt.is_empty() {
                return Err(Error::MalformedRecord(format!("record {i}: empty prompt")));
            }
            if r.domain.is_empty() {
                return Err(Error::MalformedRecord(format!("record {i}: empty domain")));
            }
            let embedding = embedder.embed(&r.prompt)?;
            staged.push((r, embedding));
        }
        let n = staged.len();
        for (r, embedding) in staged {
            let sample_id = self.fresh_id();
            self.push(KnowledgeSample {
                sample_id,
                prompt: r.prompt,
                completion: r.completion,
                domain: r.domain,
                embedding,
            })?;
        }
        Ok(n)
    }

    /// Exact top-k by inner product; ties go to the earlier-inserted sample.
    pub fn retrieve_top_k(&self, e: &Embedding, k: usize) -> Result<RetrievedSet> {
        let hits = self.index.top_k(e, k)?;
        Ok(RetrievedSet {
            samples: hits
                .into_iter()
                .map(|(row, similarity)| {
                    let s = &self.samples[row];
                    RetrievedSample {
                        sample_id: s.sample_id.clone(),
                        prompt: s.prompt.clone(),
                        completion: s.completion.clone(),
                        domain: s.domain.clone(),
                        similarity,
                    }
                })
                .collect(),
            k_requested: k,
        })
    }
}

impl Retriever for KnowledgeBase {
    fn retrieve(&self, _query_id: &str, e: &Embedding, k: usize) -> Result<RetrievedSet> {
        self.retrieve_top_k(e, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalLogEntry {
    pub query_id: String,
    pub k: usize,
    pub returned_domains: Vec<String>,
    pub timestamp: u64,
}

/// Append-only log of answered retrieval requests.
#[derive(Debug, Clone, Default)]
pub struct RetrievalLog {
    entries: Vec<RetrievalLogEntry>,
    tick: u64,
}

impl RetrievalLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, query_id: &str, set: &RetrievedSet) {
        self.tick += 1;
        self.entries.push(RetrievalLogEntry {
            query_id: query_id.to_owned(),
            k: set.k_requested,
            returned_domains: set.domains(),
            timestamp: self.tick,
        });
    }

    pub fn entries(&self) -> &[RetrievalLogEntry] {
        &self.entries
    }
}

/// Fraction of all returned samples that came from each domain.
pub fn domain_distribution(log: &[RetrievalLogEntry]) -> Result<BTreeMap<String, f64>> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for entry in log {
        for d in &entry.returned_domains {
            *counts.entry(d.clone()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyLog);
    }
    Ok(counts
        .into_iter()
        .map(|(d, c)| (d, c as f64 / total as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HashEmbedder;

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalize(v).unwrap()
    }

    fn sample(id: &str, domain: &str, v: &[f64]) -> KnowledgeSample {
        KnowledgeSample {
            sample_id: id.into(),
            prompt: format!("p-{id}"),
            completion: format!("c-{id}"),
            domain: domain.into(),
            embedding: unit(v),
        }
    }

    #[test]
    fn ingest_counts_and_ids() {
        let emb = HashEmbedder::default();
        let mut kb = KnowledgeBase::new(64);
        let n = kb
            .ingest(
                vec![
                    RawRecord::new("integrate x squared", "x^3/3", "math"),
                    RawRecord::new("reverse a list in python", "lst[::-1]", "code"),
                    RawRecord::new("solve 2x = 4", "x = 2", "math"),
                ],
                &emb,
            )
            .unwrap();
        assert_eq!(n, 3);
        assert_eq!(kb.domain_counts().get("math"), Some(&2));
        assert_eq!(kb.domain_counts().get("code"), Some(&1));
        let ids: Vec<&str> = kb.samples().iter().map(|s| s.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["s0000000", "s0000001", "s0000002"]);
        // prompt only is embedded
        assert_eq!(kb.samples()[0].embedding, emb.embed("integrate x squared").unwrap());
    }

    #[test]
    fn ingest_empty_stream() {
        let mut kb = KnowledgeBase::new(64);
        assert_eq!(kb.ingest(Vec::new(), &HashEmbedder::default()).unwrap(), 0);
        assert!(kb.is_empty());
    }

    #[test]
    fn ingest_rejects_malformed_and_keeps_base() {
        let mut kb = KnowledgeBase::new(64);
        let err = kb
            .ingest(
                vec![RawRecord::new("ok", "ok", "math"), RawRecord::new("bad", "x", "")],
                &HashEmbedder::default(),
            )
            .unwrap_err();
        assert!(matches!(err, Error::MalformedRecord(_)));
        assert!(kb.is_empty());
        assert!(kb.domain_counts().is_empty());
    }

    #[test]
    fn ingest_dim_conflict() {
        let mut kb = KnowledgeBase::new(32);
        let err = kb
            .ingest(vec![RawRecord::new("a", "b", "c")], &HashEmbedder::default())
            .unwrap_err();
        assert!(matches!(err, Error::DimMismatch { expected: 32, got: 64 }));
    }

    #[test]
    fn retrieve_examples() {
        let mut kb = KnowledgeBase::new(2);
        for (i, v) in [[0.6, 0.8], [1.0, 0.0], [-1.0, 0.0], [0.8, -0.6], [0.0, 1.0]].iter().enumerate() {
            kb.push(sample(&format!("x{i}"), "d", v)).unwrap();
        }
        assert!(kb.retrieve_top_k(&unit(&[1.0, 0.0]), 0).unwrap().is_empty());
        let top2 = kb.retrieve_top_k(&unit(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(top2.sample_ids().collect::<Vec<_>>(), vec!["x1", "x3"]);
        assert_eq!(top2.k_requested, 2);
        let all = kb.retrieve_top_k(&unit(&[1.0, 0.0]), 50).unwrap();
        assert_eq!(all.len(), 5);
        all.validate().unwrap();
        assert!(matches!(
            kb.retrieve_top_k(&unit(&[1.0, 0.0, 0.0]), 1),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn push_rejects_duplicates() {
        let mut kb = KnowledgeBase::new(2);
        kb.push(sample("a", "d", &[1.0, 0.0])).unwrap();
        assert!(kb.push(sample("a", "d", &[0.0, 1.0])).is_err());
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn fresh_ids_skip_taken_ones() {
        let mut kb = KnowledgeBase::new(64);
        kb.push(KnowledgeSample {
            sample_id: "s0000001".into(),
            prompt: "p".into(),
            completion: "c".into(),
            domain: "d".into(),
            embedding: HashEmbedder::default().embed("p").unwrap(),
        })
        .unwrap();
        kb.ingest(vec![RawRecord::new("q", "r", "d")], &HashEmbedder::default()).unwrap();
        assert_eq!(kb.samples()[1].sample_id, "s0000002");
    }

    #[test]
    fn domain_distribution_counts() {
        let entry = |ds: &[&str]| RetrievalLogEntry {
            query_id: "q".into(),
            k: ds.len(),
            returned_domains: ds.iter().map(|s| s.to_string()).collect(),
            timestamp: 0,
        };
        let d = domain_distribution(&[entry(&["A", "A"]), entry(&["B", "B"])]).unwrap();
        assert_eq!(d.get("A"), Some(&0.5));
        assert_eq!(d.get("B"), Some(&0.5));
        let d = domain_distribution(&[entry(&["A"])]).unwrap();
        assert_eq!(d.get("A"), Some(&1.0));
        assert!(matches!(domain_distribution(&[]), Err(Error::EmptyLog)));
    }

    #[test]
    fn log_records_monotone_ticks() {
        let mut kb = KnowledgeBase::new(2);
        kb.push(sample("a", "math", &[1.0, 0.0])).unwrap();
        let mut log = RetrievalLog::new();
        let set = kb.retrieve_top_k(&unit(&[1.0, 0.0]), 1).unwrap();
        log.record("q1", &set);
        log.record("q2", &set);
        assert_eq!(log.entries()[0].timestamp, 1);
        assert_eq!(log.entries()[1].timestamp, 2);
        assert_eq!(log.entries()[1].returned_domains, vec!["math".to_string()]);
    }
}
