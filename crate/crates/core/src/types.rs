use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Embedding;

/// An incoming user query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Ground-truth domain label; only used for reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_hint: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            domain_hint: None,
        }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain_hint = Some(domain.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::MalformedRecord("query id is empty".into()));
        }
        if self.text.is_empty() {
            return Err(Error::MalformedRecord(format!("query {} has empty text", self.id)));
        }
        Ok(())
    }
}

/// A (prompt, completion) record of the multi-domain knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSample {
    pub sample_id: String,
    pub prompt: String,
    pub completion: String,
    pub domain: String,
    pub embedding: Embedding,
}

/// One retrieved sample together with its similarity to the query embedding.
///
/// The sample embedding is not carried: it never leaves the knowledge base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSample {
    pub sample_id: String,
    pub prompt: String,
    pub completion: String,
    pub domain: String,
    pub similarity: f64,
}

/// Samples returned by a top-k search, best match first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSet {
    pub samples: Vec<RetrievedSample>,
    pub k_requested: usize,
}

impl RetrievedSet {
    pub fn empty(k_requested: usize) -> Self {
        Self {
            samples: Vec::new(),
            k_requested,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.sample_id.as_str())
    }

    pub fn domains(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.domain.clone()).collect()
    }

    /// Checks ordering, size and uniqueness; used on sets received over the wire.
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() > self.k_requested {
            return Err(Error::MalformedRecord(format!(
                "{} samples returned for k={}",
                self.samples.len(),
                self.k_requested
            )));
        }
        if self
            .samples
            .windows(2)
            .any(|w| w[0].similarity < w[1].similarity)
        {
            return Err(Error::MalformedRecord("similarities not sorted".into()));
        }
        let mut ids: Vec<&str> = self.sample_ids().collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::MalformedRecord("duplicate sample_id".into()));
        }
        Ok(())
    }
}

/// Which generation path produced a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Producer {
    Direct,
    Rag,
    Ttt,
}

impl Producer {
    pub fn as_str(self) -> &'static str {
        match self {
            Producer::Direct => "Direct",
            Producer::Rag => "Rag",
            Producer::Ttt => "Ttt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub text: String,
    pub produced_by: Producer,
    /// Set exactly when `produced_by` is `Ttt`.
    #[serde(default)]
    pub adapter_digest: Option<String>,
}

impl Response {
    pub fn new(text: String, produced_by: Producer, adapter_digest: Option<String>) -> Result<Self> {
        if (produced_by == Producer::Ttt) != adapter_digest.is_some() {
            return Err(Error::MalformedRecord(format!(
                "adapter_digest must be present iff produced_by is Ttt (got {})",
                produced_by.as_str()
            )));
        }
        Ok(Self {
            text,
            produced_by,
            adapter_digest,
        })
    }
}

/// Reward-model score. Unbounded scale, always finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardScore(f64);

impl RewardScore {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::NonFiniteReward)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Branch that answered a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    NoAdaptation,
    Rag,
    Ttt,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::NoAdaptation, Strategy::Rag, Strategy::Ttt];

    /// The response provenance this strategy returns.
    pub fn producer(self) -> Producer {
        match self {
            Strategy::NoAdaptation => Producer::Direct,
            Strategy::Rag => Producer::Rag,
            Strategy::Ttt => Producer::Ttt,
        }
    }
}
