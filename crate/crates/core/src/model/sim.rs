//! Deterministic simulated backends.
//!
//! None of these emulate model quality. The generator tags its output with
//! the path that produced it, the scorer reads rewards from a script, the
//! embedder feature-hashes tokens, and the trainer only derives a digest.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{AdapterState, Embedder, Generator, ModelHandle, Scorer, Trainer, TrainHyper};
use crate::error::{Error, Result};
use crate::pipeline::{EXAMPLE_HEADER, QUERY_HEADER};
use crate::types::{Producer, Query, Response, RetrievedSet, RewardScore};
use crate::Embedding;

pub const DEFAULT_EMBED_DIM: usize = 64;

const EXCERPT_CHARS: usize = 48;

/// Signed feature hashing of lowercase alphanumeric tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self { dim })
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBED_DIM }
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut raw = vec![0.0f64; self.dim];
        let mut any = false;
        for tok in tokens(text) {
            let h = fnv1a(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
            raw[bucket] += sign;
            any = true;
        }
        if !any {
            return Err(Error::EmptyText);
        }
        Embedding::normalize(&raw)
    }
}

/// One scripted reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub query_id: String,
    pub produced_by: Producer,
    pub value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    default: f64,
    #[serde(default)]
    entries: Vec<ScriptEntry>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    unavailable: BTreeSet<String>,
}

/// Reward lookup table keyed by (query id, response provenance).
///
/// Query ids listed in `unavailable` make every model call for that query
/// fail with `BackendUnavailable`, for exercising error paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScriptFile", into = "ScriptFile")]
pub struct RewardScript {
    table: HashMap<(String, Producer), f64>,
    default: f64,
    unavailable: BTreeSet<String>,
}

impl TryFrom<ScriptFile> for RewardScript {
    type Error = Error;

    fn try_from(f: ScriptFile) -> Result<Self> {
        let mut s = RewardScript::new(f.default)?;
        for e in f.entries {
            s.set(&e.query_id, e.produced_by, e.value)?;
        }
        s.unavailable = f.unavailable;
        Ok(s)
    }
}

impl From<RewardScript> for ScriptFile {
    fn from(s: RewardScript) -> Self {
        let mut entries: Vec<ScriptEntry> = s
            .table
            .into_iter()
            .map(|((query_id, produced_by), value)| ScriptEntry {
                query_id,
                produced_by,
                value,
            })
            .collect();
        entries.sort_by(|a, b| (&a.query_id, a.produced_by).cmp(&(&b.query_id, b.produced_by)));
        ScriptFile {
            default: s.default,
            entries,
            unavailable: s.unavailable,
        }
    }
}

impl RewardScript {
    pub fn new(default: f64) -> Result<Self> {
        if !default.is_finite() {
            return Err(Error::NonFiniteReward);
        }
        Ok(Self {
            table: HashMap::new(),
            default,
            unavailable: BTreeSet::new(),
        })
    }

    pub fn set(&mut self, query_id: &str, produced_by: Producer, value: f64) -> Result<&mut Self> {
        if !value.is_finite() {
            return Err(Error::NonFiniteReward);
        }
        self.table.insert((query_id.to_owned(), produced_by), value);
        Ok(self)
    }

    /// Scripts all three rewards of one query.
    pub fn set_all(&mut self, query_id: &str, r0: f64, r_rag: f64, r_ttt: f64) -> Result<&mut Self> {
        self.set(query_id, Producer::Direct, r0)?;
        self.set(query_id, Producer::Rag, r_rag)?;
        self.set(query_id, Producer::Ttt, r_ttt)
    }

    pub fn mark_unavailable(&mut self, query_id: &str) -> &mut Self {
        self.unavailable.insert(query_id.to_owned());
        self
    }

    pub fn lookup(&self, query_id: &str, produced_by: Producer) -> f64 {
        self.table
            .get(&(query_id.to_owned(), produced_by))
            .copied()
            .unwrap_or(self.default)
    }

    pub fn default_value(&self) -> f64 {
        self.default
    }

    fn check_available(&self, query_id: &str) -> Result<()> {
        if self.unavailable.contains(query_id) {
            return Err(Error::BackendUnavailable(format!("scripted outage for query {query_id}")));
        }
        Ok(())
    }
}

/// All four simulated capabilities behind one value.
#[derive(Debug, Clone)]
pub struct SimulatedModel {
    embedder: HashEmbedder,
    script: RewardScript,
}

impl SimulatedModel {
    pub fn new(embedder: HashEmbedder, script: RewardScript) -> Self {
        Self { embedder, script }
    }

    pub fn script(&self) -> &RewardScript {
        &self.script
    }
}

/// Pulls the query text back out of a (possibly augmented) context.
fn query_excerpt(context: &str) -> String {
    let query = match context.rfind(QUERY_HEADER) {
        Some(pos) if context.starts_with(EXAMPLE_HEADER) => &context[pos + QUERY_HEADER.len()..],
        _ => context,
    };
    query
        .chars()
        .take(EXCERPT_CHARS)
        .map(|c| if c == '\n' { ' ' } else { c })
        .collect()
}

impl SimulatedModel {
    /// Generation given only the digest of the attached adapter, if any.
    pub fn render(&self, context: &str, adapter_digest: Option<&str>) -> Result<Response> {
        if context.is_empty() {
            return Err(Error::EmptyText);
        }
        let excerpt = query_excerpt(context);
        let (produced_by, digest) = match adapter_digest {
            Some(d) => (Producer::Ttt, Some(d.to_owned())),
            None if context.starts_with(EXAMPLE_HEADER) => (Producer::Rag, None),
            None => (Producer::Direct, None),
        };
        let tag = match &digest {
            Some(d) => format!("{}|{}", produced_by.as_str(), d),
            None => produced_by.as_str().to_owned(),
        };
        Response::new(format!("[{tag}] answer({excerpt})"), produced_by, digest)
    }
}

impl Generator for SimulatedModel {
    fn generate(&self, handle: &ModelHandle, context: &str) -> Result<Response> {
        self.render(context, handle.adapter_digest())
    }
}

impl Scorer for SimulatedModel {
    fn score(&self, query: &Query, response: &Response) -> Result<RewardScore> {
        self.script.check_available(&query.id)?;
        RewardScore::new(self.script.lookup(&query.id, response.produced_by))
    }
}

impl Embedder for SimulatedModel {
    fn dim(&self) -> usize {
        self.embedder.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        self.embedder.embed(text)
    }
}

impl Trainer for SimulatedModel {
    fn train(&self, base: &ModelHandle, samples: &RetrievedSet, hyper: &TrainHyper) -> Result<AdapterState> {
        if let Some(d) = base.adapter_digest() {
            return Err(Error::AdapterOnBase(d.to_owned()));
        }
        AdapterState::derive(&base.base_id, samples.sample_ids(), hyper)
    }
}
