//! Capability interfaces for the four model roles (generator, reward model,
//! embedder, trainer) and the shared adapter/training metadata types.

pub(crate) mod sim;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{Query, Response, RetrievedSet, RewardScore};
use crate::Embedding;

pub use sim::{HashEmbedder, RewardScript, ScriptEntry, SimulatedModel, DEFAULT_EMBED_DIM};

/// Produces a response for a context, optionally through a trained adapter.
pub trait Generator: Send + Sync {
    fn generate(&self, handle: &ModelHandle, context: &str) -> Result<Response>;
}

/// Reward model: estimates the quality of a response to a query.
pub trait Scorer: Send + Sync {
    fn score(&self, query: &Query, response: &Response) -> Result<RewardScore>;
}

/// Shared text encoder for queries and knowledge-base prompts.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

/// Query-specific fine-tuning of the base model.
pub trait Trainer: Send + Sync {
    fn train(&self, base: &ModelHandle, samples: &RetrievedSet, hyper: &TrainHyper) -> Result<AdapterState>;
}

/// Fine-tuning hyperparameters. The simulated trainer only carries them
/// as metadata (they feed the adapter digest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: u32,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub target_layers: Vec<String>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 2,
            learning_rate: 5e-5,
            batch_size: 1,
            lora_rank: 32,
            lora_alpha: 16,
            target_layers: ["q_proj", "k_proj", "v_proj", "up_proj", "down_proj"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let ints = [self.epochs, self.batch_size, self.lora_rank, self.lora_alpha];
        if ints.contains(&0) || !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("train hyperparameters must all be positive".into()));
        }
        if self.target_layers.is_empty() {
            return Err(Error::Config("target_layers must not be empty".into()));
        }
        Ok(())
    }
}

/// Metadata of a trained adapter. Weights, if any, live with the backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterState {
    pub digest: String,
    pub base_id: String,
    pub trained_on: Vec<String>,
    pub hyper: TrainHyper,
}

impl AdapterState {
    /// Builds the adapter record for training `base_id` on `sample_ids`.
    /// The digest depends only on the sorted sample ids and the hyperparameters.
    pub fn derive<'a>(
        base_id: &str,
        sample_ids: impl IntoIterator<Item = &'a str>,
        hyper: &TrainHyper,
    ) -> Result<Self> {
        let mut ids: Vec<String> = sample_ids.into_iter().map(str::to_owned).collect();
        if ids.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        ids.sort();
        Ok(Self {
            digest: adapter_digest(&ids, hyper),
            base_id: base_id.to_owned(),
            trained_on: ids,
            hyper: hyper.clone(),
        })
    }
}

/// Hex SHA-256 over a line encoding of the sorted sample ids and `hyper`.
/// The learning rate enters as its IEEE-754 bit pattern so the digest does
/// not depend on any float formatting.
pub fn adapter_digest(sorted_ids: &[String], hyper: &TrainHyper) -> String {
    let mut h = Sha256::new();
    h.update(b"rttc-adapter/1\n");
    for id in sorted_ids {
        h.update(format!("sample={id}\n"));
    }
    h.update(format!(
        "epochs={}\nlearning_rate={:016x}\nbatch_size={}\nlora_rank={}\nlora_alpha={}\n",
        hyper.epochs,
        hyper.learning_rate.to_bits(),
        hyper.batch_size,
        hyper.lora_rank,
        hyper.lora_alpha
    ));
    for layer in &hyper.target_layers {
        h.update(format!("target_layer={layer}\n"));
    }
    hex::encode(h.finalize())
}

/// A base model, optionally with an adapter attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHandle {
    pub base_id: String,
    #[serde(default)]
    pub adapter: Option<AdapterState>,
}

impl ModelHandle {
    pub fn base(base_id: impl Into<String>) -> Self {
        Self {
            base_id: base_id.into(),
            adapter: None,
        }
    }

    pub fn with_adapter(&self, adapter: AdapterState) -> Self {
        Self {
            base_id: self.base_id.clone(),
            adapter: Some(adapter),
        }
    }

    pub fn adapter_digest(&self) -> Option<&str> {
        self.adapter.as_ref().map(|a| a.digest.as_str())
    }
}
