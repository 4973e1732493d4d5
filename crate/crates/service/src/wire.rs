//! Request and response bodies of the knowledge-base and model protocols.

use rttc_core::model::TrainHyper;
use rttc_core::{Error, Producer, Query, Response, RetrievedSample};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrieveRequest {
    pub embedding: Vec<f64>,
    pub k: usize,
    /// Recorded in the server's retrieval log when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub ingested: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub base_id: String,
    pub adapter_digest: Option<String>,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
    pub produced_by: Producer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub query: Query,
    pub response: Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSample {
    /// Optional; when absent the sample is identified by its content.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub prompt: String,
    pub completion: String,
}

impl TrainSample {
    pub fn from_retrieved(s: &RetrievedSample) -> Self {
        Self {
            sample_id: Some(s.sample_id.clone()),
            prompt: s.prompt.clone(),
            completion: s.completion.clone(),
        }
    }

    /// The id the adapter digest is computed over.
    pub fn effective_id(&self) -> String {
        match &self.sample_id {
            Some(id) => id.clone(),
            None => {
                let mut h = Sha256::new();
                h.update(self.prompt.as_bytes());
                h.update([0u8]);
                h.update(self.completion.as_bytes());
                format!("content:{}", hex::encode(&h.finalize()[..16]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub base_id: String,
    pub samples: Vec<TrainSample>,
    pub hyper: TrainHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub adapter_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ErrorBody {
    pub fn from_error(e: &Error) -> Self {
        Self {
            error: e.kind().to_owned(),
            message: e.to_string(),
        }
    }

    /// Maps a server-reported error back onto the local error type.
    pub fn into_error(self) -> Error {
        match self.error.as_str() {
            "ZeroVector" => Error::ZeroVector,
            "EmptyText" => Error::EmptyText,
            "EmptySampleSet" => Error::EmptySampleSet,
            "NonFiniteReward" => Error::NonFiniteReward,
            "MalformedRecord" => Error::MalformedRecord(self.message),
            "AdapterOnBase" => Error::AdapterOnBase(self.message),
            _ => Error::BackendUnavailable(format!("{}: {}", self.error, self.message)),
        }
    }
}
