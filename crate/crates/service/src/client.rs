//! Blocking clients for the knowledge-base and model protocols.
//!
//! Transport failures and timeouts surface as `BackendUnavailable`; error
//! bodies returned by the server are mapped back to the local error kinds.

use std::time::Duration;

use reqwest::blocking::Client;
use rttc_core::kb::{KbStats, Retriever};
use rttc_core::model::{AdapterState, Embedder, Generator, ModelHandle, Scorer, Trainer, TrainHyper};
use rttc_core::{Embedding, Error, Query, Response, RetrievedSet, RewardScore};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::wire::{
    EmbedRequest, EmbedResponse, ErrorBody, GenerateRequest, GenerateResponse, RetrieveRequest, ScoreRequest,
    ScoreResponse, TrainRequest, TrainResponse, TrainSample,
};

fn unavailable(e: reqwest::Error) -> Error {
    Error::BackendUnavailable(e.to_string())
}

#[derive(Debug, Clone)]
struct Http {
    base: String,
    client: Client,
}

impl Http {
    fn new(url: &str, timeout: Duration) -> Result<Self, Error> {
        let client = Client::builder().timeout(timeout).build().map_err(unavailable)?;
        Ok(Self {
            base: url.trim_end_matches('/').to_owned(),
            client,
        })
    }

    fn decode<R: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<R, Error> {
        let status = resp.status();
        let bytes = resp.bytes().map_err(unavailable)?;
        if status.is_success() {
            return serde_json::from_slice(&bytes)
                .map_err(|e| Error::BackendUnavailable(format!("unexpected response body: {e}")));
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(body.into_error()),
            Err(_) => Err(Error::BackendUnavailable(format!(
                "HTTP {status}: {}",
                String::from_utf8_lossy(&bytes)
            ))),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, Error> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(unavailable)?;
        Self::decode(resp)
    }

    fn post_text<R: DeserializeOwned>(&self, path: &str, body: String) -> Result<R, Error> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .body(body)
            .send()
            .map_err(unavailable)?;
        Self::decode(resp)
    }

    fn get<R: DeserializeOwned>(&self, path: &str) -> Result<R, Error> {
        let resp = self
            .client
            .get(format!("{}{path}", self.base))
            .send()
            .map_err(unavailable)?;
        Self::decode(resp)
    }
}

/// Client of a knowledge-base server.
#[derive(Debug, Clone)]
pub struct RemoteKb {
    http: Http,
}

impl RemoteKb {
    pub fn new(url: &str, timeout: Duration) -> Result<Self, Error> {
        Ok(Self {
            http: Http::new(url, timeout)?,
        })
    }

    pub fn stats(&self) -> Result<KbStats, Error> {
        self.http.get("/stats")
    }

    /// Sends raw records as one JSONL batch; returns the number ingested.
    pub fn ingest_jsonl(&self, jsonl: String) -> Result<usize, Error> {
        let r: crate::wire::IngestResponse = self.http.post_text("/ingest", jsonl)?;
        Ok(r.ingested)
    }
}

impl Retriever for RemoteKb {
    fn retrieve(&self, query_id: &str, e: &Embedding, k: usize) -> Result<RetrievedSet, Error> {
        let req = RetrieveRequest {
            embedding: e.values().to_vec(),
            k,
            query_id: Some(query_id.to_owned()),
        };
        let set: RetrievedSet = self.http.post("/retrieve", &req)?;
        set.validate()?;
        Ok(set)
    }
}

/// Client of a model server; provides all four capabilities.
#[derive(Debug, Clone)]
pub struct RemoteModel {
    http: Http,
    dim: usize,
}

impl RemoteModel {
    pub fn new(url: &str, dim: usize, timeout: Duration) -> Result<Self, Error> {
        Ok(Self {
            http: Http::new(url, timeout)?,
            dim,
        })
    }

    pub fn health(&self) -> Result<serde_json::Value, Error> {
        self.http.get("/health")
    }
}

impl Generator for RemoteModel {
    fn generate(&self, handle: &ModelHandle, context: &str) -> Result<Response, Error> {
        let req = GenerateRequest {
            base_id: handle.base_id.clone(),
            adapter_digest: handle.adapter_digest().map(str::to_owned),
            context: context.to_owned(),
        };
        let r: GenerateResponse = self.http.post("/generate", &req)?;
        Response::new(r.text, r.produced_by, req.adapter_digest)
            .map_err(|e| Error::BackendUnavailable(format!("inconsistent generate response: {e}")))
    }
}

impl Scorer for RemoteModel {
    fn score(&self, query: &Query, response: &Response) -> Result<RewardScore, Error> {
        let req = ScoreRequest {
            query: query.clone(),
            response: response.clone(),
        };
        let r: ScoreResponse = self.http.post("/score", &req)?;
        RewardScore::new(r.value)
    }
}

impl Embedder for RemoteModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, Error> {
        if text.is_empty() {
            return Err(Error::EmptyText);
        }
        let r: EmbedResponse = self.http.post("/embed", &EmbedRequest { text: text.to_owned() })?;
        if r.embedding.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: r.embedding.len(),
            });
        }
        // Keep exact bits when the server already returns a unit vector.
        Embedding::from_unit(r.embedding.clone()).or_else(|_| Embedding::normalize(&r.embedding))
    }
}

impl Trainer for RemoteModel {
    fn train(&self, base: &ModelHandle, samples: &RetrievedSet, hyper: &TrainHyper) -> Result<AdapterState, Error> {
        if let Some(d) = base.adapter_digest() {
            return Err(Error::AdapterOnBase(d.to_owned()));
        }
        if samples.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        let req = TrainRequest {
            base_id: base.base_id.clone(),
            samples: samples.samples.iter().map(TrainSample::from_retrieved).collect(),
            hyper: hyper.clone(),
        };
        let r: TrainResponse = self.http.post("/train", &req)?;
        let mut trained_on: Vec<String> = samples.sample_ids().map(str::to_owned).collect();
        trained_on.sort();
        Ok(AdapterState {
            digest: r.adapter_digest,
            base_id: base.base_id.clone(),
            trained_on,
            hyper: hyper.clone(),
        })
    }
}
