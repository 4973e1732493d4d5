//! Knowledge-base HTTP service.
//!
//! Retrieval reads an immutable snapshot; ingestion builds a new snapshot and
//! swaps it in, so in-flight retrievals never observe a half-applied batch.

use std::sync::{Arc, Mutex, RwLock};

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use rttc_core::kb::{KbStats, KnowledgeBase, RawRecord, RetrievalLog, RetrievalLogEntry};
use rttc_core::model::{Embedder, HashEmbedder};
use rttc_core::{Embedding, Error, RetrievedSet};

use crate::http::ApiError;
use crate::wire::{IngestResponse, RetrieveRequest};

pub struct KbService {
    snapshot: RwLock<Arc<KnowledgeBase>>,
    log: Mutex<RetrievalLog>,
    embedder: Box<dyn Embedder>,
}

impl KbService {
    /// Serves `kb`; ingested prompts are embedded with the hash embedder of the base's dimension.
    pub fn new(kb: KnowledgeBase) -> Result<Self, Error> {
        let embedder = HashEmbedder::new(kb.dim())?;
        Ok(Self::with_embedder(kb, Box::new(embedder)))
    }

    pub fn with_embedder(kb: KnowledgeBase, embedder: Box<dyn Embedder>) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(kb)),
            log: Mutex::new(RetrievalLog::new()),
            embedder,
        }
    }

    pub fn snapshot(&self) -> Arc<KnowledgeBase> {
        self.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn log(&self) -> Vec<RetrievalLogEntry> {
        self.log.lock().unwrap_or_else(|p| p.into_inner()).entries().to_vec()
    }

    pub fn retrieve(&self, req: RetrieveRequest) -> Result<RetrievedSet, Error> {
        let kb = self.snapshot();
        if req.embedding.len() != kb.dim() {
            return Err(Error::DimMismatch {
                expected: kb.dim(),
                got: req.embedding.len(),
            });
        }
        let e = Embedding::from_unit(req.embedding.clone()).or_else(|_| Embedding::normalize(&req.embedding))?;
        let set = kb.retrieve_top_k(&e, req.k)?;
        let qid = req.query_id.as_deref().unwrap_or("");
        self.log.lock().unwrap_or_else(|p| p.into_inner()).record(qid, &set);
        Ok(set)
    }

    /// Parses a JSONL body of raw records and ingests it as one batch.
    pub fn ingest_jsonl(&self, body: &str) -> Result<usize, Error> {
        let mut records = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: RawRecord =
                serde_json::from_str(line).map_err(|e| Error::MalformedRecord(format!("line {}: {e}", i + 1)))?;
            records.push(r);
        }
        let mut guard = self.snapshot.write().unwrap_or_else(|p| p.into_inner());
        let mut next = KnowledgeBase::clone(&guard);
        let n = next.ingest(records, self.embedder.as_ref())?;
        *guard = Arc::new(next);
        Ok(n)
    }
}

async fn retrieve(State(svc): State<Arc<KbService>>, body: String) -> Result<Json<RetrievedSet>, ApiError> {
    let req: RetrieveRequest = crate::http::parse(&body)?;
    Ok(Json(svc.retrieve(req)?))
}

async fn ingest(State(svc): State<Arc<KbService>>, body: String) -> Result<Json<IngestResponse>, ApiError> {
    let ingested = tokio::task::spawn_blocking(move || svc.ingest_jsonl(&body))
        .await
        .map_err(|e| Error::BackendUnavailable(e.to_string()))??;
    Ok(Json(IngestResponse { ingested }))
}

async fn stats(State(svc): State<Arc<KbService>>) -> Json<KbStats> {
    Json(svc.snapshot().stats())
}

async fn log(State(svc): State<Arc<KbService>>) -> Json<Vec<RetrievalLogEntry>> {
    Json(svc.log())
}

pub fn router(svc: Arc<KbService>) -> Router {
    Router::new()
        .route("/retrieve", post(retrieve))
        .route("/ingest", post(ingest))
        .route("/stats", get(stats))
        .route("/log", get(log))
        .with_state(svc)
}
