//! The simulated model backends served over the model wire protocol.

use std::sync::Arc;

use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use rttc_core::model::{adapter_digest, Embedder, Scorer, SimulatedModel};
use rttc_core::Error;
use serde_json::{json, Value};

use crate::http::{parse, ApiError};
use crate::wire::{
    EmbedRequest, EmbedResponse, GenerateRequest, GenerateResponse, ScoreRequest, ScoreResponse, TrainRequest,
    TrainResponse,
};

pub fn generate(model: &SimulatedModel, req: &GenerateRequest) -> Result<GenerateResponse, Error> {
    let r = model.render(&req.context, req.adapter_digest.as_deref())?;
    Ok(GenerateResponse {
        text: r.text,
        produced_by: r.produced_by,
    })
}

pub fn score(model: &SimulatedModel, req: &ScoreRequest) -> Result<ScoreResponse, Error> {
    Ok(ScoreResponse {
        value: model.score(&req.query, &req.response)?.value(),
    })
}

pub fn embed(model: &SimulatedModel, req: &EmbedRequest) -> Result<EmbedResponse, Error> {
    Ok(EmbedResponse {
        embedding: model.embed(&req.text)?.into_values(),
    })
}

/// Same digest the in-process trainer derives for the same sample ids.
pub fn train(req: &TrainRequest) -> Result<TrainResponse, Error> {
    if req.samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    req.hyper.validate()?;
    let mut ids: Vec<String> = req.samples.iter().map(|s| s.effective_id()).collect();
    ids.sort();
    Ok(TrainResponse {
        adapter_digest: adapter_digest(&ids, &req.hyper),
    })
}

async fn generate_h(State(m): State<Arc<SimulatedModel>>, body: String) -> Result<Json<GenerateResponse>, ApiError> {
    Ok(Json(generate(&m, &parse(&body)?)?))
}

async fn score_h(State(m): State<Arc<SimulatedModel>>, body: String) -> Result<Json<ScoreResponse>, ApiError> {
    Ok(Json(score(&m, &parse(&body)?)?))
}

async fn embed_h(State(m): State<Arc<SimulatedModel>>, body: String) -> Result<Json<EmbedResponse>, ApiError> {
    Ok(Json(embed(&m, &parse(&body)?)?))
}

async fn train_h(body: String) -> Result<Json<TrainResponse>, ApiError> {
    Ok(Json(train(&parse(&body)?)?))
}

async fn health(State(m): State<Arc<SimulatedModel>>) -> Json<Value> {
    Json(json!({"status": "ok", "backend": "simulated", "dim": m.dim()}))
}

pub fn router(model: Arc<SimulatedModel>) -> Router {
    Router::new()
        .route("/generate", post(generate_h))
        .route("/score", post(score_h))
        .route("/embed", post(embed_h))
        .route("/train", post(train_h))
        .route("/health", get(health))
        .with_state(model)
}
