//! HTTP services for the routing pipeline: the knowledge-base server, a
//! server exposing the simulated model backends, and blocking clients that
//! plug remote backends into the pipeline.

pub mod client;
pub mod http;
pub mod kb_server;
pub mod model_server;
pub mod wire;

use std::sync::Arc;

use rttc_core::kb::KnowledgeBase;
use rttc_core::model::SimulatedModel;
use rttc_core::Error;

pub use client::{RemoteKb, RemoteModel};
pub use http::ServerHandle;
pub use kb_server::KbService;

/// Starts a knowledge-base server in the background.
pub fn spawn_kb_server(kb: KnowledgeBase, bind: &str) -> Result<(ServerHandle, Arc<KbService>), Error> {
    let svc = Arc::new(KbService::new(kb)?);
    let handle = ServerHandle::spawn(kb_server::router(svc.clone()), bind)?;
    Ok((handle, svc))
}

/// Starts a simulated model server in the background.
pub fn spawn_model_server(model: SimulatedModel, bind: &str) -> Result<ServerHandle, Error> {
    ServerHandle::spawn(model_server::router(Arc::new(model)), bind)
}
