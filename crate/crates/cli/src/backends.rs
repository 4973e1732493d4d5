//! Builds the configured backends.

use std::time::Duration;

use rttc_core::config::{KbBackend, ModelBackend, RunConfig};
use rttc_core::kb::{KnowledgeBase, Retriever};
use rttc_core::model::{Embedder, HashEmbedder, SimulatedModel};
use rttc_core::pipeline::Backends;
use rttc_core::{synthetic, Error, Result};
use rttc_service::{RemoteKb, RemoteModel};

pub const EMBEDDER_NAME: &str = "hash-fnv1a";

enum Model {
    Simulated(SimulatedModel),
    Remote(RemoteModel),
}

pub struct Loaded {
    retriever: Box<dyn Retriever>,
    model: Model,
}

impl Loaded {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let model = match &cfg.backends.model {
            ModelBackend::Simulated { dim, .. } => {
                Model::Simulated(SimulatedModel::new(HashEmbedder::new(*dim)?, cfg.reward_script()?))
            }
            ModelBackend::Remote { url, dim, timeout_ms } => {
                Model::Remote(RemoteModel::new(url, *dim, Duration::from_millis(*timeout_ms))?)
            }
        };
        let dim = match &model {
            Model::Simulated(m) => m.dim(),
            Model::Remote(m) => m.dim(),
        };
        let retriever: Box<dyn Retriever> = match &cfg.backends.kb {
            KbBackend::Embedded { base } => {
                let (kb, _) = KnowledgeBase::load(base)?;
                check_dim(kb.dim(), dim)?;
                Box::new(kb)
            }
            KbBackend::Synthetic { domains, per_domain } => {
                let mut kb = KnowledgeBase::new(dim);
                kb.ingest(synthetic::corpus(cfg.seed, domains, *per_domain), &HashEmbedder::new(dim)?)?;
                Box::new(kb)
            }
            KbBackend::Remote { url, timeout_ms } => {
                let kb = RemoteKb::new(url, Duration::from_millis(*timeout_ms))?;
                if let Ok(stats) = kb.stats() {
                    check_dim(stats.dim, dim)?;
                }
                Box::new(kb)
            }
        };
        Ok(Self { retriever, model })
    }

    pub fn backends(&self) -> Backends<'_> {
        match &self.model {
            Model::Simulated(m) => Backends::simulated(m, self.retriever.as_ref()),
            Model::Remote(m) => Backends {
                generator: m,
                scorer: m,
                embedder: m,
                trainer: m,
                retriever: self.retriever.as_ref(),
            },
        }
    }
}

fn check_dim(kb: usize, model: usize) -> Result<()> {
    if kb != model {
        return Err(Error::Config(format!(
            "knowledge base dim {kb} does not match embedder dim {model}"
        )));
    }
    Ok(())
}
