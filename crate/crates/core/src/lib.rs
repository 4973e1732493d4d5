//! Reward-guided test-time compute routing.
//!
//! Each query is first answered directly and scored by a reward model. Low
//! scores escalate to retrieval-augmented generation and, if that does not
//! help, to test-time training on the retrieved samples. A query-state cache
//! reuses retrieval results and trained adapters across similar queries, and
//! a cost ledger accounts for every stage executed.

pub mod config;
pub mod cost;
pub mod embedding;
pub mod error;
pub mod kb;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod qsc;
pub mod scalar;
pub mod synthetic;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{KnowledgeSample, Producer, Query, Response, RetrievedSample, RetrievedSet, RewardScore, Strategy};

/// Double-precision unit embedding, the representation used on the wire and on disk.
pub type Embedding = embedding::UnitVector<f64>;
/// Single-precision unit embedding.
pub type Embedding32 = embedding::UnitVector<f32>;
/// Double-precision flat index.
pub type FlatIndex = kb::FlatIndex<f64>;
/// Query-state cache keyed by double-precision embeddings.
pub type StateCache<V> = qsc::StateCache<f64, V>;
/// Cost prices in the default `f64` unit.
pub type CostParams = cost::CostParams<f64>;
