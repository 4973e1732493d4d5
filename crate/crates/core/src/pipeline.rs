//! Reward-gated routing between direct inference, retrieval-augmented
//! generation and test-time training.
//!
//! Sequential mode: answer directly when the first response scores at least
//! `tau_r`; otherwise retrieve `k` samples and answer with them in context if
//! that beats the first score; otherwise train an adapter on the same samples
//! and return its (unscored) answer. Joint mode runs both adapted paths on
//! the same samples and keeps the better-scored one, preferring RAG on ties.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cost::{CostEvent, CostMode, CostParams, Stage};
use crate::error::{Error, Result};
use crate::kb::Retriever;
use crate::metrics::{compute_metrics, OutcomeRecord, QueryFailure, RunMetrics};
use crate::model::{sim, AdapterState, Embedder, Generator, ModelHandle, Scorer, SimulatedModel, Trainer, TrainHyper};
use crate::qsc::{QscConfig, QscState};
use crate::types::{Query, Response, RetrievedSet, Strategy};
use crate::Embedding;

/// First line of every augmented context.
pub const EXAMPLE_HEADER: &str = "### Example\n";
/// Separates the rendered samples from the query text.
pub const QUERY_HEADER: &str = "### Query\n";

/// Renders retrieved samples ahead of the query, in retrieval order.
pub fn augment_context(samples: &RetrievedSet, x: &Query) -> Result<String> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut out = String::new();
    for s in &samples.samples {
        out.push_str(EXAMPLE_HEADER);
        out.push_str("Q: ");
        out.push_str(&s.prompt);
        out.push_str("\nA: ");
        out.push_str(&s.completion);
        out.push('\n');
    }
    out.push_str(QUERY_HEADER);
    out.push_str(&x.text);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    #[default]
    Sequential,
    Joint,
    /// Fixed-strategy baselines: always answer directly / with RAG / with TTT.
    NoAdapt,
    RagOnly,
    TttOnly,
}

impl PipelineMode {
    pub fn cost_mode(self) -> CostMode {
        match self {
            PipelineMode::Sequential => CostMode::Rttc,
            PipelineMode::Joint => CostMode::RttcJoint,
            PipelineMode::NoAdapt => CostMode::NoAdapt,
            PipelineMode::RagOnly => CostMode::Rag,
            PipelineMode::TttOnly => CostMode::Ttt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Reward threshold for accepting the first response.
    pub tau_r: f64,
    /// Samples retrieved per adapted query.
    pub k: usize,
    pub mode: PipelineMode,
    pub hyper: TrainHyper,
    pub qsc_enabled: bool,
    pub base_id: String,
    /// Score the RAG response against the augmented input instead of the
    /// original query.
    pub score_rag_on_augmented: bool,
    /// Record wall-clock seconds per stage. Makes outcome files non-reproducible.
    pub record_timing: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau_r: 2.0,
            k: 4,
            mode: PipelineMode::Sequential,
            hyper: TrainHyper::default(),
            qsc_enabled: false,
            base_id: "base".into(),
            score_rag_on_augmented: false,
            record_timing: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("pipeline k must be at least 1".into()));
        }
        if !self.tau_r.is_finite() {
            return Err(Error::Config("pipeline tau_r must be finite".into()));
        }
        if self.base_id.is_empty() {
            return Err(Error::Config("pipeline base_id must not be empty".into()));
        }
        self.hyper.validate()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rewards {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_rag: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ttt: Option<f64>,
}

/// Whether each cacheable stage was served from the query-state cache.
/// `None` when the query never reached the stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheFlags {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rag_hit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttt_hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub query_id: String,
    pub mode: PipelineMode,
    pub strategy: Strategy,
    #[serde(rename = "final")]
    pub final_response: Response,
    pub rewards: Rewards,
    /// Samples the adapted paths used, best match first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved_domains: Vec<String>,
    pub cost_events: Vec<CostEvent>,
    pub cache_flags: CacheFlags,
}

impl RoutingOutcome {
    /// Number of reward-model calls this query made.
    pub fn score_calls(&self) -> usize {
        self.cost_events
            .iter()
            .filter(|e| e.stage == Stage::RewardEval)
            .count()
    }
}

/// The capabilities one pipeline run needs.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub generator: &'a dyn Generator,
    pub scorer: &'a dyn Scorer,
    pub embedder: &'a dyn Embedder,
    pub trainer: &'a dyn Trainer,
    pub retriever: &'a dyn Retriever,
}

impl<'a> Backends<'a> {
    pub fn simulated(model: &'a SimulatedModel, retriever: &'a dyn Retriever) -> Self {
        Self {
            generator: model,
            scorer: model,
            embedder: model,
            trainer: model,
            retriever,
        }
    }
}

/// Rejects empty result sets so they are never cached or trained on.
struct NonEmpty<'a>(&'a dyn Retriever);

impl Retriever for NonEmpty<'_> {
    fn retrieve(&self, query_id: &str, e: &Embedding, k: usize) -> Result<RetrievedSet> {
        let set = self.0.retrieve(query_id, e, k)?;
        if set.is_empty() {
            return Err(Error::EmptyRetrieval);
        }
        Ok(set)
    }
}

/// Per-query event recorder.
struct Trace<'p> {
    query_id: String,
    prices: &'p CostParams,
    timing: bool,
    events: Vec<CostEvent>,
}

impl<'p> Trace<'p> {
    fn new(query_id: &str, prices: &'p CostParams, timing: bool) -> Self {
        Self {
            query_id: query_id.to_owned(),
            prices,
            timing,
            events: Vec::new(),
        }
    }

    fn stage<R>(&mut self, stage: Stage, tokens: Option<u64>, f: impl FnOnce() -> Result<R>) -> Result<R> {
        let start = self.timing.then(Instant::now);
        let out = f()?;
        let mut ev = CostEvent::new(&self.query_id, stage, self.prices).with_tokens(tokens);
        ev.wall_seconds = start.map(|s| s.elapsed().as_secs_f64());
        self.events.push(ev);
        Ok(out)
    }

    /// Records a cacheable stage, priced at zero when it was a hit.
    fn cached<R>(&mut self, stage: Stage, tokens: Option<u64>, f: impl FnOnce() -> Result<(R, bool)>) -> Result<(R, bool)> {
        let start = self.timing.then(Instant::now);
        let (out, hit) = f()?;
        let mut ev = if hit {
            CostEvent::bypassed(&self.query_id, stage)
        } else {
            CostEvent::new(&self.query_id, stage, self.prices).with_tokens(tokens)
        };
        ev.wall_seconds = start.map(|s| s.elapsed().as_secs_f64());
        self.events.push(ev);
        Ok((out, hit))
    }
}

fn token_count(text: &str) -> Option<u64> {
    Some(sim::tokens(text).count() as u64)
}

fn training_tokens(s: &RetrievedSet) -> Option<u64> {
    Some(
        s.samples
            .iter()
            .map(|x| sim::tokens(&x.prompt).count() + sim::tokens(&x.completion).count())
            .sum::<usize>() as u64,
    )
}

/// Outcome list plus aggregate metrics for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamReport {
    pub records: Vec<OutcomeRecord>,
    pub metrics: RunMetrics,
}

/// Routes queries through the configured backends.
///
/// With caching enabled the cache state is shared by all queries and guarded
/// by a mutex, so `run` may be called from several threads.
pub struct Pipeline<'a> {
    config: PipelineConfig,
    prices: CostParams,
    backends: Backends<'a>,
    base: ModelHandle,
    qsc: Option<Mutex<QscState>>,
}

impl<'a> Pipeline<'a> {
    /// Builds a pipeline; a fresh cache is created when `qsc_enabled` is set.
    pub fn new(config: PipelineConfig, prices: CostParams, backends: Backends<'a>, qsc: &QscConfig) -> Result<Self> {
        config.validate()?;
        prices.validate()?;
        let state = if config.qsc_enabled {
            Some(Mutex::new(QscState::new(qsc.clone())?))
        } else {
            None
        };
        Ok(Self {
            base: ModelHandle::base(config.base_id.clone()),
            config,
            prices,
            backends,
            qsc: state,
        })
    }

    /// Replaces the cache with a pre-warmed state. Ignored unless caching is enabled.
    pub fn with_qsc_state(mut self, state: QscState) -> Self {
        if self.config.qsc_enabled {
            self.qsc = Some(Mutex::new(state));
        }
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn prices(&self) -> &CostParams {
        &self.prices
    }

    pub fn qsc_snapshot(&self) -> Option<QscState> {
        self.qsc
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|p| p.into_inner()).clone())
    }

    pub fn run(&self, x: &Query) -> Result<RoutingOutcome> {
        x.validate()?;
        match self.config.mode {
            PipelineMode::Sequential => self.run_sequential(x),
            PipelineMode::Joint => self.run_joint(x),
            PipelineMode::NoAdapt | PipelineMode::RagOnly | PipelineMode::TttOnly => self.run_baseline(x),
        }
    }

    fn retrieve(&self, trace: &mut Trace, x: &Query, e: &Embedding) -> Result<(RetrievedSet, bool)> {
        let retriever = NonEmpty(self.backends.retriever);
        let k = self.config.k;
        trace.cached(Stage::Retrieve, None, || match &self.qsc {
            Some(m) => {
                let mut st = m.lock().unwrap_or_else(|p| p.into_inner());
                st.lookup_or_retrieve(&x.id, e, k, &retriever).map(|l| (l.value, l.hit))
            }
            None => retriever.retrieve(&x.id, e, k).map(|s| (s, false)),
        })
    }

    fn adapt(&self, trace: &mut Trace, e: &Embedding, s_k: &RetrievedSet) -> Result<(AdapterState, bool)> {
        let hyper = &self.config.hyper;
        trace.cached(Stage::TttTrain, training_tokens(s_k), || match &self.qsc {
            Some(m) => {
                let mut st = m.lock().unwrap_or_else(|p| p.into_inner());
                st.lookup_or_train(e, s_k, &self.base, hyper, self.backends.trainer)
                    .map(|l| (l.value, l.hit))
            }
            None => self.backends.trainer.train(&self.base, s_k, hyper).map(|a| (a, false)),
        })
    }

    fn score(&self, trace: &mut Trace, x: &Query, y: &Response) -> Result<f64> {
        trace
            .stage(Stage::RewardEval, None, || self.backends.scorer.score(x, y))
            .map(|r| r.value())
    }

    fn rag_scoring_query(&self, x: &Query, context: &str) -> Query {
        if self.config.score_rag_on_augmented {
            Query {
                id: x.id.clone(),
                text: context.to_owned(),
                domain_hint: x.domain_hint.clone(),
            }
        } else {
            x.clone()
        }
    }

    fn initial(&self, trace: &mut Trace, x: &Query) -> Result<(Response, f64)> {
        let g = self.backends.generator;
        let y0 = trace.stage(Stage::BaseInfer, token_count(&x.text), || g.generate(&self.base, &x.text))?;
        let r0 = self.score(trace, x, &y0)?;
        Ok((y0, r0))
    }

    fn finish(
        &self,
        trace: Trace,
        x: &Query,
        strategy: Strategy,
        final_response: Response,
        rewards: Rewards,
        s_k: Option<&RetrievedSet>,
        cache_flags: CacheFlags,
    ) -> RoutingOutcome {
        debug_assert_eq!(final_response.produced_by, strategy.producer());
        RoutingOutcome {
            query_id: x.id.clone(),
            mode: self.config.mode,
            strategy,
            final_response,
            rewards,
            retrieved_ids: s_k.map(|s| s.sample_ids().map(str::to_owned).collect()).unwrap_or_default(),
            retrieved_domains: s_k.map(RetrievedSet::domains).unwrap_or_default(),
            cost_events: trace.events,
            cache_flags,
        }
    }

    /// Direct → RAG if it improves the reward → TTT otherwise.
    pub fn run_sequential(&self, x: &Query) -> Result<RoutingOutcome> {
        let mut trace = Trace::new(&x.id, &self.prices, self.config.record_timing);
        let (y0, r0) = self.initial(&mut trace, x)?;
        let mut rewards = Rewards {
            r0: Some(r0),
            ..Rewards::default()
        };
        if r0 >= self.config.tau_r {
            return Ok(self.finish(trace, x, Strategy::NoAdaptation, y0, rewards, None, CacheFlags::default()));
        }

        let e = self.backends.embedder.embed(&x.text)?;
        let (s_k, rag_hit) = self.retrieve(&mut trace, x, &e)?;
        let context = augment_context(&s_k, x)?;
        let g = self.backends.generator;
        let y_rag = trace.stage(Stage::RagInfer, token_count(&context), || g.generate(&self.base, &context))?;
        let r_rag = self.score(&mut trace, &self.rag_scoring_query(x, &context), &y_rag)?;
        rewards.r_rag = Some(r_rag);
        let mut flags = CacheFlags {
            rag_hit: Some(rag_hit),
            ttt_hit: None,
        };
        if r_rag > r0 {
            return Ok(self.finish(trace, x, Strategy::Rag, y_rag, rewards, Some(&s_k), flags));
        }

        let (adapter, ttt_hit) = self.adapt(&mut trace, &e, &s_k)?;
        flags.ttt_hit = Some(ttt_hit);
        let y_ttt = g.generate(&self.base.with_adapter(adapter), &x.text)?;
        Ok(self.finish(trace, x, Strategy::Ttt, y_ttt, rewards, Some(&s_k), flags))
    }

    /// Direct → otherwise both RAG and TTT on the same samples, best reward wins.
    pub fn run_joint(&self, x: &Query) -> Result<RoutingOutcome> {
        let mut trace = Trace::new(&x.id, &self.prices, self.config.record_timing);
        let (y0, r0) = self.initial(&mut trace, x)?;
        let mut rewards = Rewards {
            r0: Some(r0),
            ..Rewards::default()
        };
        if r0 >= self.config.tau_r {
            return Ok(self.finish(trace, x, Strategy::NoAdaptation, y0, rewards, None, CacheFlags::default()));
        }

        let e = self.backends.embedder.embed(&x.text)?;
        let (s_k, rag_hit) = self.retrieve(&mut trace, x, &e)?;
        let context = augment_context(&s_k, x)?;
        let g = self.backends.generator;
        let y_rag = trace.stage(Stage::RagInfer, token_count(&context), || g.generate(&self.base, &context))?;
        let r_rag = self.score(&mut trace, &self.rag_scoring_query(x, &context), &y_rag)?;
        let (adapter, ttt_hit) = self.adapt(&mut trace, &e, &s_k)?;
        let y_ttt = g.generate(&self.base.with_adapter(adapter), &x.text)?;
        let r_ttt = self.score(&mut trace, x, &y_ttt)?;
        rewards.r_rag = Some(r_rag);
        rewards.r_ttt = Some(r_ttt);
        let flags = CacheFlags {
            rag_hit: Some(rag_hit),
            ttt_hit: Some(ttt_hit),
        };
        // Ties go to the cheaper RAG answer.
        let (strategy, y) = if r_ttt > r_rag {
            (Strategy::Ttt, y_ttt)
        } else {
            (Strategy::Rag, y_rag)
        };
        Ok(self.finish(trace, x, strategy, y, rewards, Some(&s_k), flags))
    }

    /// Fixed-strategy baselines. They never consult the reward model or the cache.
    fn run_baseline(&self, x: &Query) -> Result<RoutingOutcome> {
        let mut trace = Trace::new(&x.id, &self.prices, self.config.record_timing);
        let g = self.backends.generator;
        if self.config.mode == PipelineMode::NoAdapt {
            let y = trace.stage(Stage::BaseInfer, token_count(&x.text), || g.generate(&self.base, &x.text))?;
            return Ok(self.finish(trace, x, Strategy::NoAdaptation, y, Rewards::default(), None, CacheFlags::default()));
        }
        let e = self.backends.embedder.embed(&x.text)?;
        let retriever = NonEmpty(self.backends.retriever);
        let s_k = trace.stage(Stage::Retrieve, None, || retriever.retrieve(&x.id, &e, self.config.k))?;
        let (strategy, y) = if self.config.mode == PipelineMode::RagOnly {
            let context = augment_context(&s_k, x)?;
            let y = trace.stage(Stage::BaseInfer, token_count(&context), || g.generate(&self.base, &context))?;
            trace.events.push(CostEvent::new(&x.id, Stage::RagInfer, &self.prices));
            (Strategy::Rag, y)
        } else {
            let hyper = &self.config.hyper;
            let trainer = self.backends.trainer;
            let adapter = trace.stage(Stage::TttTrain, training_tokens(&s_k), || trainer.train(&self.base, &s_k, hyper))?;
            let y = trace.stage(Stage::BaseInfer, token_count(&x.text), || {
                g.generate(&self.base.with_adapter(adapter), &x.text)
            })?;
            (Strategy::Ttt, y)
        };
        Ok(self.finish(trace, x, strategy, y, Rewards::default(), Some(&s_k), CacheFlags::default()))
    }

    fn record(&self, x: &Query) -> OutcomeRecord {
        match self.run(x) {
            Ok(o) => OutcomeRecord::Routed(o),
            Err(e) => {
                tracing::warn!(query = %x.id, error = %e, "query failed");
                OutcomeRecord::Failed(QueryFailure::new(&x.id, &e))
            }
        }
    }

    /// Runs queries in order. Per-query failures are recorded, not fatal.
    pub fn run_stream(&self, queries: &[Query]) -> Result<StreamReport> {
        if queries.is_empty() {
            return Err(Error::EmptyStream);
        }
        let records: Vec<OutcomeRecord> = queries.iter().map(|q| self.record(q)).collect();
        let metrics = compute_metrics(&records, &self.prices)?;
        Ok(StreamReport { records, metrics })
    }

    /// Like [`Pipeline::run_stream`] but on `threads` workers. Output keeps input
    /// order; with caching enabled, hits depend on completion order.
    pub fn run_stream_parallel(&self, queries: &[Query], threads: usize) -> Result<StreamReport> {
        if threads <= 1 {
            return self.run_stream(queries);
        }
        if queries.is_empty() {
            return Err(Error::EmptyStream);
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<OutcomeRecord>>> = queries.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..threads.min(queries.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(q) = queries.get(i) else { break };
                    let rec = self.record(q);
                    *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(rec);
                });
            }
        });
        let records: Vec<OutcomeRecord> = slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .unwrap_or_else(|p| p.into_inner())
                    .expect("every slot filled")
            })
            .collect();
        let metrics = compute_metrics(&records, &self.prices)?;
        Ok(StreamReport { records, metrics })
    }
}

/// One row of a reward-threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_r: f64,
    pub metrics: RunMetrics,
    /// Event-ledger cost per successfully routed query.
    pub mean_cost: Option<f64>,
}

/// Reruns the stream once per threshold with everything else fixed. Each row
/// starts from the same cache state (`warm`, or empty).
pub fn sweep_threshold(
    queries: &[Query],
    taus: &[f64],
    config: &PipelineConfig,
    prices: CostParams,
    backends: Backends<'_>,
    qsc: &QscConfig,
    warm: Option<&QscState>,
) -> Result<Vec<SweepRow>> {
    if taus.is_empty() || queries.is_empty() {
        return Err(Error::EmptyInput);
    }
    if taus.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("thresholds must be finite".into()));
    }
    if taus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("thresholds must be strictly ascending without duplicates".into()));
    }
    taus.iter()
        .map(|&tau_r| {
            let cfg = PipelineConfig {
                tau_r,
                ..config.clone()
            };
            let mut p = Pipeline::new(cfg, prices, backends, qsc)?;
            if let Some(w) = warm {
                p = p.with_qsc_state(w.clone());
            }
            let report = p.run_stream(queries)?;
            let mean_cost = report.metrics.cost_report.as_ref().map(|c| c.mean_cost);
            Ok(SweepRow {
                tau_r,
                metrics: report.metrics,
                mean_cost,
            })
        })
        .collect()
}
