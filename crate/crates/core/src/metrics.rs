//! Stream-level aggregates: strategy mix, cache reuse, retrieved-domain mix
//! and the cost report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::{accumulate, reconcile, CostMode, CostParams, Stage};
use crate::error::{Error, Result};
use crate::kb::{domain_distribution, RetrievalLogEntry};
use crate::pipeline::RoutingOutcome;
use crate::qsc::{cache_utilization, CacheUtilization};
use crate::types::Strategy;

/// A failed query in an outcome stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryFailure {
    pub query_id: String,
    pub error: String,
    pub message: String,
}

impl QueryFailure {
    pub fn new(query_id: &str, e: &Error) -> Self {
        Self {
            query_id: query_id.to_owned(),
            error: e.kind().to_owned(),
            message: e.to_string(),
        }
    }
}

/// One line of an outcome file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutcomeRecord {
    Routed(RoutingOutcome),
    Failed(QueryFailure),
}

impl OutcomeRecord {
    pub fn query_id(&self) -> &str {
        match self {
            OutcomeRecord::Routed(o) => &o.query_id,
            OutcomeRecord::Failed(f) => &f.query_id,
        }
    }

    pub fn outcome(&self) -> Option<&RoutingOutcome> {
        match self {
            OutcomeRecord::Routed(o) => Some(o),
            OutcomeRecord::Failed(_) => None,
        }
    }
}

/// Fraction of outcomes answered by each strategy. Only observed strategies appear.
pub fn strategy_distribution<'a, I>(outcomes: I) -> Result<BTreeMap<Strategy, f64>>
where
    I: IntoIterator<Item = &'a RoutingOutcome>,
{
    let mut counts: BTreeMap<Strategy, usize> = BTreeMap::new();
    for o in outcomes {
        *counts.entry(o.strategy).or_default() += 1;
    }
    let n: usize = counts.values().sum();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(counts
        .into_iter()
        .map(|(s, c)| (s, c as f64 / n as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub mode: CostMode,
    pub n: u64,
    pub d_rag: f64,
    pub d_ttt: f64,
    pub totals_by_stage: BTreeMap<Stage, f64>,
    pub event_total: f64,
    pub closed_form: f64,
    /// `|closed_form - event_total|`; positive when cache hits skipped stages.
    pub delta: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub queries: usize,
    pub error_count: usize,
    pub strategy_distribution: BTreeMap<Strategy, f64>,
    pub cache_utilization: Option<CacheUtilization>,
    pub domain_distribution: Option<BTreeMap<String, f64>>,
    pub cost_report: Option<CostReport>,
}

fn cost_report(outcomes: &[&RoutingOutcome], prices: &CostParams) -> Result<CostReport> {
    let n = outcomes.len();
    let mode = outcomes[0].mode.cost_mode();
    let share = |s: Strategy| outcomes.iter().filter(|o| o.strategy == s).count() as f64 / n as f64;
    let (d_rag, d_ttt) = match mode {
        CostMode::Rttc | CostMode::RttcJoint => (share(Strategy::Rag), share(Strategy::Ttt)),
        _ => (0.0, 0.0),
    };
    let ledger = accumulate(outcomes.iter().copied(), prices);
    let rec = reconcile(&ledger, n as u64, prices, d_rag, d_ttt, mode)?;
    Ok(CostReport {
        mode,
        n: n as u64,
        d_rag,
        d_ttt,
        totals_by_stage: ledger.totals_by_stage,
        event_total: rec.event,
        closed_form: rec.closed,
        delta: rec.delta,
        mean_cost: rec.event / n as f64,
    })
}

/// Aggregates an outcome stream. Failed queries only count towards `error_count`.
pub fn compute_metrics(records: &[OutcomeRecord], prices: &CostParams) -> Result<RunMetrics> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let outcomes: Vec<&RoutingOutcome> = records.iter().filter_map(OutcomeRecord::outcome).collect();
    let error_count = records.len() - outcomes.len();
    if outcomes.is_empty() {
        return Ok(RunMetrics {
            queries: records.len(),
            error_count,
            strategy_distribution: BTreeMap::new(),
            cache_utilization: None,
            domain_distribution: None,
            cost_report: None,
        });
    }
    let log: Vec<RetrievalLogEntry> = outcomes
        .iter()
        .filter(|o| !o.retrieved_domains.is_empty())
        .enumerate()
        .map(|(i, o)| RetrievalLogEntry {
            query_id: o.query_id.clone(),
            k: o.retrieved_domains.len(),
            returned_domains: o.retrieved_domains.clone(),
            timestamp: i as u64 + 1,
        })
        .collect();
    // A closed form only exists for a stream routed under one mode.
    let single_mode = outcomes.iter().all(|o| o.mode == outcomes[0].mode);
    Ok(RunMetrics {
        queries: records.len(),
        error_count,
        strategy_distribution: strategy_distribution(outcomes.iter().copied())?,
        cache_utilization: Some(cache_utilization(outcomes.iter().copied())?),
        domain_distribution: domain_distribution(&log).ok(),
        cost_report: if single_mode { Some(cost_report(&outcomes, prices)?) } else { None },
    })
}
