use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rttc_core::config::RunConfig;
use rttc_core::cost::CostParams;
use rttc_core::kb::{KnowledgeBase, RawRecord};
use rttc_core::metrics::{compute_metrics, OutcomeRecord, RunMetrics};
use rttc_core::model::{HashEmbedder, RewardScript, SimulatedModel};
use rttc_core::pipeline::{sweep_threshold, Pipeline, SweepRow};
use rttc_core::qsc::QscState;
use rttc_core::{Error, Query, Result, Strategy};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::backends::{Loaded, EMBEDDER_NAME};

/// Reads a JSONL file; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    write_file(path, &buf)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn metrics_json(m: &RunMetrics) -> Result<String> {
    Ok(serde_json::to_string_pretty(m)? + "\n")
}

fn read_queries(path: &Path) -> Result<Vec<Query>> {
    let queries: Vec<Query> = read_jsonl(path)?;
    if queries.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(queries)
}

pub fn kb_ingest(input: &Path, out: &Path, dim: usize) -> Result<()> {
    let records: Vec<RawRecord> = read_jsonl(input)?;
    let embedder = HashEmbedder::new(dim)?;
    let mut kb = if out.join(rttc_core::kb::MANIFEST_FILE).exists() {
        KnowledgeBase::load(out)?.0
    } else {
        KnowledgeBase::new(dim)
    };
    let n = kb.ingest(records, &embedder)?;
    let manifest = kb.save(out, &format!("{EMBEDDER_NAME}/{dim}"))?;
    tracing::info!(ingested = n, total = manifest.total, "knowledge base written");
    println!("{}", serde_json::to_string(&manifest)?);
    Ok(())
}

pub fn kb_serve(base: &Path, bind: &str) -> Result<()> {
    let (kb, _) = KnowledgeBase::load(base)?;
    let (server, _) = rttc_service::spawn_kb_server(kb, bind)?;
    announce(&server)?;
    server.join()
}

pub fn model_serve(bind: &str, dim: usize, script: Option<&Path>) -> Result<()> {
    let script = match script {
        Some(p) => serde_json::from_slice(&fs::read(p)?)?,
        None => RewardScript::new(0.0)?,
    };
    let server = rttc_service::spawn_model_server(SimulatedModel::new(HashEmbedder::new(dim)?, script), bind)?;
    announce(&server)?;
    server.join()
}

/// Prints the bound URL so callers that bind port 0 can find the server.
fn announce(server: &rttc_service::ServerHandle) -> Result<()> {
    let mut out = std::io::stdout();
    writeln!(out, "{}", server.url())?;
    out.flush()?;
    Ok(())
}

pub struct RunArgs<'a> {
    pub config: &'a Path,
    pub queries: &'a Path,
    pub out: &'a Path,
    pub metrics: Option<&'a Path>,
    pub qsc_state: Option<&'a Path>,
    pub save_qsc_state: Option<&'a Path>,
    pub parallel: usize,
}

/// Default metrics path: `<out stem>.metrics.json` next to the outcomes.
pub fn default_metrics_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.metrics.json"))
}

/// Returns the number of failed queries.
pub fn run(args: RunArgs<'_>) -> Result<usize> {
    let cfg = RunConfig::load(args.config)?;
    let queries = read_queries(args.queries)?;
    let warm = match args.qsc_state {
        Some(p) => Some(QscState::load(cfg.qsc.clone(), p)?),
        None => None,
    };
    let loaded = Loaded::new(&cfg)?;
    let mut pipeline = Pipeline::new(cfg.pipeline.clone(), cfg.cost, loaded.backends(), &cfg.qsc)?;
    if let Some(w) = warm {
        pipeline = pipeline.with_qsc_state(w);
    }
    let report = pipeline.run_stream_parallel(&queries, args.parallel)?;
    write_jsonl(args.out, &report.records)?;
    let metrics_path = args.metrics.map(Path::to_path_buf).unwrap_or_else(|| default_metrics_path(args.out));
    write_file(&metrics_path, metrics_json(&report.metrics)?.as_bytes())?;
    if let Some(p) = args.save_qsc_state {
        match pipeline.qsc_snapshot() {
            Some(state) => state.save(p)?,
            None => tracing::warn!("--save-qsc-state ignored: caching is disabled"),
        }
    }
    Ok(report.metrics.error_count)
}

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";

pub fn sweep(config: &Path, queries: &Path, taus: &[f64], out: &Path) -> Result<usize> {
    let cfg = RunConfig::load(config)?;
    let queries = read_queries(queries)?;
    let loaded = Loaded::new(&cfg)?;
    let rows = sweep_threshold(&queries, taus, &cfg.pipeline, cfg.cost, loaded.backends(), &cfg.qsc, None)?;
    fs::create_dir_all(out)?;
    write_json(&out.join(SWEEP_JSON), &rows)?;
    write_file(&out.join(SWEEP_CSV), &sweep_csv(&rows)?)?;
    Ok(rows.iter().map(|r| r.metrics.error_count).max().unwrap_or(0))
}

fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record([
        "tau_r",
        "queries",
        "error_count",
        "no_adaptation",
        "rag",
        "ttt",
        "rag_cache_utilization",
        "ttt_cache_utilization",
        "event_total",
        "closed_form",
        "mean_cost",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let m = &r.metrics;
        let share = |s| m.strategy_distribution.get(&s).copied().unwrap_or(0.0).to_string();
        let util = m.cache_utilization;
        let cost = m.cost_report.as_ref();
        w.write_record([
            r.tau_r.to_string(),
            m.queries.to_string(),
            m.error_count.to_string(),
            share(Strategy::NoAdaptation),
            share(Strategy::Rag),
            share(Strategy::Ttt),
            opt(util.and_then(|u| u.rag)),
            opt(util.and_then(|u| u.ttt)),
            opt(cost.map(|c| c.event_total)),
            opt(cost.map(|c| c.closed_form)),
            opt(r.mean_cost),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn report(outcomes: &Path, cost_params: Option<&Path>) -> Result<String> {
    let prices: CostParams = match cost_params {
        Some(p) => {
            let prices: CostParams = serde_json::from_slice(&fs::read(p)?)
                .map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            prices.validate()?;
            prices
        }
        None => CostParams::default(),
    };
    let records: Vec<OutcomeRecord> = read_jsonl(outcomes)?;
    if records.is_empty() {
        return Err(Error::Parse(format!("{}: no outcome records", outcomes.display())));
    }
    metrics_json(&compute_metrics(&records, &prices)?)
}
