//! Closed-loop query runs and the raw per-query log.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pageann::dataset::{GroundTruth, VectorDataset};
use pageann::search::{Engine, SearchConfig};
use serde::{Deserialize, Serialize};

use crate::artifacts::{load_queries, load_truth, open_engine, Artifacts};
use crate::config::BenchConfig;
use crate::registry::{self, Toggles};
use crate::report::{summarize, write_csv, ReportRow};

/// One line of the raw log. `start_us`/`end_us` are relative to the start
/// of the (configuration, L, rep) block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    pub config: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub rep: usize,
    pub query: usize,
    pub k: usize,
    pub ids: Vec<u32>,
    pub dists: Vec<f32>,
    /// `|S ∩ S*| / k` against the first `k` ground-truth ids.
    pub recall: f64,
    pub hops: u64,
    pub pages: u64,
    pub n_read: u64,
    pub n_eff: u64,
    pub n_rbu: u64,
    pub cache_hits: u64,
    pub cache_lookups: u64,
    pub full_distances: u64,
    pub pq_distances: u64,
    pub start_us: u64,
    pub end_us: u64,
    pub latency_us: u64,
}

/// Fields that carry timings and differ between otherwise identical runs.
pub const TIMING_FIELDS: &[&str] = &["start_us", "end_us", "latency_us"];

pub fn query_recall(ids: &[u32], truth: &[u32], k: usize) -> f64 {
    let truth: HashSet<u32> = truth.iter().take(k).copied().collect();
    ids.iter().take(k).filter(|id| truth.contains(id)).count() as f64 / k as f64
}

/// List sizes, repetitions and worker threads of one run.
#[derive(Debug, Clone, Copy)]
pub struct Sweep<'a> {
    pub ls: &'a [usize],
    pub reps: usize,
    pub threads: usize,
}

/// Runs `cfg` over every query `reps` times at each list size, with
/// `threads` workers pulling queries from a shared counter. Logs are
/// ordered by (L, rep, query).
pub fn run_config(
    engine: &Engine,
    queries: &VectorDataset,
    truth: &GroundTruth,
    name: &str,
    cfg: &SearchConfig,
    sweep: Sweep,
) -> Result<Vec<QueryLog>> {
    let Sweep { ls, reps, threads } = sweep;
    if truth.num_queries() < queries.n() {
        bail!(
            "ground truth covers {} queries, the query set has {}",
            truth.num_queries(),
            queries.n()
        );
    }
    let mut logs = Vec::with_capacity(ls.len() * reps * queries.n());
    for &l in ls {
        let cfg = SearchConfig { l, ..*cfg };
        cfg.validate()?;
        for rep in 0..reps {
            let next = AtomicUsize::new(0);
            let out: Mutex<Vec<QueryLog>> = Mutex::new(Vec::with_capacity(queries.n()));
            let failure: Mutex<Option<anyhow::Error>> = Mutex::new(None);
            let t0 = Instant::now();
            std::thread::scope(|s| {
                for _ in 0..threads.max(1) {
                    s.spawn(|| loop {
                        let qi = next.fetch_add(1, Ordering::Relaxed);
                        if qi >= queries.n() || failure.lock().unwrap().is_some() {
                            break;
                        }
                        let start = t0.elapsed().as_micros() as u64;
                        match engine.search(queries.row(qi), &cfg) {
                            Ok(o) => {
                                let end = t0.elapsed().as_micros() as u64;
                                let ids = o.ids();
                                let st = o.stats;
                                let entry = QueryLog {
                                    config: name.to_string(),
                                    l,
                                    rep,
                                    query: qi,
                                    k: cfg.k,
                                    recall: query_recall(&ids, &truth.ids[qi], cfg.k),
                                    dists: o.neighbors.iter().map(|n| n.dist).collect(),
                                    ids,
                                    hops: st.hops,
                                    pages: st.pages_read,
                                    n_read: st.n_read,
                                    n_eff: st.n_eff,
                                    n_rbu: st.n_rbu,
                                    cache_hits: st.cache_hits,
                                    cache_lookups: st.cache_lookups,
                                    full_distances: st.full_distances,
                                    pq_distances: st.pq_distances,
                                    start_us: start,
                                    end_us: end,
                                    latency_us: st.latency_us,
                                };
                                out.lock().unwrap().push(entry);
                            }
                            Err(e) => {
                                *failure.lock().unwrap() = Some(e.into());
                                break;
                            }
                        }
                    });
                }
            });
            if let Some(e) = failure.into_inner().unwrap() {
                return Err(e.context(format!("configuration {name}, L = {l}")));
            }
            let mut block = out.into_inner().unwrap();
            block.sort_by_key(|e| e.query);
            logs.extend(block);
        }
    }
    Ok(logs)
}

pub fn write_log(logs: &[QueryLog], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for e in logs {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<QueryLog>> {
    let r = BufReader::new(std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Outcome of running one named configuration.
pub struct ConfigRun {
    pub name: String,
    pub logs: Vec<QueryLog>,
    pub rows: Vec<ReportRow>,
}

/// Runs each named configuration over the L sweep, writing
/// `runs/<name>.jsonl` and `runs/<name>.csv` under the output directory.
pub fn run_named(cfg: &BenchConfig, names: &[String]) -> Result<Vec<ConfigRun>> {
    cfg.validate()?;
    let arts = Artifacts::new(&cfg.run.out);
    std::fs::create_dir_all(arts.runs())?;
    let queries = load_queries(cfg)?;
    let truth = load_truth(cfg)?;
    let arms: Vec<(String, Toggles)> = names
        .iter()
        .map(|n| {
            let canon = registry::canonical(n).to_string();
            registry::lookup(&canon)
                .map(|t| (canon, t))
                .with_context(|| format!("unknown configuration {n:?}"))
        })
        .collect::<Result<_>>()?;
    let mut runs = Vec::new();
    for shuffled in [false, true] {
        let group: Vec<&(String, Toggles)> = arms.iter().filter(|(_, t)| t.shuffle == shuffled).collect();
        if group.is_empty() {
            continue;
        }
        let needs = group.iter().fold(Toggles::default(), |acc, (_, t)| acc.union(*t));
        let engine = open_engine(cfg, shuffled, needs)?;
        for (name, toggles) in group {
            let mut sc = cfg.search_config(cfg.search.l[0]);
            toggles.apply(&mut sc);
            let logs = run_config(
                &engine,
                &queries,
                &truth,
                name,
                &sc,
                Sweep {
                    ls: &cfg.search.l,
                    reps: cfg.run.reps,
                    threads: cfg.run.threads,
                },
            )?;
            let rows = summarize(&logs)?;
            write_log(&logs, &arts.runs().join(format!("{name}.jsonl")))?;
            write_csv(&rows, &arts.runs().join(format!("{name}.csv")))?;
            for r in &rows {
                log::info!(
                    "{name} L={} recall={:.4} qps={:.1} pages={:.2} hops={:.2}",
                    r.l,
                    r.recall_mean,
                    r.qps_mean,
                    r.pages_mean,
                    r.hops_mean
                );
            }
            runs.push(ConfigRun {
                name: name.clone(),
                logs,
                rows,
            });
        }
    }
    let order: Vec<&String> = arms.iter().map(|(n, _)| n).collect();
    runs.sort_by_key(|r| order.iter().position(|n| **n == r.name));
    Ok(runs)
}
