//! Report rows recomputed from raw logs, Pareto comparison, cumulative
//! breakdown and plot files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use pageann::search::{io_utilization, SearchStats};
use serde::{Deserialize, Serialize};

use crate::registry::BREAKDOWN_CHAIN;
use crate::run::{read_log, QueryLog};
use crate::svg;

/// One (configuration, L) cell. `_mean`/`_std` are taken over repetitions
/// of the per-repetition value; percentiles pool every query of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub config: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub reps: usize,
    pub queries: usize,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub qps_mean: f64,
    pub qps_std: f64,
    pub latency_mean_us: f64,
    pub latency_std_us: f64,
    pub latency_p50_us: u64,
    pub latency_p99_us: u64,
    pub pages_mean: f64,
    pub pages_std: f64,
    pub hops_mean: f64,
    pub n_read_mean: f64,
    pub n_eff_mean: f64,
    pub n_rbu_mean: f64,
    pub full_distances_mean: f64,
    pub u_io: Option<f64>,
    pub cache_hit_rate: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for a single value.
pub fn stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[u64], p: f64) -> u64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Queries per second of one block: query count over the span from the
/// first start to the last end.
pub fn block_qps(block: &[&QueryLog]) -> f64 {
    let start = block.iter().map(|e| e.start_us).min().unwrap_or(0);
    let end = block.iter().map(|e| e.end_us).max().unwrap_or(0);
    block.len() as f64 * 1e6 / (end - start).max(1) as f64
}

/// Cells in order of first appearance, rejecting inconsistent query counts.
pub fn summarize(logs: &[QueryLog]) -> Result<Vec<ReportRow>> {
    let mut order: Vec<(String, usize)> = Vec::new();
    let mut cells: BTreeMap<(String, usize), BTreeMap<usize, Vec<&QueryLog>>> = BTreeMap::new();
    for e in logs {
        let key = (e.config.clone(), e.l);
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().entry(e.rep).or_default().push(e);
    }
    let mut expected: Option<usize> = None;
    let mut rows = Vec::with_capacity(order.len());
    for key in order {
        let reps = &cells[&key];
        for (rep, block) in reps {
            match expected {
                None => expected = Some(block.len()),
                Some(q) if q != block.len() => bail!(
                    "inconsistent query counts: {} L={} rep {rep} has {} queries, expected {q}",
                    key.0,
                    key.1,
                    block.len()
                ),
                _ => {}
            }
        }
        let per_rep = |f: &dyn Fn(&[&QueryLog]) -> f64| -> Vec<f64> { reps.values().map(|b| f(b)).collect() };
        let avg = |f: fn(&QueryLog) -> f64| move |b: &[&QueryLog]| b.iter().map(|e| f(e)).sum::<f64>() / b.len() as f64;
        let recall = per_rep(&avg(|e| e.recall));
        let qps = per_rep(&|b| block_qps(b));
        let lat = per_rep(&avg(|e| e.latency_us as f64));
        let pages = per_rep(&avg(|e| e.pages as f64));
        let all: Vec<&QueryLog> = reps.values().flatten().copied().collect();
        let all_mean = |f: fn(&QueryLog) -> f64| all.iter().map(|e| f(e)).sum::<f64>() / all.len() as f64;
        let mut lats: Vec<u64> = all.iter().map(|e| e.latency_us).collect();
        lats.sort_unstable();
        let mut totals = SearchStats::default();
        for e in &all {
            totals.n_read += e.n_read;
            totals.n_eff += e.n_eff;
            totals.n_rbu += e.n_rbu;
            totals.cache_hits += e.cache_hits;
            totals.cache_lookups += e.cache_lookups;
        }
        rows.push(ReportRow {
            config: key.0.clone(),
            l: key.1,
            reps: reps.len(),
            queries: expected.unwrap_or(0),
            recall_mean: mean(&recall),
            recall_std: stddev(&recall),
            qps_mean: mean(&qps),
            qps_std: stddev(&qps),
            latency_mean_us: mean(&lat),
            latency_std_us: stddev(&lat),
            latency_p50_us: percentile(&lats, 50.0),
            latency_p99_us: percentile(&lats, 99.0),
            pages_mean: mean(&pages),
            pages_std: stddev(&pages),
            hops_mean: all_mean(|e| e.hops as f64),
            n_read_mean: all_mean(|e| e.n_read as f64),
            n_eff_mean: all_mean(|e| e.n_eff as f64),
            n_rbu_mean: all_mean(|e| e.n_rbu as f64),
            full_distances_mean: all_mean(|e| e.full_distances as f64),
            u_io: io_utilization(&totals).ok(),
            cache_hit_rate: (totals.cache_lookups > 0).then(|| totals.cache_hits as f64 / totals.cache_lookups as f64),
        });
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub recall: f64,
    pub cost: f64,
}

pub fn points(rows: &[ReportRow], config: &str, cost: fn(&ReportRow) -> f64) -> Vec<Point> {
    rows.iter()
        .filter(|r| r.config == config)
        .map(|r| Point {
            recall: r.recall_mean,
            cost: cost(r),
        })
        .collect()
}

/// Lowest cost among points reaching `recall`; infinite when none does.
pub fn front_cost(pts: &[Point], recall: f64) -> f64 {
    pts.iter()
        .filter(|p| p.recall >= recall)
        .map(|p| p.cost)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub recall: f64,
    pub cost_a: f64,
    pub cost_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dominance {
    pub levels: Vec<Level>,
    /// `a` costs no more than `b` at every level.
    pub weak: bool,
    /// Levels where `a` costs strictly less.
    pub strict: usize,
}

/// Compares the lower-cost Pareto fronts of `a` and `b` at every recall
/// level sampled by either.
pub fn dominance(a: &[Point], b: &[Point]) -> Dominance {
    let mut recalls: Vec<f64> = a.iter().chain(b).map(|p| p.recall).collect();
    recalls.sort_by(f64::total_cmp);
    recalls.dedup();
    let levels: Vec<Level> = recalls
        .into_iter()
        .map(|r| Level {
            recall: r,
            cost_a: front_cost(a, r),
            cost_b: front_cost(b, r),
        })
        .collect();
    Dominance {
        weak: levels.iter().all(|l| l.cost_a <= l.cost_b),
        strict: levels.iter().filter(|l| l.cost_a < l.cost_b).count(),
        levels,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub step: usize,
    pub config: String,
    pub metric: String,
    pub value: f64,
    /// Change from the previous step; 0 for the first.
    pub delta: f64,
}

/// Extracts one value from a report row.
pub type RowValue = fn(&ReportRow) -> f64;

pub const BREAKDOWN_METRICS: &[(&str, RowValue)] = &[
    ("pages", |r| r.pages_mean),
    ("recall", |r| r.recall_mean),
    ("qps", |r| r.qps_mean),
    ("hops", |r| r.hops_mean),
];

/// Cumulative per-step deltas along `chain` for every L all steps share.
pub fn breakdown(rows: &[ReportRow], chain: &[&str]) -> Vec<BreakdownRow> {
    let find = |c: &str, l: usize| rows.iter().find(|r| r.config == c && r.l == l);
    let mut ls: Vec<usize> = rows.iter().map(|r| r.l).collect();
    ls.sort_unstable();
    ls.dedup();
    let mut out = Vec::new();
    for l in ls {
        let Some(steps) = chain.iter().map(|c| find(c, l)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        for (metric, f) in BREAKDOWN_METRICS {
            let mut prev: Option<f64> = None;
            for (i, row) in steps.iter().enumerate() {
                let v = f(row);
                out.push(BreakdownRow {
                    l,
                    step: i,
                    config: row.config.clone(),
                    metric: metric.to_string(),
                    value: v,
                    delta: prev.map_or(0.0, |p| v - p),
                });
                prev = Some(v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub config: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub recall: f64,
    pub value: f64,
}

pub const SERIES: &[(&str, &str, RowValue)] = &[
    ("qps", "QPS", |r| r.qps_mean),
    ("latency", "mean latency (us)", |r| r.latency_mean_us),
    ("pages", "pages / query", |r| r.pages_mean),
];

pub fn series(rows: &[ReportRow], f: fn(&ReportRow) -> f64) -> Vec<SeriesRow> {
    rows.iter()
        .map(|r| SeriesRow {
            config: r.config.clone(),
            l: r.l,
            recall: r.recall_mean,
            value: f(r),
        })
        .collect()
}

/// Files written by [`cmd_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub rows: Vec<ReportRow>,
    pub written: Vec<PathBuf>,
}

/// Summarizes raw logs into `report.csv`, recall-vs-{qps, latency, pages}
/// series with plots, the Baseline/C5 Pareto table and the cumulative
/// breakdown when its steps are present.
pub fn cmd_report(logs: &[PathBuf], out: &Path) -> Result<ReportFiles> {
    if logs.is_empty() {
        bail!("report needs at least one run log");
    }
    std::fs::create_dir_all(out)?;
    let mut all = Vec::new();
    for p in logs {
        all.extend(read_log(p)?);
    }
    let rows = summarize(&all)?;
    let mut written = Vec::new();
    let mut emit = |name: &str| {
        let p = out.join(name);
        written.push(p.clone());
        p
    };
    write_csv(&rows, &emit("report.csv"))?;
    for (tag, label, f) in SERIES {
        let s = series(&rows, *f);
        write_csv(&s, &emit(&format!("series_{tag}.csv")))?;
        let plot = svg::line_plot(&format!("Recall@k vs {label}"), "Recall@k", label, &svg_series(&s));
        std::fs::write(emit(&format!("recall_{tag}.svg")), plot)?;
    }
    let has = |c: &str| rows.iter().any(|r| r.config == c);
    if has("Baseline") && has("C5") {
        let d = dominance(
            &points(&rows, "C5", |r| r.pages_mean),
            &points(&rows, "Baseline", |r| r.pages_mean),
        );
        write_csv(&d.levels, &emit("pareto_c5_vs_baseline.csv"))?;
        log::info!(
            "C5 vs Baseline (pages/query): weak={} strict levels={}",
            d.weak,
            d.strict
        );
    }
    if BREAKDOWN_CHAIN.iter().all(|c| has(c)) {
        let b = breakdown(&rows, BREAKDOWN_CHAIN);
        write_csv(&b, &emit("breakdown.csv"))?;
        let bars: Vec<svg::BarGroup> =
            b.iter()
                .filter(|r| r.metric == "pages")
                .fold(Vec::<svg::BarGroup>::new(), |mut acc, r| {
                    if acc.last().is_none_or(|g| g.label != format!("L={}", r.l)) {
                        acc.push(svg::BarGroup {
                            label: format!("L={}", r.l),
                            bars: Vec::new(),
                        });
                    }
                    acc.last_mut().unwrap().bars.push((r.config.clone(), r.value));
                    acc
                });
        std::fs::write(
            emit("breakdown_pages.svg"),
            svg::bar_chart("Cumulative breakdown", "pages / query", &bars),
        )?;
    }
    Ok(ReportFiles { rows, written })
}

fn svg_series(s: &[SeriesRow]) -> Vec<svg::Series> {
    let mut out: Vec<svg::Series> = Vec::new();
    for r in s {
        if out.last().is_none_or(|x| x.name != r.config) {
            out.push(svg::Series {
                name: r.config.clone(),
                points: Vec::new(),
            });
        }
        out.last_mut().unwrap().points.push((r.recall, r.value, r.l));
    }
    out
}

/// Values of every `<circle>`/`<rect>` data point in a plot written by this
/// module, as (series, L or group, x, y) tuples.
pub fn plot_values(svg_text: &str) -> Vec<(String, String, f64, f64)> {
    let attr = |tag: &str, name: &str| -> Option<String> {
        let key = format!("{name}=\"");
        let i = tag.find(&key)? + key.len();
        Some(tag[i..].split('"').next()?.to_string())
    };
    svg_text
        .split('<')
        .filter(|t| t.contains("data-series="))
        .filter_map(|t| {
            Some((
                attr(t, "data-series")?,
                attr(t, "data-key")?,
                attr(t, "data-x")?.parse().ok()?,
                attr(t, "data-y")?.parse().ok()?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(config: &str, l: usize, rep: usize, query: usize, pages: u64, recall: f64) -> QueryLog {
        QueryLog {
            config: config.into(),
            l,
            rep,
            query,
            k: 10,
            ids: vec![],
            dists: vec![],
            recall,
            hops: 2,
            pages,
            n_read: pages * 2,
            n_eff: pages,
            n_rbu: pages,
            cache_hits: 0,
            cache_lookups: 0,
            full_distances: 0,
            pq_distances: 0,
            start_us: query as u64 * 10,
            end_us: query as u64 * 10 + 10,
            latency_us: 10 + query as u64,
        }
    }

    #[test]
    fn summary_recomputes_every_column() {
        let mut logs = Vec::new();
        for rep in 0..2 {
            for q in 0..4 {
                logs.push(log("A", 10, rep, q, (q + rep) as u64, if q < 2 { 1.0 } else { 0.5 }));
            }
        }
        let rows = summarize(&logs).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!((r.reps, r.queries), (2, 4));
        assert_eq!(r.recall_mean, 0.75);
        assert_eq!(r.recall_std, 0.0);
        assert_eq!(r.pages_mean, 2.0);
        assert!((r.pages_std - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(r.qps_mean, 4.0 * 1e6 / 40.0);
        assert_eq!(r.u_io, Some(0.5));
        assert_eq!(r.cache_hit_rate, None);
        assert_eq!((r.latency_p50_us, r.latency_p99_us), (11, 13));
    }

    #[test]
    fn inconsistent_query_counts_are_rejected() {
        let logs = vec![
            log("A", 10, 0, 0, 1, 1.0),
            log("A", 10, 0, 1, 1, 1.0),
            log("B", 10, 0, 0, 1, 1.0),
        ];
        assert!(summarize(&logs).is_err());
    }

    #[test]
    fn dominance_levels() {
        let p = |recall, cost| Point { recall, cost };
        let b = [p(0.8, 10.0), p(0.9, 20.0), p(1.0, 40.0)];
        let better = [p(0.85, 8.0), p(0.95, 15.0), p(1.0, 30.0)];
        let d = dominance(&better, &b);
        assert!(d.weak);
        assert_eq!(d.strict, 5);
        let worse = [p(0.9, 25.0), p(1.0, 30.0)];
        assert!(!dominance(&worse, &b).weak);
        assert_eq!(front_cost(&b, 0.95), 40.0);
        assert_eq!(front_cost(&b, 1.5), f64::INFINITY);
    }

    #[test]
    fn breakdown_deltas_telescope() {
        let mut logs = Vec::new();
        for (i, c) in BREAKDOWN_CHAIN.iter().enumerate() {
            for q in 0..3 {
                logs.push(log(c, 10, 0, q, 50 - 7 * i as u64 + q as u64, 0.8 + 0.03 * i as f64));
            }
        }
        let rows = summarize(&logs).unwrap();
        let b = breakdown(&rows, BREAKDOWN_CHAIN);
        for (metric, _) in BREAKDOWN_METRICS {
            let steps: Vec<&BreakdownRow> = b.iter().filter(|r| r.metric == *metric).collect();
            assert_eq!(steps.len(), BREAKDOWN_CHAIN.len());
            let total = steps.last().unwrap().value - steps[0].value;
            let sum: f64 = steps.iter().map(|r| r.delta).sum();
            assert!((sum - total).abs() < 1e-9, "{metric}");
        }
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
        assert_eq!(percentile(&v, 50.0), 5);
        assert_eq!(percentile(&v, 99.0), 10);
        assert_eq!(percentile(&v, 0.0), 1);
        assert_eq!(stddev(&[2.0]), 0.0);
    }
}
