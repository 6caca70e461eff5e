//! Disk-resident beam search with toggleable optimizations and per-query
//! I/O accounting.
//!
//! The candidate list is ordered by the guide distance: PQ when `use_pq` is
//! on, full precision otherwise (every scored neighbor then has to be read
//! from disk). Results are the `k` closest, by full-precision distance,
//! among the records whose vectors were read or served from the cache.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::cache::{cache_lookup, CacheSet};
use crate::candidates::CandidateList;
use crate::distance::Neighbor;
use crate::error::{Error, Result};
use crate::io::{AlignedBuf, IoBatch, IoPool, PageReader};
use crate::layout::DiskIndex;
use crate::memgraph::{select_entries, MemGraph};
use crate::pq::{DistanceTable, PqCodebook, PqCodes};

/// Width schedule `ω_t = min(ω_max, ω_min · 2^max(0, t − hold))`, where the
/// hold is `warmup` until the best full-precision distance has failed to
/// improve for `patience` consecutive iterations, and that iteration after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DynamicWidth {
    pub min: usize,
    pub max: usize,
    pub warmup: usize,
    pub patience: usize,
}

impl Default for DynamicWidth {
    fn default() -> Self {
        Self {
            min: 8,
            max: 32,
            warmup: 4,
            patience: 2,
        }
    }
}

impl DynamicWidth {
    /// Width at iteration `t`; `phase` is the iteration at which the
    /// converge phase was detected, if it has been.
    pub fn width(&self, t: usize, phase: Option<usize>) -> usize {
        dynamic_width_schedule(t, phase, self)
    }
}

pub fn dynamic_width_schedule(iteration: usize, phase: Option<usize>, dw: &DynamicWidth) -> usize {
    let hold = phase.map_or(dw.warmup, |p| p.min(dw.warmup));
    let exp = iteration.saturating_sub(hold);
    let w = if exp >= usize::BITS as usize - 1 {
        usize::MAX
    } else {
        dw.min.saturating_mul(1usize << exp)
    };
    w.min(dw.max)
}

/// Tracks stalls of the best distance to find the approach/converge switch.
#[derive(Debug, Clone)]
struct PhaseDetector {
    best: f32,
    stall: usize,
    phase: Option<usize>,
}

impl PhaseDetector {
    fn new() -> Self {
        Self {
            best: f32::INFINITY,
            stall: 0,
            phase: None,
        }
    }

    fn observe(&mut self, t: usize, best: f32, patience: usize) {
        if best < self.best {
            self.best = best;
            self.stall = 0;
        } else {
            self.stall += 1;
            if self.stall >= patience && self.phase.is_none() {
                self.phase = Some(t + 1);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub k: usize,
    pub l: usize,
    pub beam: usize,
    pub use_pq: bool,
    pub use_cache: bool,
    pub use_memgraph: bool,
    pub use_shuffled_layout: bool,
    pub dynamic_width: bool,
    pub pipeline: bool,
    pub page_search: bool,
    pub dw: DynamicWidth,
    pub pipeline_depth: usize,
    pub mem_l: usize,
    pub mem_fanout: usize,
    /// Keep the per-record event log in the stats.
    pub record_events: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            l: 100,
            beam: 8,
            use_pq: true,
            use_cache: false,
            use_memgraph: false,
            use_shuffled_layout: false,
            dynamic_width: false,
            pipeline: false,
            page_search: false,
            dw: DynamicWidth::default(),
            pipeline_depth: 8,
            mem_l: crate::memgraph::DEFAULT_L_MEM,
            mem_fanout: crate::memgraph::DEFAULT_FANOUT,
            record_events: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.l {
            return Err(Error::Config(format!(
                "need 1 <= k <= L, got k = {}, L = {}",
                self.k, self.l
            )));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam width must be >= 1".into()));
        }
        if self.dynamic_width && (self.dw.min == 0 || self.dw.min > self.dw.max) {
            return Err(Error::Config(format!(
                "dynamic width needs 1 <= min <= max, got {}..{}",
                self.dw.min, self.dw.max
            )));
        }
        if self.pipeline && self.pipeline_depth == 0 {
            return Err(Error::Config("pipeline depth must be >= 1".into()));
        }
        if self.pipeline && !self.use_pq {
            return Err(Error::Config("pipeline search requires use_pq".into()));
        }
        if self.use_memgraph && self.mem_fanout == 0 {
            return Err(Error::Config("memgraph fanout must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Record decoded from a page read from disk.
    Read,
    /// Record served by the cache.
    CacheHit,
    /// Record expanded (neighbors scored).
    Expand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordEvent {
    pub id: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub hops: u64,
    pub pages_read: u64,
    pub n_read: u64,
    pub n_eff: u64,
    pub n_rbu: u64,
    pub cache_hits: u64,
    /// Records requested through the cache (hits plus misses).
    pub cache_lookups: u64,
    pub full_distances: u64,
    pub pq_distances: u64,
    pub latency_us: u64,
    pub events: Vec<RecordEvent>,
}

impl SearchStats {
    /// Sums counters of `other` into `self` (events are not merged).
    pub fn accumulate(&mut self, other: &SearchStats) {
        self.hops += other.hops;
        self.pages_read += other.pages_read;
        self.n_read += other.n_read;
        self.n_eff += other.n_eff;
        self.n_rbu += other.n_rbu;
        self.cache_hits += other.cache_hits;
        self.cache_lookups += other.cache_lookups;
        self.full_distances += other.full_distances;
        self.pq_distances += other.pq_distances;
        self.latency_us += other.latency_us;
    }
}

/// `N_eff / N_read`.
pub fn io_utilization(stats: &SearchStats) -> Result<f64> {
    if stats.n_read == 0 {
        return Err(Error::Undefined("I/O utilization with no records read"));
    }
    Ok(stats.n_eff as f64 / (stats.n_eff + stats.n_rbu) as f64)
}

/// `(N_read, N_eff, N_rbu)` recounted from an event log.
pub fn recount_events(events: &[RecordEvent]) -> (u64, u64, u64) {
    let read: HashSet<u32> = events
        .iter()
        .filter(|e| e.kind == EventKind::Read)
        .map(|e| e.id)
        .collect();
    let expanded: HashSet<u32> = events
        .iter()
        .filter(|e| e.kind == EventKind::Expand && read.contains(&e.id))
        .map(|e| e.id)
        .collect();
    let (r, e) = (read.len() as u64, expanded.len() as u64);
    (r, e, r - e)
}

#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub neighbors: Vec<Neighbor>,
    pub stats: SearchStats,
}

impl SearchOutput {
    pub fn ids(&self) -> Vec<u32> {
        self.neighbors.iter().map(|n| n.id).collect()
    }
}

/// Immutable search state shared by all query threads.
#[derive(Debug)]
pub struct Engine {
    disk: DiskIndex,
    reader: Arc<PageReader>,
    pool: IoPool,
    pq: Option<(PqCodebook, PqCodes)>,
    memgraph: Option<MemGraph>,
    cache: Option<CacheSet>,
}

pub const DEFAULT_IO_THREADS: usize = 8;

impl Engine {
    pub fn new(disk: DiskIndex, reader: PageReader, io_threads: usize) -> Result<Self> {
        if reader.page_size() != disk.meta().page_size || reader.num_pages() != disk.meta().num_pages {
            return Err(Error::InvalidParameter("page reader does not match the index".into()));
        }
        Ok(Self {
            disk,
            reader: Arc::new(reader),
            pool: IoPool::new(io_threads),
            pq: None,
            memgraph: None,
            cache: None,
        })
    }

    /// Opens `disk` with direct I/O when `direct` is set.
    pub fn open(disk: DiskIndex, direct: bool) -> Result<Self> {
        let reader = PageReader::open(disk.path(), disk.meta(), direct)?;
        Self::new(disk, reader, DEFAULT_IO_THREADS)
    }

    pub fn with_pq(mut self, codebook: PqCodebook, codes: PqCodes) -> Result<Self> {
        let meta = self.disk.meta();
        if codebook.d() != meta.d || codes.len() != meta.n || codes.m() != codebook.m() {
            return Err(Error::InvalidParameter(format!(
                "PQ model (d = {}, {} codes, m = {}) does not match index (d = {}, n = {})",
                codebook.d(),
                codes.len(),
                codes.m(),
                meta.d,
                meta.n
            )));
        }
        self.pq = Some((codebook, codes));
        Ok(self)
    }

    pub fn with_memgraph(mut self, mg: MemGraph) -> Result<Self> {
        if mg.base_n() != self.disk.meta().n || mg.vectors().d() != self.disk.meta().d {
            return Err(Error::InvalidParameter(
                "memgraph was built for a different base set".into(),
            ));
        }
        self.memgraph = Some(mg);
        Ok(self)
    }

    pub fn with_cache(mut self, cache: CacheSet) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn set_cache(&mut self, cache: Option<CacheSet>) {
        self.cache = cache;
    }

    pub fn disk(&self) -> &DiskIndex {
        &self.disk
    }

    pub fn reader(&self) -> &PageReader {
        &self.reader
    }

    pub fn pq(&self) -> Option<&(PqCodebook, PqCodes)> {
        self.pq.as_ref()
    }

    pub fn memgraph(&self) -> Option<&MemGraph> {
        self.memgraph.as_ref()
    }

    pub fn cache(&self) -> Option<&CacheSet> {
        self.cache.as_ref()
    }

    /// In-memory bytes of PQ codes + codebook, MemGraph, cache and page map.
    pub fn memory_bytes(&self) -> usize {
        let pq = self
            .pq
            .as_ref()
            .map_or(0, |(cb, codes)| cb.memory_bytes() + codes.memory_bytes());
        let mg = self.memgraph.as_ref().map_or(0, MemGraph::memory_bytes);
        let cache = self.cache.as_ref().map_or(0, CacheSet::memory_bytes);
        let map = if self.disk.meta().mapped {
            self.disk.layout().memory_bytes()
        } else {
            0
        };
        pq + mg + cache + map
    }

    fn check(&self, q: &[f32], cfg: &SearchConfig) -> Result<()> {
        cfg.validate()?;
        if q.len() != self.disk.meta().d {
            return Err(Error::DimensionMismatch {
                expected: self.disk.meta().d,
                got: q.len(),
            });
        }
        let missing = |what: &str| Err(Error::Config(format!("{what} enabled but the engine has none loaded")));
        if cfg.use_pq && self.pq.is_none() {
            return missing("use_pq");
        }
        if cfg.use_memgraph && self.memgraph.is_none() {
            return missing("use_memgraph");
        }
        if cfg.use_cache && self.cache.is_none() {
            return missing("use_cache");
        }
        if cfg.use_shuffled_layout != self.disk.meta().mapped {
            return Err(Error::Config(format!(
                "use_shuffled_layout = {} but the loaded index is {}",
                cfg.use_shuffled_layout,
                if self.disk.meta().mapped {
                    "shuffled"
                } else {
                    "in id order"
                }
            )));
        }
        Ok(())
    }

    pub fn search(&self, q: &[f32], cfg: &SearchConfig) -> Result<SearchOutput> {
        self.check(q, cfg)?;
        let start = Instant::now();
        let mut state = QueryState::new(self, cfg, q)?;
        if cfg.pipeline {
            state.run_pipeline()?;
        } else {
            state.run_sequential()?;
        }
        let mut out = state.finish();
        out.stats.latency_us = start.elapsed().as_micros() as u64;
        Ok(out)
    }
}

#[derive(Debug)]
struct Record {
    dist: f32,
    neighbors: Vec<u32>,
    cached: bool,
    expanded: bool,
}

#[derive(Default)]
struct Pipeline {
    /// Page -> targets waiting for it.
    pending: HashMap<u32, Vec<u32>>,
    ready: VecDeque<u32>,
}

struct QueryState<'e> {
    eng: &'e Engine,
    cfg: &'e SearchConfig,
    q: &'e [f32],
    table: Option<DistanceTable>,
    list: CandidateList,
    seen: HashSet<u32>,
    records: HashMap<u32, Record>,
    pages: HashMap<u32, AlignedBuf>,
    batch: IoBatch<'e>,
    eager: VecDeque<u32>,
    stats: SearchStats,
    phase: PhaseDetector,
    best: f32,
    done: bool,
}

impl<'e> QueryState<'e> {
    fn new(eng: &'e Engine, cfg: &'e SearchConfig, q: &'e [f32]) -> Result<Self> {
        let table = match (&eng.pq, cfg.use_pq) {
            (Some((cb, _)), true) => Some(cb.distance_table(q)?),
            _ => None,
        };
        let mut s = Self {
            eng,
            cfg,
            q,
            table,
            list: CandidateList::new(cfg.l),
            seen: HashSet::new(),
            records: HashMap::new(),
            pages: HashMap::new(),
            batch: IoBatch::new(&eng.pool, Arc::clone(&eng.reader), 1),
            eager: VecDeque::new(),
            stats: SearchStats::default(),
            phase: PhaseDetector::new(),
            best: f32::INFINITY,
            done: false,
        };
        let entries = match (&eng.memgraph, cfg.use_memgraph) {
            (Some(mg), true) => select_entries(mg, q, cfg.mem_l, cfg.mem_fanout)?,
            _ => vec![eng.disk.meta().medoid],
        };
        let fresh: Vec<u32> = entries.into_iter().filter(|&e| s.seen.insert(e)).collect();
        s.score_and_insert(&fresh)?;
        Ok(s)
    }

    fn log(&mut self, id: u32, kind: EventKind) {
        if self.cfg.record_events {
            self.stats.events.push(RecordEvent { id, kind });
        }
    }

    /// Inserts `ids` (already marked seen) into the list under the guide
    /// distance.
    fn score_and_insert(&mut self, ids: &[u32]) -> Result<()> {
        if let Some(table) = &self.table {
            let codes = &self.eng.pq.as_ref().expect("checked").1;
            for &v in ids {
                let d = table.distance(codes.code(v as usize));
                self.list.insert(v, d);
            }
            self.stats.pq_distances += ids.len() as u64;
        } else {
            self.fetch(ids)?;
            for &v in ids {
                let d = self.records[&v].dist;
                self.list.insert(v, d);
            }
        }
        Ok(())
    }

    fn decode_into_records(&mut self, id: u32, page: &[u8]) -> bool {
        if self.records.contains_key(&id) {
            return false;
        }
        let meta = self.eng.disk.meta();
        let slot = self.eng.disk.layout().location(id).slot as usize;
        let raw = meta.record(page, slot);
        let mut v = vec![0f32; meta.d];
        meta.decode_vector(raw, &mut v);
        let dist = meta.metric.distance(&v, self.q);
        self.stats.full_distances += 1;
        self.stats.n_read += 1;
        self.best = self.best.min(dist);
        self.records.insert(
            id,
            Record {
                dist,
                neighbors: meta.decode_neighbors(raw),
                cached: false,
                expanded: false,
            },
        );
        self.log(id, EventKind::Read);
        true
    }

    fn serve_from_cache(&mut self, id: u32) {
        let rec = cache_lookup(self.eng.cache.as_ref().expect("checked"), id).expect("caller checked hit");
        let dist = self.eng.disk.meta().metric.distance(&rec.vector, self.q);
        self.stats.full_distances += 1;
        self.stats.cache_hits += 1;
        self.best = self.best.min(dist);
        self.records.insert(
            id,
            Record {
                dist,
                neighbors: rec.neighbors.clone(),
                cached: true,
                expanded: false,
            },
        );
        self.log(id, EventKind::CacheHit);
    }

    fn serve_from_scratch(&mut self, id: u32) {
        let page = self.eng.disk.layout().page_of(id);
        let buf = self.pages.remove(&page).expect("page in scratch");
        self.decode_into_records(id, &buf);
        self.pages.insert(page, buf);
    }

    fn cached(&self, id: u32) -> bool {
        self.cfg.use_cache && self.eng.cache.as_ref().is_some_and(|c| c.contains(id))
    }

    /// Books a freshly read page: decodes `targets` and, with page search,
    /// every other resident.
    fn ingest(&mut self, page: u32, buf: AlignedBuf, targets: &[u32]) {
        self.stats.pages_read += 1;
        for &t in targets {
            self.decode_into_records(t, &buf);
        }
        if self.cfg.page_search {
            let residents: Vec<u32> = self.eng.disk.layout().residents(page).map(|(_, id)| id).collect();
            for id in residents {
                if self.decode_into_records(id, &buf) && !targets.contains(&id) {
                    self.eager.push_back(id);
                }
            }
        }
        self.pages.insert(page, buf);
    }

    /// Makes every id of `ids` available in `records`, reading pages as
    /// needed. A page is skipped in favour of the cache only when all of
    /// its requested records are cached.
    fn fetch(&mut self, ids: &[u32]) -> Result<()> {
        let mut by_page: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &id in ids {
            if !self.records.contains_key(&id) {
                by_page.entry(self.eng.disk.layout().page_of(id)).or_default().push(id);
            }
        }
        let mut to_read = Vec::new();
        for (page, group) in by_page {
            if self.cfg.use_cache {
                self.stats.cache_lookups += group.len() as u64;
            }
            if self.pages.contains_key(&page) {
                group.iter().for_each(|&id| self.serve_from_scratch(id));
            } else if group.iter().all(|&id| self.cached(id)) {
                group.iter().for_each(|&id| self.serve_from_cache(id));
            } else {
                to_read.push((page, group));
            }
        }
        if to_read.is_empty() {
            return Ok(());
        }
        let pages: Vec<u32> = to_read.iter().map(|(p, _)| *p).collect();
        self.batch.set_max_depth(pages.len());
        self.batch.submit(&pages)?;
        let mut done = self.batch.drain();
        done.sort_by_key(|c| c.page);
        let mut targets: HashMap<u32, Vec<u32>> = to_read.into_iter().collect();
        for c in done {
            let buf = c.data?;
            let group = targets.remove(&c.page).unwrap_or_default();
            self.ingest(c.page, buf, &group);
        }
        Ok(())
    }

    /// Scores `u`'s unseen neighbors into the list. `u` must be in `records`.
    fn expand(&mut self, u: u32) -> Result<()> {
        let rec = self.records.get_mut(&u).expect("expanded record was fetched");
        if rec.expanded {
            return Ok(());
        }
        rec.expanded = true;
        let cached = rec.cached;
        let nbrs = std::mem::take(&mut rec.neighbors);
        if !cached {
            self.stats.n_eff += 1;
        }
        self.log(u, EventKind::Expand);
        if let Some(pos) = self.list.position(u) {
            let c = self.list.get_mut(pos);
            c.expanded = true;
            c.in_flight = false;
        }
        let fresh: Vec<u32> = nbrs.iter().copied().filter(|&v| self.seen.insert(v)).collect();
        self.records.get_mut(&u).unwrap().neighbors = nbrs;
        self.score_and_insert(&fresh)
    }

    /// Page-search co-residents: enter the list and are expanded at once if
    /// they rank within it.
    fn drain_eager(&mut self) -> Result<()> {
        while let Some(id) = self.eager.pop_front() {
            if self.done {
                continue;
            }
            if self.seen.insert(id) {
                self.score_and_insert(&[id])?;
            }
            if self.list.position(id).is_some() {
                self.expand(id)?;
            }
        }
        Ok(())
    }

    fn width(&self, t: usize, base: usize) -> usize {
        if self.cfg.dynamic_width {
            self.cfg.dw.width(t, self.phase.phase)
        } else {
            base
        }
    }

    fn run_sequential(&mut self) -> Result<()> {
        self.drain_eager()?;
        let mut t = 0;
        loop {
            let frontier = self.list.frontier(self.width(t, self.cfg.beam));
            if frontier.is_empty() {
                break;
            }
            self.stats.hops += 1;
            self.fetch(&frontier)?;
            self.drain_eager()?;
            for &u in &frontier {
                self.expand(u)?;
                self.drain_eager()?;
            }
            self.phase.observe(t, self.best, self.cfg.dw.patience);
            t += 1;
        }
        Ok(())
    }

    /// Tops the pipeline up to `depth` outstanding targets. Targets served
    /// without I/O wait in `ready` and count toward the depth.
    fn fill(&mut self, pipe: &mut Pipeline, depth: usize) -> Result<()> {
        self.batch.set_max_depth(depth.max(self.batch.in_flight()));
        while self.batch.in_flight() + pipe.ready.len() < depth {
            let Some(&id) = self.list.frontier(1).first() else {
                break;
            };
            let pos = self.list.position(id).expect("frontier id is listed");
            self.list.get_mut(pos).in_flight = true;
            let page = self.eng.disk.layout().page_of(id);
            if self.records.contains_key(&id) {
                pipe.ready.push_back(id);
                continue;
            }
            if self.cfg.use_cache {
                self.stats.cache_lookups += 1;
            }
            if self.pages.contains_key(&page) {
                self.serve_from_scratch(id);
                pipe.ready.push_back(id);
            } else if self.cached(id) {
                self.serve_from_cache(id);
                pipe.ready.push_back(id);
            } else if let Some(waiting) = pipe.pending.get_mut(&page) {
                waiting.push(id);
            } else {
                self.batch.submit(&[page])?;
                pipe.pending.insert(page, vec![id]);
            }
        }
        Ok(())
    }

    /// Keeps up to `D` reads outstanding and re-issues after every single
    /// expansion, so new reads are chosen before the rest of a completed
    /// batch has been examined.
    fn run_pipeline(&mut self) -> Result<()> {
        let mut pipe = Pipeline::default();
        let mut t = 0;
        loop {
            let depth = self.width(t, self.cfg.pipeline_depth);
            self.fill(&mut pipe, depth)?;
            if pipe.ready.is_empty() && (self.batch.in_flight() == 0 || !self.list.has_unexpanded()) {
                break;
            }
            self.stats.hops += 1;
            let mut done = if pipe.ready.is_empty() {
                self.batch.wait()
            } else {
                self.batch.poll()
            };
            done.sort_by_key(|c| c.page);
            for c in done {
                let buf = c.data?;
                let group = pipe.pending.remove(&c.page).unwrap_or_default();
                self.ingest(c.page, buf, &group);
                pipe.ready.extend(group);
            }
            self.drain_eager()?;
            for _ in 0..pipe.ready.len() {
                let id = pipe.ready.pop_front().expect("counted");
                if self.list.position(id).is_some() {
                    self.expand(id)?;
                    self.drain_eager()?;
                }
                self.fill(&mut pipe, depth)?;
            }
            self.phase.observe(t, self.best, self.cfg.dw.patience);
            t += 1;
        }
        // Reads whose targets were evicted: booked, never expanded.
        self.done = true;
        let mut rest = self.batch.drain();
        rest.sort_by_key(|c| c.page);
        for c in rest {
            let buf = c.data?;
            let group = pipe.pending.remove(&c.page).unwrap_or_default();
            self.ingest(c.page, buf, &group);
        }
        self.eager.clear();
        Ok(())
    }

    fn finish(mut self) -> SearchOutput {
        let mut all: Vec<Neighbor> = self.records.iter().map(|(&id, r)| Neighbor::new(id, r.dist)).collect();
        all.sort_unstable();
        all.truncate(self.cfg.k);
        self.stats.n_rbu = self.records.values().filter(|r| !r.cached && !r.expanded).count() as u64;
        SearchOutput {
            neighbors: all,
            stats: std::mem::take(&mut self.stats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_starts_at_min_and_saturates() {
        let dw = DynamicWidth::default();
        assert_eq!(dynamic_width_schedule(0, None, &dw), 8);
        assert_eq!(dynamic_width_schedule(dw.warmup, None, &dw), 8);
        assert_eq!(dynamic_width_schedule(dw.warmup + 1, None, &dw), 16);
        assert_eq!(dynamic_width_schedule(1000, None, &dw), 32);
        assert_eq!(dynamic_width_schedule(3, Some(1), &dw), 32);
        assert_eq!(dynamic_width_schedule(1, Some(1), &dw), 8);
        let mut prev = 0;
        for t in 0..200 {
            let w = dynamic_width_schedule(t, Some(50), &dw);
            assert!(w >= prev);
            prev = w;
        }
    }

    #[test]
    fn phase_detector_fires_after_patience_stalls() {
        let mut p = PhaseDetector::new();
        p.observe(0, 5.0, 2);
        p.observe(1, 4.0, 2);
        p.observe(2, 4.0, 2);
        assert_eq!(p.phase, None);
        p.observe(3, 4.0, 2);
        assert_eq!(p.phase, Some(4));
        p.observe(4, 1.0, 2);
        assert_eq!(p.phase, Some(4));
    }

    #[test]
    fn utilization_formula() {
        let s = SearchStats {
            n_read: 64,
            n_eff: 40,
            n_rbu: 24,
            ..Default::default()
        };
        assert_eq!(io_utilization(&s).unwrap(), 0.625);
        let s = SearchStats {
            n_read: 5,
            n_eff: 5,
            ..Default::default()
        };
        assert_eq!(io_utilization(&s).unwrap(), 1.0);
        assert!(matches!(
            io_utilization(&SearchStats::default()),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn config_validation() {
        let ok = SearchConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SearchConfig { k: 0, ..ok }.validate().is_err());
        assert!(SearchConfig { k: 200, ..ok }.validate().is_err());
        assert!(SearchConfig {
            pipeline: true,
            use_pq: false,
            ..ok
        }
        .validate()
        .is_err());
    }
}
