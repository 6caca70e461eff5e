//! Page-aligned on-disk index: record packing, the record-to-page map,
//! overlap-ratio metrics and locality-driven page shuffling.
//!
//! File layout: page 0 is a header page; data page `i` starts at byte
//! `(i + 1) * P`. Each record is `[vector ‖ u32 neighbor count ‖ R_max u32
//! ids]`, zero-padded, stored at slot offset `slot * s_rec` of its page.

use std::cmp::Reverse;
use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ElemKind, VectorDataset};
use crate::distance::Metric;
use crate::error::{Error, Result};
use crate::graph::GraphIndex;

pub const INDEX_MAGIC: &[u8; 4] = b"ODI1";
pub const INDEX_VERSION: u32 = 1;
pub const MIN_PAGE_SIZE: usize = 4096;
const EMPTY: u32 = u32::MAX;

pub fn record_size(d: usize, elem: ElemKind, r_max: usize) -> usize {
    d * elem.size() + 4 + 4 * r_max
}

pub fn records_per_page(page_size: usize, record_size: usize) -> Result<usize> {
    if !page_size.is_power_of_two() || page_size < MIN_PAGE_SIZE {
        return Err(Error::InvalidParameter(format!(
            "page size {page_size} must be a power of two >= {MIN_PAGE_SIZE}"
        )));
    }
    let per_page = page_size / record_size;
    if per_page == 0 {
        return Err(Error::RecordTooLarge {
            record_size,
            page_size,
            suggested: record_size.next_power_of_two(),
        });
    }
    Ok(per_page)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub page: u32,
    pub slot: u16,
}

/// Bijection between record ids and `(page, slot)` positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageLayout {
    page_size: usize,
    record_size: usize,
    per_page: usize,
    locations: Vec<Location>,
    /// `page * per_page + slot` -> record id, `EMPTY` for unused slots.
    slots: Vec<u32>,
    mapped: bool,
}

impl PageLayout {
    /// Record `i` at page `i / n_p`, slot `i % n_p`.
    pub fn identity(n: usize, page_size: usize, record_size: usize) -> Result<Self> {
        let per_page = records_per_page(page_size, record_size)?;
        let locations = (0..n)
            .map(|i| Location {
                page: (i / per_page) as u32,
                slot: (i % per_page) as u16,
            })
            .collect();
        let pages = n.div_ceil(per_page);
        let mut slots = vec![EMPTY; pages * per_page];
        for (i, s) in slots.iter_mut().enumerate().take(n) {
            *s = i as u32;
        }
        Ok(Self {
            page_size,
            record_size,
            per_page,
            locations,
            slots,
            mapped: false,
        })
    }

    pub fn from_locations(locations: Vec<Location>, page_size: usize, record_size: usize) -> Result<Self> {
        let per_page = records_per_page(page_size, record_size)?;
        let pages = locations.iter().map(|l| l.page as usize + 1).max().unwrap_or(0);
        let mut slots = vec![EMPTY; pages * per_page];
        for (id, loc) in locations.iter().enumerate() {
            if loc.slot as usize >= per_page {
                return Err(Error::InvalidParameter(format!(
                    "slot {} of record {id} exceeds records per page {per_page}",
                    loc.slot
                )));
            }
            let idx = loc.page as usize * per_page + loc.slot as usize;
            if slots[idx] != EMPTY {
                return Err(Error::InvalidParameter(format!(
                    "records {} and {id} share page {} slot {}",
                    slots[idx], loc.page, loc.slot
                )));
            }
            slots[idx] = id as u32;
        }
        if (0..pages).any(|p| slots[p * per_page..(p + 1) * per_page].iter().all(|&s| s == EMPTY)) {
            return Err(Error::InvalidParameter("layout contains an empty page".into()));
        }
        Ok(Self {
            page_size,
            record_size,
            per_page,
            locations,
            slots,
            mapped: true,
        })
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    pub fn per_page(&self) -> usize {
        self.per_page
    }

    pub fn num_pages(&self) -> usize {
        self.slots.len() / self.per_page
    }

    pub fn is_mapped(&self) -> bool {
        self.mapped
    }

    #[inline]
    pub fn location(&self, id: u32) -> Location {
        self.locations[id as usize]
    }

    #[inline]
    pub fn page_of(&self, id: u32) -> u32 {
        self.locations[id as usize].page
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    /// `(slot, id)` for every occupied slot of `page`.
    pub fn residents(&self, page: u32) -> impl Iterator<Item = (usize, u32)> + '_ {
        let start = page as usize * self.per_page;
        self.slots[start..start + self.per_page]
            .iter()
            .enumerate()
            .filter(|(_, &id)| id != EMPTY)
            .map(|(s, &id)| (s, id))
    }

    pub fn record_at(&self, page: u32, slot: usize) -> Option<u32> {
        let id = self.slots[page as usize * self.per_page + slot];
        (id != EMPTY).then_some(id)
    }

    /// Bytes held by the in-memory id->page map and its inverse.
    pub fn memory_bytes(&self) -> usize {
        self.locations.len() * std::mem::size_of::<Location>() + self.slots.len() * 4
    }

    pub fn write_map(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for loc in &self.locations {
            w.write_u32::<LittleEndian>(loc.page)?;
            w.write_u16::<LittleEndian>(loc.slot)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_map(path: &Path, n: usize, page_size: usize, record_size: usize) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut locations = Vec::with_capacity(n);
        for _ in 0..n {
            let page = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Truncated(path.display().to_string()))?;
            let slot = r
                .read_u16::<LittleEndian>()
                .map_err(|_| Error::Truncated(path.display().to_string()))?;
            locations.push(Location { page, slot });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::BadHeader {
                what: "layout map",
                detail: format!("{} trailing bytes", rest.len()),
            });
        }
        Self::from_locations(locations, page_size, record_size)
    }
}

/// Header of a packed index file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiskMeta {
    pub n: usize,
    pub d: usize,
    pub elem: ElemKind,
    pub metric: Metric,
    pub r_max: usize,
    pub page_size: usize,
    pub per_page: usize,
    pub medoid: u32,
    pub mapped: bool,
    pub record_size: usize,
    pub num_pages: usize,
}

impl DiskMeta {
    fn encode(&self) -> Vec<u8> {
        let mut h = Vec::with_capacity(self.page_size);
        h.extend_from_slice(INDEX_MAGIC);
        for v in [
            INDEX_VERSION,
            self.n as u32,
            self.d as u32,
            self.elem.code(),
            self.r_max as u32,
            self.page_size as u32,
            self.per_page as u32,
            self.medoid,
            u32::from(self.mapped),
            self.metric.code(),
            self.record_size as u32,
            self.num_pages as u32,
        ] {
            h.extend_from_slice(&v.to_le_bytes());
        }
        h.resize(self.page_size, 0);
        h
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |detail: String| Error::BadHeader {
            what: "disk index",
            detail,
        };
        if bytes.len() < 52 || &bytes[0..4] != INDEX_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let mut r = &bytes[4..];
        let mut next = || r.read_u32::<LittleEndian>().map_err(Error::from);
        let version = next()?;
        if version != INDEX_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = next()? as usize;
        let d = next()? as usize;
        let elem = ElemKind::from_code(next()?).ok_or_else(|| bad("element kind".into()))?;
        let r_max = next()? as usize;
        let page_size = next()? as usize;
        let per_page = next()? as usize;
        let medoid = next()?;
        let mapped = match next()? {
            0 => false,
            1 => true,
            f => return Err(bad(format!("layout flag {f}"))),
        };
        let metric = Metric::from_code(next()?).ok_or_else(|| bad("metric".into()))?;
        let record_size = next()? as usize;
        let num_pages = next()? as usize;
        if record_size != self::record_size(d, elem, r_max) || per_page != page_size / record_size.max(1) {
            return Err(bad("inconsistent record geometry".into()));
        }
        Ok(Self {
            n,
            d,
            elem,
            metric,
            r_max,
            page_size,
            per_page,
            medoid,
            mapped,
            record_size,
            num_pages,
        })
    }

    pub fn page_offset(&self, page: u32) -> u64 {
        (page as u64 + 1) * self.page_size as u64
    }

    pub fn file_len(&self) -> u64 {
        (self.num_pages as u64 + 1) * self.page_size as u64
    }

    /// Record bytes at `slot` within a page image.
    #[inline]
    pub fn record<'a>(&self, page: &'a [u8], slot: usize) -> &'a [u8] {
        &page[slot * self.record_size..(slot + 1) * self.record_size]
    }

    #[inline]
    pub fn decode_vector(&self, record: &[u8], out: &mut [f32]) {
        self.elem.decode_into(&record[..self.d * self.elem.size()], out);
    }

    pub fn decode_neighbors(&self, record: &[u8]) -> Vec<u32> {
        let off = self.d * self.elem.size();
        let count = u32::from_le_bytes(record[off..off + 4].try_into().unwrap()) as usize;
        record[off + 4..off + 4 + 4 * count.min(self.r_max)]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    }

    pub fn decode_record(&self, record: &[u8]) -> DecodedRecord {
        let mut vector = vec![0.0f32; self.d];
        self.decode_vector(record, &mut vector);
        DecodedRecord {
            vector,
            neighbors: self.decode_neighbors(record),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRecord {
    pub vector: Vec<f32>,
    pub neighbors: Vec<u32>,
}

/// Sidecar path holding the id -> page map of a shuffled layout.
pub fn map_path(index_path: &Path) -> PathBuf {
    index_path.with_extension("map")
}

/// A packed index file together with its layout.
#[derive(Debug, Clone)]
pub struct DiskIndex {
    path: PathBuf,
    meta: DiskMeta,
    layout: PageLayout,
}

impl DiskIndex {
    /// Packs `base` + `g` into `path`. With `layout = None` records are
    /// placed in id order.
    pub fn pack(
        base: &VectorDataset,
        g: &GraphIndex,
        page_size: usize,
        layout: Option<&PageLayout>,
        path: &Path,
    ) -> Result<Self> {
        if base.n() != g.n() {
            return Err(Error::InvalidParameter(format!(
                "dataset has {} vectors but graph has {} vertices",
                base.n(),
                g.n()
            )));
        }
        let rec = record_size(base.d(), base.elem(), g.r_max());
        let layout = match layout {
            Some(l) => {
                if l.n() != base.n() || l.page_size() != page_size || l.record_size() != rec {
                    return Err(Error::InvalidParameter(
                        "layout does not match the index geometry".into(),
                    ));
                }
                l.clone()
            }
            None => PageLayout::identity(base.n(), page_size, rec)?,
        };
        let meta = DiskMeta {
            n: base.n(),
            d: base.d(),
            elem: base.elem(),
            metric: base.metric(),
            r_max: g.r_max(),
            page_size,
            per_page: layout.per_page(),
            medoid: g.medoid(),
            mapped: layout.is_mapped(),
            record_size: rec,
            num_pages: layout.num_pages(),
        };
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&meta.encode())?;
        let mut page = Vec::with_capacity(page_size);
        for p in 0..layout.num_pages() as u32 {
            page.clear();
            for slot in 0..layout.per_page() {
                let start = page.len();
                if let Some(id) = layout.record_at(p, slot) {
                    base.elem().encode_into(base.row(id as usize), &mut page);
                    let nbrs = g.neighbors(id);
                    page.extend_from_slice(&(nbrs.len() as u32).to_le_bytes());
                    for &v in nbrs {
                        page.extend_from_slice(&v.to_le_bytes());
                    }
                }
                page.resize(start + rec, 0);
            }
            page.resize(page_size, 0);
            w.write_all(&page)?;
        }
        w.flush()?;
        drop(w);
        if layout.is_mapped() {
            layout.write_map(&map_path(path))?;
        } else if map_path(path).exists() {
            std::fs::remove_file(map_path(path))?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            meta,
            layout,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut head = vec![0u8; MIN_PAGE_SIZE];
        file.read_exact_at(&mut head, 0)
            .map_err(|_| Error::Truncated(path.display().to_string()))?;
        let meta = DiskMeta::decode(&head)?;
        let len = file.metadata()?.len();
        if len != meta.file_len() {
            return Err(Error::BadHeader {
                what: "disk index",
                detail: format!("file length {len} != expected {}", meta.file_len()),
            });
        }
        let layout = if meta.mapped {
            PageLayout::read_map(&map_path(path), meta.n, meta.page_size, meta.record_size)?
        } else {
            PageLayout::identity(meta.n, meta.page_size, meta.record_size)?
        };
        if layout.num_pages() != meta.num_pages {
            return Err(Error::BadHeader {
                what: "disk index",
                detail: "page count disagrees with layout".into(),
            });
        }
        Ok(Self {
            path: path.to_path_buf(),
            meta,
            layout,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn meta(&self) -> &DiskMeta {
        &self.meta
    }

    pub fn layout(&self) -> &PageLayout {
        &self.layout
    }

    /// Buffered (page-cache) read of one data page; for tooling and tests,
    /// the search path goes through [`crate::io::PageReader`].
    pub fn read_page_buffered(&self, page: u32) -> Result<Vec<u8>> {
        if page as usize >= self.meta.num_pages {
            return Err(Error::PageOutOfRange {
                page,
                count: self.meta.num_pages as u32,
            });
        }
        let mut buf = vec![0u8; self.meta.page_size];
        File::open(&self.path)?.read_exact_at(&mut buf, self.meta.page_offset(page))?;
        Ok(buf)
    }

    /// Decodes every record by scanning the file page by page.
    pub fn read_all_records(&self) -> Result<Vec<DecodedRecord>> {
        let mut out = vec![None; self.meta.n];
        let mut r = BufReader::new(File::open(&self.path)?);
        let mut page = vec![0u8; self.meta.page_size];
        r.read_exact(&mut page)?;
        for p in 0..self.meta.num_pages as u32 {
            r.read_exact(&mut page)?;
            for (slot, id) in self.layout.residents(p) {
                out[id as usize] = Some(self.meta.decode_record(self.meta.record(&page, slot)));
            }
        }
        Ok(out.into_iter().map(|r| r.expect("layout is a bijection")).collect())
    }

    pub fn disk_bytes(&self) -> u64 {
        let map = if self.meta.mapped { self.meta.n as u64 * 6 } else { 0 };
        self.meta.file_len() + map
    }
}

/// `|B(u) ∩ N(u)| / (n_p - 1)`; defined as 0 when a page holds one record.
pub fn overlap_ratio_vertex(layout: &PageLayout, g: &GraphIndex, u: u32) -> Result<f64> {
    if u as usize >= g.n() || u as usize >= layout.n() {
        return Err(Error::InvalidId { id: u, n: g.n() });
    }
    if layout.per_page() < 2 {
        return Ok(0.0);
    }
    let page = layout.page_of(u);
    let shared = g
        .neighbors(u)
        .iter()
        .filter(|&&v| v != u && layout.page_of(v) == page)
        .count();
    Ok(shared as f64 / (layout.per_page() - 1) as f64)
}

/// Vertex-wise mean of [`overlap_ratio_vertex`].
pub fn overlap_ratio_graph(layout: &PageLayout, g: &GraphIndex) -> f64 {
    if layout.per_page() < 2 {
        return 0.0;
    }
    colocated_edges(layout, g) as f64 / ((layout.per_page() - 1) as f64 * g.n() as f64)
}

/// Directed edges whose endpoints share a page.
pub fn colocated_edges(layout: &PageLayout, g: &GraphIndex) -> u64 {
    (0..g.n() as u32)
        .map(|u| {
            let p = layout.page_of(u);
            g.neighbors(u).iter().filter(|&&v| layout.page_of(v) == p).count() as u64
        })
        .sum()
}

/// Page-read model: `(R̄·H / (OR·n_p), H / (OR·n_p))`, the second being the
/// variant where neighbor scoring happens in memory.
pub fn predicted_page_reads(r_bar: f64, hops: f64, overlap: f64, per_page: usize) -> Result<(f64, f64)> {
    if overlap <= 0.0 {
        return Err(Error::Undefined("page-read model needs a positive overlap ratio"));
    }
    if per_page == 0 {
        return Err(Error::InvalidParameter("records per page must be >= 1".into()));
    }
    let denom = overlap * per_page as f64;
    Ok((r_bar * hops / denom, hops / denom))
}

/// Undirected view with edge weight 2 for reciprocal pairs and 1 otherwise,
/// so that co-located weight equals the directed co-located edge count.
struct WeightedAdjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<u8>,
}

impl WeightedAdjacency {
    fn new(g: &GraphIndex) -> Self {
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(2 * g.num_edges());
        for u in 0..g.n() as u32 {
            for &v in g.neighbors(u) {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        let mut offsets = vec![0usize; g.n() + 1];
        let mut targets = Vec::with_capacity(pairs.len());
        let mut weights = Vec::with_capacity(pairs.len());
        for run in pairs.chunk_by(|a, b| a == b) {
            let (u, v) = run[0];
            offsets[u as usize + 1] += 1;
            targets.push(v);
            weights.push(run.len() as u8);
        }
        for i in 0..g.n() {
            offsets[i + 1] += offsets[i];
        }
        Self {
            offsets,
            targets,
            weights,
        }
    }

    fn edges(&self, u: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let r = self.offsets[u as usize]..self.offsets[u as usize + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&v, &w)| (v, w as u32))
    }

    fn weight(&self, u: u32, v: u32) -> u32 {
        let r = self.offsets[u as usize]..self.offsets[u as usize + 1];
        match self.targets[r.clone()].binary_search(&v) {
            Ok(i) => self.weights[r.start + i] as u32,
            Err(_) => 0,
        }
    }

    fn memory_bytes(&self) -> usize {
        self.offsets.len() * 8 + self.targets.len() * 5
    }
}

/// Outcome of [`shuffle_pages_traced`].
#[derive(Debug, Clone)]
pub struct ShuffleReport {
    pub layout: PageLayout,
    /// Co-located directed edges: identity layout, after greedy packing,
    /// then after each hill-climbing pass.
    pub objective: Vec<u64>,
    pub swaps: Vec<usize>,
    /// Set when a page holds a single record and shuffling is a no-op.
    pub degenerate: bool,
    /// Bytes of the graph, reverse graph and map structures held while
    /// shuffling.
    pub working_bytes: usize,
}

pub fn shuffle_pages(
    g: &GraphIndex,
    page_size: usize,
    record_size: usize,
    passes: usize,
    seed: u64,
) -> Result<PageLayout> {
    shuffle_pages_traced(g, page_size, record_size, passes, seed).map(|r| r.layout)
}

/// Greedy seed-and-grow packing followed by pair-swap hill climbing.
pub fn shuffle_pages_traced(
    g: &GraphIndex,
    page_size: usize,
    record_size: usize,
    passes: usize,
    seed: u64,
) -> Result<ShuffleReport> {
    let n = g.n();
    let per_page = records_per_page(page_size, record_size)?;
    let identity = PageLayout::identity(n, page_size, record_size)?;
    let base_objective = colocated_edges(&identity, g);
    if per_page < 2 {
        log::warn!("one record per page: page shuffle cannot co-locate neighbors, keeping identity layout");
        let mapped = PageLayout::from_locations(identity.locations().to_vec(), page_size, record_size)?;
        return Ok(ShuffleReport {
            layout: mapped,
            objective: vec![base_objective],
            swaps: Vec::new(),
            degenerate: true,
            working_bytes: g.memory_bytes() + identity.memory_bytes(),
        });
    }

    let adj = WeightedAdjacency::new(g);
    let mut page_of = vec![u32::MAX; n];
    let mut members: Vec<Vec<u32>> = Vec::with_capacity(n.div_ceil(per_page));

    // Seed-and-grow.
    let mut residual: Vec<u32> = (0..n as u32).map(|u| adj.edges(u).map(|(_, w)| w).sum()).collect();
    let mut queue: BTreeSet<(Reverse<u32>, u32)> = (0..n as u32).map(|u| (Reverse(residual[u as usize]), u)).collect();
    let mut gain: HashMap<u32, u32> = HashMap::new();
    let place = |v: u32,
                 page: u32,
                 page_of: &mut [u32],
                 residual: &mut [u32],
                 queue: &mut BTreeSet<(Reverse<u32>, u32)>,
                 gain: &mut HashMap<u32, u32>| {
        page_of[v as usize] = page;
        queue.remove(&(Reverse(residual[v as usize]), v));
        gain.remove(&v);
        for (y, w) in adj.edges(v) {
            if page_of[y as usize] == u32::MAX {
                queue.remove(&(Reverse(residual[y as usize]), y));
                residual[y as usize] -= w;
                queue.insert((Reverse(residual[y as usize]), y));
                *gain.entry(y).or_insert(0) += w;
            }
        }
    };
    while let Some(&(_, seed_v)) = queue.first() {
        let page = members.len() as u32;
        gain.clear();
        place(seed_v, page, &mut page_of, &mut residual, &mut queue, &mut gain);
        let mut group = vec![seed_v];
        while group.len() < per_page {
            let next = gain
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&v, _)| v)
                .or_else(|| queue.first().map(|&(_, v)| v));
            let Some(v) = next else { break };
            place(v, page, &mut page_of, &mut residual, &mut queue, &mut gain);
            group.push(v);
        }
        members.push(group);
    }
    drop(queue);

    let weight_to_page = |x: u32, page: u32, page_of: &[u32]| -> u32 {
        adj.edges(x)
            .filter(|(y, _)| page_of[*y as usize] == page)
            .map(|(_, w)| w)
            .sum()
    };
    let mut objective: u64 = (0..n as u32)
        .map(|u| weight_to_page(u, page_of[u as usize], &page_of) as u64)
        .sum::<u64>()
        / 2;
    let mut history = vec![base_objective, objective];
    let mut swaps_per_pass = Vec::with_capacity(passes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..n as u32).collect();
    for _ in 0..passes {
        order.shuffle(&mut rng);
        let mut swaps = 0usize;
        for &u in &order {
            let a = page_of[u as usize];
            let mut by_page: Vec<(u32, u32)> = Vec::new();
            for (y, w) in adj.edges(u) {
                let p = page_of[y as usize];
                match by_page.iter_mut().find(|e| e.0 == p) {
                    Some(e) => e.1 += w,
                    None => by_page.push((p, w)),
                }
            }
            let own = by_page.iter().find(|e| e.0 == a).map_or(0, |e| e.1);
            by_page.retain(|e| e.0 != a && e.1 > own);
            by_page.sort_unstable_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            by_page.truncate(3);

            let mut best: Option<(i64, u32, Option<u32>)> = None;
            for &(b, wub) in &by_page {
                let base_gain = wub as i64 - own as i64;
                let group = &members[b as usize];
                if group.len() < per_page && best.is_none_or(|bst| base_gain > bst.0) {
                    best = Some((base_gain, b, None));
                }
                for &x in group {
                    let delta = base_gain + weight_to_page(x, a, &page_of) as i64
                        - weight_to_page(x, b, &page_of) as i64
                        - 2 * adj.weight(u, x) as i64;
                    if best.is_none_or(|bst| delta > bst.0) {
                        best = Some((delta, b, Some(x)));
                    }
                }
            }
            if let Some((delta, b, x)) = best {
                if delta > 0 {
                    let ga = &mut members[a as usize];
                    ga.retain(|&v| v != u);
                    if let Some(x) = x {
                        ga.push(x);
                        page_of[x as usize] = a;
                        members[b as usize].retain(|&v| v != x);
                    }
                    members[b as usize].push(u);
                    page_of[u as usize] = b;
                    objective += delta as u64;
                    swaps += 1;
                }
            }
        }
        history.push(objective);
        swaps_per_pass.push(swaps);
        if swaps == 0 {
            break;
        }
    }

    // Pages may have lost members to moves; drop empty ones and renumber.
    let mut locations = vec![Location { page: 0, slot: 0 }; n];
    for (page, group) in members.iter_mut().filter(|g| !g.is_empty()).enumerate() {
        let page = page as u32;
        group.sort_unstable();
        for (slot, &v) in group.iter().enumerate() {
            locations[v as usize] = Location {
                page,
                slot: slot as u16,
            };
        }
    }
    let working_bytes = g.memory_bytes() + adj.memory_bytes() + n * 4 + n * std::mem::size_of::<Location>();
    let layout = PageLayout::from_locations(locations, page_size, record_size)?;
    Ok(ShuffleReport {
        layout,
        objective: history,
        swaps: swaps_per_pass,
        degenerate: false,
        working_bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: u32) -> GraphIndex {
        let adjacency = (0..n).map(|u| (0..n).filter(|&v| v != u).collect()).collect();
        GraphIndex::from_adjacency(adjacency, n as usize - 1, 0).unwrap()
    }

    fn ring(n: u32) -> GraphIndex {
        let adjacency = (0..n).map(|u| vec![(u + 1) % n, (u + n - 1) % n]).collect();
        GraphIndex::from_adjacency(adjacency, 2, 0).unwrap()
    }

    #[test]
    fn identity_arithmetic() {
        let l = PageLayout::identity(40, 4096, 256).unwrap();
        assert_eq!(l.per_page(), 16);
        assert_eq!(l.location(17), Location { page: 1, slot: 1 });
        assert_eq!(l.num_pages(), 3);
    }

    #[test]
    fn oversized_record_suggests_larger_page() {
        match records_per_page(4096, 4100) {
            Err(Error::RecordTooLarge { suggested, .. }) => assert_eq!(suggested, 8192),
            other => panic!("{other:?}"),
        }
        assert_eq!(records_per_page(8192, 4100).unwrap(), 1);
        assert!(records_per_page(3000, 10).is_err());
    }

    #[test]
    fn overlap_ratio_sixteen_per_page() {
        // Vertex 0 with two neighbors on its page and one elsewhere.
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); 32];
        adjacency[0] = vec![1, 2, 20];
        let g = GraphIndex::from_adjacency(adjacency, 3, 0).unwrap();
        let l = PageLayout::identity(32, 4096, 256).unwrap();
        let or = overlap_ratio_vertex(&l, &g, 0).unwrap();
        assert!((or - 2.0 / 15.0).abs() < 1e-15);
        assert!((or - 0.1333).abs() < 1e-4);
        assert_eq!(overlap_ratio_vertex(&l, &g, 5).unwrap(), 0.0);
        assert!(overlap_ratio_vertex(&l, &g, 99).is_err());
    }

    #[test]
    fn complete_graph_on_one_page() {
        let g = complete(4);
        let l = PageLayout::identity(4, 4096, 1024).unwrap();
        for u in 0..4 {
            assert_eq!(overlap_ratio_vertex(&l, &g, u).unwrap(), 1.0);
        }
        assert_eq!(overlap_ratio_graph(&l, &g), 1.0);
    }

    #[test]
    fn single_record_pages_define_zero_overlap() {
        let g = complete(4);
        let l = PageLayout::identity(4, 4096, 3000).unwrap();
        assert_eq!(overlap_ratio_vertex(&l, &g, 0).unwrap(), 0.0);
        let rep = shuffle_pages_traced(&g, 4096, 3000, 3, 0).unwrap();
        assert!(rep.degenerate);
        assert_eq!(rep.layout.locations(), l.locations());
    }

    #[test]
    fn model_values() {
        let (eq1, eq2) = predicted_page_reads(64.0, 50.0, 0.0625, 16).unwrap();
        assert!((eq1 - 3200.0).abs() < 1e-9);
        assert!((eq2 - eq1 / 64.0).abs() < 1e-9);
        let (_, eq2) = predicted_page_reads(3.0, 8.0, 1.0, 8).unwrap();
        assert_eq!(eq2, 1.0);
        assert!(matches!(
            predicted_page_reads(1.0, 1.0, 0.0, 4),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn ring_shuffle_finds_consecutive_packing() {
        // C8 with four records per page: the best layout puts two arcs of
        // four consecutive vertices on each page, 6 co-located directed edges
        // per page (3 undirected edges each way).
        let g = ring(8);
        let rep = shuffle_pages_traced(&g, 4096, 1024, 4, 1).unwrap();
        assert_eq!(colocated_edges(&rep.layout, &g), 12);
        assert!(
            overlap_ratio_graph(&rep.layout, &g)
                >= overlap_ratio_graph(&PageLayout::identity(8, 4096, 1024).unwrap(), &g)
        );
        assert_eq!(*rep.objective.last().unwrap(), 12);
    }

    #[test]
    fn edgeless_graph_terminates() {
        let g = GraphIndex::from_adjacency(vec![Vec::new(); 10], 4, 0).unwrap();
        let l = shuffle_pages(&g, 4096, 1024, 3, 0).unwrap();
        assert_eq!(l.n(), 10);
        assert_eq!(overlap_ratio_graph(&l, &g), 0.0);
    }
}
