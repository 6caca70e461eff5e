//! Static record cache filled in hop order from the search entry point.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::GraphIndex;
use crate::layout::{DecodedRecord, DiskIndex};

pub const POLICY_BFS: &str = "sssp-hop";

#[derive(Debug, Clone, Default)]
pub struct CacheSet {
    records: HashMap<u32, DecodedRecord>,
    capacity: usize,
    /// Ids in insertion (BFS) order.
    order: Vec<u32>,
}

impl CacheSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> &'static str {
        POLICY_BFS
    }

    pub fn ids(&self) -> &[u32] {
        &self.order
    }

    pub fn contains(&self, id: u32) -> bool {
        self.records.contains_key(&id)
    }

    pub fn memory_bytes(&self) -> usize {
        self.records
            .values()
            .map(|r| r.vector.len() * 4 + r.neighbors.len() * 4 + 64)
            .sum()
    }
}

/// Hit returns the cached record; `None` means the caller must read it.
pub fn cache_lookup(c: &CacheSet, id: u32) -> Option<&DecodedRecord> {
    c.records.get(&id)
}

/// Ids in BFS order from `entry`, each hop level sorted by id, truncated to
/// `budget`.
pub fn bfs_order(g: &GraphIndex, entry: u32, budget: usize) -> Result<Vec<u32>> {
    if entry as usize >= g.n() {
        return Err(Error::InvalidId { id: entry, n: g.n() });
    }
    let mut order = Vec::with_capacity(budget.min(g.n()));
    if budget == 0 {
        return Ok(order);
    }
    let mut seen = vec![false; g.n()];
    seen[entry as usize] = true;
    let mut level = vec![entry];
    while !level.is_empty() && order.len() < budget {
        let mut next = Vec::new();
        for &u in &level {
            if order.len() == budget {
                break;
            }
            order.push(u);
            for &v in g.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    next.push(v);
                }
            }
        }
        next.sort_unstable();
        level = next;
    }
    Ok(order)
}

/// Caches up to `budget` records, nearest hops first, read from `disk`.
pub fn build_sssp_cache(g: &GraphIndex, disk: &DiskIndex, entry: u32, budget: usize) -> Result<CacheSet> {
    if g.n() != disk.meta().n {
        return Err(Error::InvalidParameter("graph and disk index sizes differ".into()));
    }
    let order = bfs_order(g, entry, budget)?;
    let mut by_page: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &id in &order {
        by_page.entry(disk.layout().page_of(id)).or_default().push(id);
    }
    let meta = disk.meta();
    let mut records = HashMap::with_capacity(order.len());
    for (page, ids) in by_page {
        let bytes = disk.read_page_buffered(page)?;
        for id in ids {
            let slot = disk.layout().location(id).slot as usize;
            records.insert(id, meta.decode_record(meta.record(&bytes, slot)));
        }
    }
    Ok(CacheSet {
        records,
        capacity: budget,
        order,
    })
}
