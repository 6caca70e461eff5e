//! In-memory navigation graph over a uniform sample of the base set, used to
//! pick entry points for the disk search.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ElemKind, VectorDataset};
use crate::distance::{Metric, Neighbor};
use crate::error::{Error, Result};
use crate::graph::{build_vamana, greedy_search, GraphIndex};
use crate::pq::read_magic;

pub const MEMGRAPH_MAGIC: &[u8; 4] = b"OMG1";
pub const DEFAULT_L_MEM: usize = 10;
pub const DEFAULT_FANOUT: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MemGraph {
    ratio: f64,
    base_n: usize,
    /// Sorted base ids; sample `i` is base vector `ids[i]`.
    ids: Vec<u32>,
    graph: GraphIndex,
    vectors: VectorDataset,
}

/// `ceil(ratio * n)`, tolerant of rounding noise in `ratio * n`.
pub fn sample_count(ratio: f64, n: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sample ratio {ratio} must be in (0, 1]"
        )));
    }
    let x = ratio * n as f64;
    let count = (x - x * 1e-12).ceil() as usize;
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "ratio {ratio} samples no vertex of {n}"
        )));
    }
    Ok(count.min(n))
}

pub fn build_memgraph(base: &VectorDataset, ratio: f64, r: usize, l: usize, seed: u64) -> Result<MemGraph> {
    let count = sample_count(ratio, base.n())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = index::sample(&mut rng, base.n(), count)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    ids.sort_unstable();
    let vectors = base.subset(&ids)?;
    let graph = if count == 1 {
        GraphIndex::from_adjacency(vec![Vec::new()], r, 0)?
    } else {
        build_vamana(&vectors, r, l, 1.2, seed)?
    };
    Ok(MemGraph {
        ratio,
        base_n: base.n(),
        ids,
        graph,
        vectors,
    })
}

impl MemGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn base_n(&self) -> usize {
        self.base_n
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn graph(&self) -> &GraphIndex {
        &self.graph
    }

    pub fn vectors(&self) -> &VectorDataset {
        &self.vectors
    }

    /// Base id of the sample graph's medoid.
    pub fn medoid_base_id(&self) -> u32 {
        self.ids[self.graph.medoid() as usize]
    }

    /// Graph, sampled vectors and id map.
    pub fn memory_bytes(&self) -> usize {
        self.graph.memory_bytes() + self.vectors.as_slice().len() * 4 + self.ids.len() * 4
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MEMGRAPH_MAGIC)?;
        w.write_u32::<LittleEndian>(self.ids.len() as u32)?;
        w.write_f64::<LittleEndian>(self.ratio)?;
        w.write_u32::<LittleEndian>(self.base_n as u32)?;
        self.graph.write_to(&mut w)?;
        w.write_u32::<LittleEndian>(self.vectors.d() as u32)?;
        w.write_u32::<LittleEndian>(self.vectors.elem().code())?;
        w.write_u32::<LittleEndian>(self.vectors.metric().code())?;
        for &v in self.vectors.as_slice() {
            w.write_f32::<LittleEndian>(v)?;
        }
        for &id in &self.ids {
            w.write_u32::<LittleEndian>(id)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, MEMGRAPH_MAGIC, "memgraph")?;
        let bad = |detail: String| Error::BadHeader {
            what: "memgraph",
            detail,
        };
        let count = r.read_u32::<LittleEndian>()? as usize;
        let ratio = r.read_f64::<LittleEndian>()?;
        let base_n = r.read_u32::<LittleEndian>()? as usize;
        let graph = GraphIndex::read_from(&mut r)?;
        if graph.n() != count {
            return Err(bad(format!("graph has {} vertices, expected {count}", graph.n())));
        }
        let d = r.read_u32::<LittleEndian>()? as usize;
        let elem = ElemKind::from_code(r.read_u32::<LittleEndian>()?).ok_or_else(|| bad("element kind".into()))?;
        let metric = Metric::from_code(r.read_u32::<LittleEndian>()?).ok_or_else(|| bad("metric".into()))?;
        let mut data = vec![0f32; count * d];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        let vectors = VectorDataset::new(d, elem, metric, data)?;
        let mut ids = vec![0u32; count];
        r.read_u32_into::<LittleEndian>(&mut ids)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) || ids.iter().any(|&i| i as usize >= base_n) {
            return Err(bad("sample ids must be sorted, unique and < n".into()));
        }
        Ok(Self {
            ratio,
            base_n,
            ids,
            graph,
            vectors,
        })
    }
}

/// Best-first search on the sample graph from its medoid; the `fanout`
/// closest samples found, as base ids with their distances, nearest first.
pub fn select_entries_scored(mg: &MemGraph, q: &[f32], l_mem: usize, fanout: usize) -> Result<Vec<Neighbor>> {
    if fanout == 0 {
        return Err(Error::InvalidParameter("fanout must be >= 1".into()));
    }
    let trace = greedy_search(&mg.graph, &mg.vectors, q, &[mg.graph.medoid()], l_mem.max(fanout))?;
    Ok(trace
        .candidates
        .iter()
        .take(fanout)
        .map(|nb| Neighbor::new(mg.ids[nb.id as usize], nb.dist))
        .collect())
}

pub fn select_entries(mg: &MemGraph, q: &[f32], l_mem: usize, fanout: usize) -> Result<Vec<u32>> {
    Ok(select_entries_scored(mg, q, l_mem, fanout)?
        .into_iter()
        .map(|nb| nb.id)
        .collect())
}
