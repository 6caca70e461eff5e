//! Vamana-style proximity graph: construction with α-pruning and the
//! in-memory best-first search used by the builder and the navigation graph.

use std::collections::{HashSet, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::candidates::CandidateList;
use crate::dataset::VectorDataset;
use crate::distance::Neighbor;
use crate::error::{Error, Result};
use crate::pq::read_magic;

pub const GRAPH_MAGIC: &[u8; 4] = b"OVG1";

/// Vertices inserted per batch. Searches within a batch see the graph as of
/// the batch start, which keeps construction deterministic under any thread
/// count.
const BUILD_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub r: usize,
    pub l_build: usize,
    pub alpha: f32,
    pub seed: u64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            r: 64,
            l_build: 125,
            alpha: 1.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphIndex {
    adjacency: Vec<Vec<u32>>,
    r_max: usize,
    medoid: u32,
    params: Option<BuildParams>,
}

impl GraphIndex {
    /// Validates the out-degree bound, self-loops, duplicates and id range.
    pub fn from_adjacency(adjacency: Vec<Vec<u32>>, r_max: usize, medoid: u32) -> Result<Self> {
        let n = adjacency.len();
        if n == 0 {
            return Err(Error::InvalidParameter("graph has no vertices".into()));
        }
        if medoid as usize >= n {
            return Err(Error::InvalidId { id: medoid, n });
        }
        for (u, list) in adjacency.iter().enumerate() {
            if list.len() > r_max {
                return Err(Error::InvalidParameter(format!(
                    "vertex {u} has degree {} > R_max {r_max}",
                    list.len()
                )));
            }
            let mut seen = HashSet::with_capacity(list.len());
            for &v in list {
                if v as usize >= n {
                    return Err(Error::InvalidId { id: v, n });
                }
                if v as usize == u {
                    return Err(Error::InvalidParameter(format!("self-loop at {u}")));
                }
                if !seen.insert(v) {
                    return Err(Error::InvalidParameter(format!("duplicate neighbor {v} at {u}")));
                }
            }
        }
        Ok(Self {
            adjacency,
            r_max,
            medoid,
            params: None,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    pub fn medoid(&self) -> u32 {
        self.medoid
    }

    pub fn params(&self) -> Option<BuildParams> {
        self.params
    }

    #[inline]
    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Vertices reachable from `start` by BFS.
    pub fn reachable_from(&self, start: u32) -> usize {
        let mut seen = vec![false; self.n()];
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        let mut count = 0;
        while let Some(u) = queue.pop_front() {
            count += 1;
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    /// In-memory footprint of the adjacency lists.
    pub fn memory_bytes(&self) -> usize {
        self.num_edges() * 4 + self.n() * std::mem::size_of::<Vec<u32>>()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(GRAPH_MAGIC)?;
        w.write_u32::<LittleEndian>(self.n() as u32)?;
        w.write_u32::<LittleEndian>(self.r_max as u32)?;
        w.write_u32::<LittleEndian>(self.medoid)?;
        for list in &self.adjacency {
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for &v in list {
                w.write_u32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        read_magic(r, GRAPH_MAGIC, "graph")?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let r_max = r.read_u32::<LittleEndian>()? as usize;
        let medoid = r.read_u32::<LittleEndian>()?;
        let mut adjacency = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()? as usize;
            if len > r_max {
                return Err(Error::BadHeader {
                    what: "graph",
                    detail: format!("degree {len} > R_max {r_max}"),
                });
            }
            let mut list = vec![0u32; len];
            r.read_u32_into::<LittleEndian>(&mut list)?;
            adjacency.push(list);
        }
        Self::from_adjacency(adjacency, r_max, medoid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

pub fn mean_out_degree(g: &GraphIndex) -> f64 {
    g.num_edges() as f64 / g.n() as f64
}

/// Result of an in-memory best-first search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    /// Expanded vertices in expansion order, with their distance to the query.
    pub visited: Vec<Neighbor>,
    /// Final L-bounded candidate list, ascending.
    pub candidates: Vec<Neighbor>,
    pub hops: usize,
}

/// Best-first search over full-precision distances with an L-bounded
/// candidate list. Stops once every listed candidate has been expanded.
pub fn greedy_search(
    g: &GraphIndex,
    base: &VectorDataset,
    q: &[f32],
    entries: &[u32],
    l: usize,
) -> Result<SearchTrace> {
    if entries.is_empty() {
        return Err(Error::InvalidParameter("empty entry list".into()));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("L must be >= 1".into()));
    }
    if q.len() != base.d() {
        return Err(Error::DimensionMismatch {
            expected: base.d(),
            got: q.len(),
        });
    }
    for &e in entries {
        if e as usize >= g.n() {
            return Err(Error::InvalidId { id: e, n: g.n() });
        }
    }
    let mut list = CandidateList::new(l);
    let mut seen = HashSet::new();
    for &e in entries {
        if seen.insert(e) {
            list.insert(e, base.distance(e as usize, q));
        }
    }
    let mut visited = Vec::new();
    while let Some(pos) = list.first_unexpanded() {
        let cand = list.get_mut(pos);
        cand.expanded = true;
        let (u, du) = (cand.id, cand.dist);
        visited.push(Neighbor::new(u, du));
        for &v in g.neighbors(u) {
            if seen.insert(v) {
                list.insert(v, base.distance(v as usize, q));
            }
        }
    }
    Ok(SearchTrace {
        hops: visited.len(),
        visited,
        candidates: list.items().iter().map(|c| c.neighbor()).collect(),
    })
}

/// α-pruning of `candidates` around `p`: repeatedly keep the closest
/// remaining candidate `c` and drop every `c'` with
/// `alpha * dist(c, c') <= dist(p, c')`. Returns at most `r` ids.
pub fn robust_prune(base: &VectorDataset, p: u32, candidates: &[u32], alpha: f32, r: usize) -> Vec<u32> {
    let q = base.row(p as usize);
    let pool: Vec<Neighbor> = candidates
        .iter()
        .filter(|&&c| c != p)
        .map(|&c| Neighbor::new(c, base.distance(c as usize, q)))
        .collect();
    prune_scored(base, p, pool, alpha, r)
}

fn prune_scored(base: &VectorDataset, p: u32, mut pool: Vec<Neighbor>, alpha: f32, r: usize) -> Vec<u32> {
    pool.retain(|c| c.id != p);
    pool.sort_unstable();
    // Equal ids carry equal distances, so duplicates are adjacent.
    pool.dedup_by_key(|c| c.id);
    let mut out = Vec::with_capacity(r);
    let mut alive = vec![true; pool.len()];
    for i in 0..pool.len() {
        if out.len() >= r {
            break;
        }
        if !alive[i] {
            continue;
        }
        let c = pool[i];
        out.push(c.id);
        let row_c = base.row(c.id as usize);
        for j in i + 1..pool.len() {
            if alive[j] && alpha * base.distance(pool[j].id as usize, row_c) <= pool[j].dist {
                alive[j] = false;
            }
        }
    }
    out
}

fn medoid_of(base: &VectorDataset) -> u32 {
    let centroid: Vec<f32> = base.centroid().into_iter().map(|v| v as f32).collect();
    (0..base.n())
        .map(|i| Neighbor::new(i as u32, base.distance(i, &centroid)))
        .min()
        .map(|nb| nb.id)
        .unwrap()
}

/// Two-pass Vamana construction (α = 1, then the requested α) from a
/// random R-regular start, inserting vertices in ascending id order.
pub fn build_vamana(base: &VectorDataset, r: usize, l_build: usize, alpha: f32, seed: u64) -> Result<GraphIndex> {
    let n = base.n();
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 vectors, got {n}")));
    }
    if r == 0 || l_build == 0 {
        return Err(Error::InvalidParameter("R and L_build must be >= 1".into()));
    }
    if alpha < 1.0 {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be >= 1")));
    }
    let r = if r >= n {
        log::warn!("R = {r} >= n = {n}; clamping out-degree bound to {}", n - 1);
        n - 1
    } else {
        r
    };
    let medoid = medoid_of(base);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            index::sample(&mut rng, n - 1, r)
                .into_iter()
                .map(|j| if j >= i { j as u32 + 1 } else { j as u32 })
                .collect()
        })
        .collect();

    for pass_alpha in [1.0, alpha] {
        for start in (0..n).step_by(BUILD_BATCH) {
            let end = (start + BUILD_BATCH).min(n);
            let snapshot = &adjacency;
            let updates: Vec<Vec<u32>> = (start..end)
                .into_par_iter()
                .map(|p| {
                    let g = GraphView { adjacency: snapshot };
                    let trace = g.search(base, base.row(p), medoid, l_build);
                    let mut pool = trace;
                    let q = base.row(p);
                    pool.extend(
                        snapshot[p]
                            .iter()
                            .map(|&c| Neighbor::new(c, base.distance(c as usize, q))),
                    );
                    prune_scored(base, p as u32, pool, pass_alpha, r)
                })
                .collect();

            let mut incoming: Vec<(u32, u32)> = Vec::new();
            for (p, list) in (start..end).zip(updates) {
                for &j in &list {
                    incoming.push((j, p as u32));
                }
                adjacency[p] = list;
            }
            incoming.sort_unstable();
            let groups: Vec<(u32, Vec<u32>)> = incoming
                .chunk_by(|a, b| a.0 == b.0)
                .map(|g| (g[0].0, g.iter().map(|e| e.1).collect()))
                .collect();
            let snapshot = &adjacency;
            let merged: Vec<(u32, Vec<u32>)> = groups
                .into_par_iter()
                .map(|(j, srcs)| {
                    let mut list = snapshot[j as usize].clone();
                    for s in srcs {
                        if !list.contains(&s) {
                            list.push(s);
                        }
                    }
                    if list.len() > r {
                        list = robust_prune(base, j, &list, pass_alpha, r);
                    }
                    (j, list)
                })
                .collect();
            for (j, list) in merged {
                adjacency[j as usize] = list;
            }
        }
    }

    let mut g = GraphIndex::from_adjacency(adjacency, r, medoid)?;
    g.params = Some(BuildParams {
        r,
        l_build,
        alpha,
        seed,
    });
    Ok(g)
}

/// Borrowed adjacency used during construction; returns the expanded set
/// with distances.
struct GraphView<'a> {
    adjacency: &'a [Vec<u32>],
}

impl GraphView<'_> {
    fn search(&self, base: &VectorDataset, q: &[f32], entry: u32, l: usize) -> Vec<Neighbor> {
        let mut list = CandidateList::new(l);
        let mut seen = HashSet::with_capacity(l * 8);
        seen.insert(entry);
        list.insert(entry, base.distance(entry as usize, q));
        let mut visited = Vec::new();
        while let Some(pos) = list.first_unexpanded() {
            let cand = list.get_mut(pos);
            cand.expanded = true;
            let u = cand.id;
            visited.push(cand.neighbor());
            for &v in &self.adjacency[u as usize] {
                if seen.insert(v) {
                    list.insert(v, base.distance(v as usize, q));
                }
            }
        }
        visited
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{brute_force_knn, recall_at_k, uniform, ElemKind};
    use crate::distance::Metric;

    fn line(points: &[f32]) -> VectorDataset {
        let rows: Vec<Vec<f32>> = points.iter().map(|&p| vec![p]).collect();
        VectorDataset::from_rows(&rows, ElemKind::F32, Metric::L2Squared).unwrap()
    }

    #[test]
    fn single_vertex_graph() {
        let base = line(&[3.0]);
        let g = GraphIndex::from_adjacency(vec![vec![]], 4, 0).unwrap();
        let t = greedy_search(&g, &base, &[0.0], &[0], 5).unwrap();
        assert_eq!(t.hops, 1);
        assert_eq!(t.candidates, vec![Neighbor::new(0, 9.0)]);
    }

    #[test]
    fn complete_graph_finds_exact_nn() {
        let base = uniform(32, 4, 5);
        let adjacency = (0..32u32).map(|u| (0..32u32).filter(|&v| v != u).collect()).collect();
        let g = GraphIndex::from_adjacency(adjacency, 31, 0).unwrap();
        let queries = uniform(10, 4, 6);
        let gt = brute_force_knn(&base, &queries, 1).unwrap();
        for qi in 0..10 {
            let t = greedy_search(&g, &base, queries.row(qi), &[0], 32).unwrap();
            assert_eq!(t.candidates[0].id, gt.ids[qi][0]);
        }
    }

    #[test]
    fn path_walk_is_monotone() {
        // Path 0 - 1 - ... - 9 embedded on a line; query at the far end.
        let base = line(&(0..10).map(|i| i as f32).collect::<Vec<_>>());
        let adjacency = (0..10u32)
            .map(|u| {
                let mut v = Vec::new();
                if u > 0 {
                    v.push(u - 1);
                }
                if u < 9 {
                    v.push(u + 1);
                }
                v
            })
            .collect();
        let g = GraphIndex::from_adjacency(adjacency, 2, 0).unwrap();
        let t = greedy_search(&g, &base, &[9.0], &[0], 1).unwrap();
        let walk: Vec<u32> = t.visited.iter().map(|n| n.id).collect();
        assert_eq!(walk, (0..10).collect::<Vec<_>>());
        assert_eq!(t.candidates[0].id, 9);
    }

    #[test]
    fn disconnected_graph_terminates_with_reachable_only() {
        let base = line(&[0.0, 1.0, 10.0, 11.0]);
        let g = GraphIndex::from_adjacency(vec![vec![1], vec![0], vec![3], vec![2]], 1, 0).unwrap();
        let t = greedy_search(&g, &base, &[10.5], &[0], 4).unwrap();
        let ids: HashSet<u32> = t.candidates.iter().map(|n| n.id).collect();
        assert_eq!(ids, HashSet::from([0, 1]));
        assert!(greedy_search(&g, &base, &[0.0], &[], 4).is_err());
    }

    #[test]
    fn prune_cases() {
        let base = line(&[0.0, 1.0, 2.0, 5.0]);
        assert_eq!(robust_prune(&base, 0, &[3], 1.0, 4), vec![3]);
        // 1 dominates 2: dist(1,2) = 1 <= dist(0,2) = 4.
        assert_eq!(robust_prune(&base, 0, &[1, 2], 1.0, 4), vec![1]);
        assert!(robust_prune(&base, 0, &[], 1.2, 4).is_empty());
        let out = robust_prune(&base, 0, &[1, 2, 3], 1e9, 2);
        assert!(out.len() <= 2);
    }

    #[test]
    fn two_vertices_link_both_ways() {
        let base = line(&[0.0, 1.0]);
        let g = build_vamana(&base, 4, 8, 1.2, 0).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.medoid(), 0);
        assert_eq!(g.r_max(), 1);
        assert!((mean_out_degree(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn star_mean_degree() {
        let n = 7u32;
        let mut adjacency = vec![(1..n).collect::<Vec<_>>()];
        adjacency.extend((1..n).map(|_| vec![0]));
        let g = GraphIndex::from_adjacency(adjacency, 6, 0).unwrap();
        let expect = 2.0 * (n as f64 - 1.0) / n as f64;
        assert!((mean_out_degree(&g) - expect).abs() < 1e-12);
    }

    #[test]
    fn build_quality_and_invariants() {
        let base = uniform(1000, 16, 1);
        let g = build_vamana(&base, 32, 64, 1.2, 9).unwrap();
        assert!(g.adjacency().iter().all(|l| l.len() <= 32));
        assert_eq!(g.reachable_from(g.medoid()), 1000);
        let queries = uniform(100, 16, 2);
        let gt = brute_force_knn(&base, &queries, 10).unwrap();
        let res: Vec<Vec<u32>> = (0..100)
            .map(|qi| {
                greedy_search(&g, &base, queries.row(qi), &[g.medoid()], 64)
                    .unwrap()
                    .candidates
                    .iter()
                    .map(|n| n.id)
                    .collect()
            })
            .collect();
        let recall = recall_at_k(&res, &gt, 10).unwrap();
        assert!(recall >= 0.95, "recall {recall}");
        let again = build_vamana(&base, 32, 64, 1.2, 9).unwrap();
        assert_eq!(g, again);
        let recount: usize = g.adjacency().iter().map(|l| l.len()).sum();
        assert!((mean_out_degree(&g) - recount as f64 / 1000.0).abs() < 1e-12);
    }

    #[test]
    fn graph_file_round_trip() {
        let base = uniform(50, 3, 4);
        let g = build_vamana(&base, 8, 16, 1.2, 1).unwrap();
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        let back = GraphIndex::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.adjacency(), g.adjacency());
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(bytes, again);
    }
}
