#![allow(dead_code)]

use std::path::Path;

use pageann::dataset::{subspace_mixture, VectorDataset};
use pageann::graph::{build_vamana, GraphIndex};
use pageann::io::PageReader;
use pageann::layout::DiskIndex;
use pageann::pq::{train_codebook, training_sample, PqCodebook, PqCodes};
use pageann::search::Engine;

pub struct Fixture {
    pub base: VectorDataset,
    pub queries: VectorDataset,
    pub graph: GraphIndex,
    pub codebook: PqCodebook,
    pub codes: PqCodes,
}

pub fn fixture(n: usize, d: usize, r: usize, seed: u64) -> Fixture {
    let base = subspace_mixture(n, d, d.min(8), 16, 0.1, seed, 1);
    let queries = subspace_mixture(100, d, d.min(8), 16, 0.1, seed, 2);
    let graph = build_vamana(&base, r, 2 * r, 1.2, seed).unwrap();
    let m = (d / 2).max(1);
    let codebook = train_codebook(&training_sample(&base, 64, seed).unwrap(), m, 64, 8, seed).unwrap();
    let codes = codebook.encode_all(&base).unwrap();
    Fixture {
        base,
        queries,
        graph,
        codebook,
        codes,
    }
}

/// Buffered reader: tests do not depend on the filesystem honoring direct I/O.
pub fn engine(disk: DiskIndex) -> Engine {
    let reader = PageReader::open(disk.path(), disk.meta(), false).unwrap();
    Engine::new(disk, reader, 4).unwrap()
}

pub fn pack(f: &Fixture, dir: &Path, name: &str) -> DiskIndex {
    DiskIndex::pack(&f.base, &f.graph, 4096, None, &dir.join(name)).unwrap()
}
