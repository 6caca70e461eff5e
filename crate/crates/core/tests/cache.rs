mod common;

use pageann::cache::{bfs_order, build_sssp_cache, cache_lookup};
use pageann::dataset::{ElemKind, VectorDataset};
use pageann::distance::Metric;
use pageann::graph::GraphIndex;
use pageann::layout::DiskIndex;

#[test]
fn budget_extremes() {
    let f = common::fixture(500, 8, 8, 1);
    let dir = tempfile::tempdir().unwrap();
    let disk = common::pack(&f, dir.path(), "idx");
    let entry = f.graph.medoid();
    let empty = build_sssp_cache(&f.graph, &disk, entry, 0).unwrap();
    assert!(empty.is_empty());
    assert!(cache_lookup(&empty, entry).is_none());
    assert_eq!(f.graph.reachable_from(entry), 500);
    let full = build_sssp_cache(&f.graph, &disk, entry, 10_000).unwrap();
    assert_eq!(full.len(), 500);
    assert_eq!(full.ids()[0], entry);
    assert!(build_sssp_cache(&f.graph, &disk, 500, 3).is_err());
}

#[test]
fn cached_records_equal_disk_decode() {
    let f = common::fixture(500, 8, 8, 2);
    let dir = tempfile::tempdir().unwrap();
    let disk = common::pack(&f, dir.path(), "idx");
    let c = build_sssp_cache(&f.graph, &disk, f.graph.medoid(), 50).unwrap();
    assert_eq!(c.len(), 50);
    let oracle = disk.read_all_records().unwrap();
    for &id in c.ids() {
        assert_eq!(cache_lookup(&c, id).unwrap(), &oracle[id as usize]);
    }
    let missing = (0..500u32).find(|i| !c.contains(*i)).unwrap();
    assert!(cache_lookup(&c, missing).is_none());
}

#[test]
fn star_with_budget_three() {
    let leaves = 6u32;
    let mut adj = vec![(1..=leaves).rev().collect::<Vec<_>>()];
    adj.extend((0..leaves).map(|_| vec![0]));
    let g = GraphIndex::from_adjacency(adj, leaves as usize, 0).unwrap();
    let rows: Vec<Vec<f32>> = (0..=leaves).map(|i| vec![i as f32; 4]).collect();
    let base = VectorDataset::from_rows(&rows, ElemKind::F32, Metric::L2Squared).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let disk = DiskIndex::pack(&base, &g, 4096, None, &dir.path().join("star")).unwrap();
    let c = build_sssp_cache(&g, &disk, 0, 3).unwrap();
    let mut ids = c.ids().to_vec();
    ids.sort();
    assert_eq!(ids, vec![0, 1, 2]);
}

#[test]
fn larger_budgets_extend_the_prefix() {
    let f = common::fixture(400, 8, 8, 4);
    let small = bfs_order(&f.graph, f.graph.medoid(), 20).unwrap();
    let large = bfs_order(&f.graph, f.graph.medoid(), 120).unwrap();
    assert_eq!(&large[..20], &small[..]);
}
