mod common;

use pageann::dataset::{uniform, VectorDataset};
use pageann::distance::Neighbor;
use pageann::graph::greedy_search;
use pageann::memgraph::{build_memgraph, select_entries, select_entries_scored, MemGraph};

fn medoid_of(ds: &VectorDataset) -> usize {
    let c: Vec<f32> = ds.centroid().iter().map(|&v| v as f32).collect();
    (0..ds.n())
        .map(|i| Neighbor::new(i as u32, ds.distance(i, &c)))
        .min()
        .unwrap()
        .id as usize
}

#[test]
fn full_ratio_covers_the_dataset() {
    let base = uniform(300, 6, 1);
    let mg = build_memgraph(&base, 1.0, 8, 16, 0).unwrap();
    assert_eq!(mg.len(), 300);
    assert_eq!(mg.ids(), (0..300).collect::<Vec<u32>>().as_slice());
    assert!(build_memgraph(&base, 0.0, 8, 16, 0).is_err());
    assert!(build_memgraph(&base, 1.01, 8, 16, 0).is_err());
}

#[test]
fn sample_size_and_id_invariants() {
    let base = uniform(100_000, 2, 9);
    let mg = build_memgraph(&base, 0.001, 8, 16, 4).unwrap();
    assert_eq!(mg.len(), 100);
    assert!(mg.ids().windows(2).all(|w| w[0] < w[1]));
    assert!(mg.ids().iter().all(|&i| (i as usize) < base.n()));
    for (s, &id) in mg.ids().iter().enumerate() {
        assert_eq!(mg.vectors().row(s), base.row(id as usize));
    }
}

#[test]
fn entries_beat_the_medoid() {
    let base = uniform(10_000, 8, 2);
    let queries = uniform(100, 8, 3);
    let mg = build_memgraph(&base, 0.01, 16, 32, 5).unwrap();
    let medoid = medoid_of(&base);
    let sample_medoid = mg.medoid_base_id() as usize;
    let (mut sum_e, mut sum_m) = (0.0f64, 0.0f64);
    let mut at_most_sample_medoid = 0;
    for i in 0..queries.n() {
        let q = queries.row(i);
        let e = select_entries(&mg, q, 10, 1).unwrap()[0] as usize;
        sum_e += base.distance(e, q) as f64;
        sum_m += base.distance(medoid, q) as f64;
        if base.distance(e, q) <= base.distance(sample_medoid, q) {
            at_most_sample_medoid += 1;
        }
    }
    assert!(sum_e < sum_m, "entry {sum_e} vs medoid {sum_m}");
    assert!(at_most_sample_medoid >= 90, "{at_most_sample_medoid}");
}

#[test]
fn sampled_query_maps_to_its_own_id() {
    let base = uniform(2000, 8, 6);
    let mg = build_memgraph(&base, 0.05, 16, 32, 1).unwrap();
    let mut hits = 0;
    for &id in mg.ids().iter().take(30) {
        if select_entries(&mg, base.row(id as usize), 10, 1).unwrap() == vec![id] {
            hits += 1;
        }
    }
    assert_eq!(hits, 30);
}

#[test]
fn full_ratio_matches_in_memory_search() {
    let base = uniform(800, 6, 7);
    let queries = uniform(20, 6, 8);
    let mg = build_memgraph(&base, 1.0, 12, 24, 2).unwrap();
    for i in 0..queries.n() {
        let q = queries.row(i);
        let trace = greedy_search(mg.graph(), mg.vectors(), q, &[mg.graph().medoid()], 10).unwrap();
        let got = select_entries_scored(&mg, q, 10, 1).unwrap();
        assert_eq!(got[0].id, mg.ids()[trace.candidates[0].id as usize]);
        assert_eq!(got[0].dist, trace.candidates[0].dist);
    }
}

#[test]
fn file_round_trip_is_byte_exact() {
    let base = uniform(500, 5, 11);
    let mg = build_memgraph(&base, 0.1, 8, 16, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.mg");
    let b = dir.path().join("b.mg");
    mg.save(&a).unwrap();
    let back = MemGraph::load(&a).unwrap();
    assert_eq!(back.ids(), mg.ids());
    assert_eq!(back.vectors(), mg.vectors());
    assert_eq!(back.graph().adjacency(), mg.graph().adjacency());
    assert_eq!(back.graph().medoid(), mg.graph().medoid());
    back.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let mut bytes = std::fs::read(&a).unwrap();
    bytes[0] = b'X';
    std::fs::write(&a, bytes).unwrap();
    assert!(MemGraph::load(&a).is_err());
}
