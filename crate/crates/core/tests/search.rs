mod common;

use pageann::cache::build_sssp_cache;
use pageann::dataset::{brute_force_knn, recall_at_k, ElemKind, VectorDataset};
use pageann::distance::{Metric, Neighbor};
use pageann::graph::{greedy_search, GraphIndex};
use pageann::layout::{shuffle_pages, DiskIndex};
use pageann::memgraph::build_memgraph;
use pageann::search::{io_utilization, recount_events, Engine, SearchConfig, SearchStats};
use pageann::Error;

fn run(eng: &Engine, qs: &VectorDataset, cfg: &SearchConfig) -> (Vec<Vec<u32>>, Vec<SearchStats>) {
    (0..qs.n())
        .map(|i| {
            let out = eng.search(qs.row(i), cfg).unwrap();
            (out.ids(), out.stats)
        })
        .unzip()
}

fn check_accounting(s: &SearchStats) {
    assert_eq!(s.n_read, s.n_eff + s.n_rbu);
    assert!(s.pages_read <= s.n_read);
}

#[test]
fn single_record_index() {
    let base = VectorDataset::from_rows(&[vec![1.0, 2.0, 3.0]], ElemKind::F32, Metric::L2Squared).unwrap();
    let g = GraphIndex::from_adjacency(vec![vec![]], 4, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let disk = DiskIndex::pack(&base, &g, 4096, None, &dir.path().join("one")).unwrap();
    let cache = build_sssp_cache(&g, &disk, 0, 1).unwrap();
    let eng = common::engine(disk).with_cache(cache);
    let cfg = SearchConfig {
        k: 1,
        use_pq: false,
        ..Default::default()
    };
    for use_cache in [false, true] {
        let out = eng
            .search(&[0.0, 0.0, 0.0], &SearchConfig { use_cache, ..cfg })
            .unwrap();
        assert_eq!(out.neighbors, vec![Neighbor::new(0, 14.0)]);
        assert_eq!(out.stats.hops, 1);
        assert_eq!(out.stats.pages_read, u64::from(!use_cache));
    }
}

#[test]
fn recall_on_two_thousand_vectors() {
    let f = common::fixture(2000, 16, 16, 7);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"))
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let truth = brute_force_knn(&f.base, &f.queries, 10).unwrap();
    let cfg = SearchConfig {
        l: 100,
        beam: 8,
        ..Default::default()
    };
    let (ids, stats) = run(&eng, &f.queries, &cfg);
    let recall = recall_at_k(&ids, &truth, 10).unwrap();
    assert!(recall >= 0.95, "recall {recall}");
    stats.iter().for_each(check_accounting);
}

#[test]
fn full_precision_mode_equals_in_memory_search() {
    let f = common::fixture(1500, 8, 12, 8);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"));
    for l in [10, 40] {
        let cfg = SearchConfig {
            l,
            beam: 1,
            use_pq: false,
            ..Default::default()
        };
        for i in 0..f.queries.n() {
            let q = f.queries.row(i);
            let disk = eng.search(q, &cfg).unwrap();
            let mem = greedy_search(&f.graph, &f.base, q, &[f.graph.medoid()], l).unwrap();
            let want: Vec<Neighbor> = mem.candidates.iter().take(10).copied().collect();
            assert_eq!(disk.neighbors, want, "query {i}, L = {l}");
            assert_eq!(disk.stats.hops as usize, mem.hops);
            check_accounting(&disk.stats);
        }
    }
}

#[test]
fn missing_artifacts_are_configuration_errors() {
    let f = common::fixture(300, 8, 8, 9);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"));
    let q = f.queries.row(0);
    let base = SearchConfig {
        use_pq: false,
        ..Default::default()
    };
    for cfg in [
        SearchConfig::default(),
        SearchConfig {
            use_memgraph: true,
            ..base
        },
        SearchConfig {
            use_cache: true,
            ..base
        },
        SearchConfig {
            use_shuffled_layout: true,
            ..base
        },
        SearchConfig { pipeline: true, ..base },
    ] {
        assert!(matches!(eng.search(q, &cfg), Err(Error::Config(_))), "{cfg:?}");
    }
    assert!(matches!(
        eng.search(&q[..4], &base),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn pipeline_depth_one_equals_sequential() {
    let f = common::fixture(3000, 16, 16, 10);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"))
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    for l in [10, 50] {
        let seq = SearchConfig {
            l,
            beam: 1,
            ..Default::default()
        };
        let pipe = SearchConfig {
            pipeline: true,
            pipeline_depth: 1,
            ..seq
        };
        let (a, sa) = run(&eng, &f.queries, &seq);
        let (b, sb) = run(&eng, &f.queries, &pipe);
        assert_eq!(a, b);
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.pages_read, y.pages_read);
            assert_eq!(x.n_eff, y.n_eff);
            check_accounting(y);
        }
    }
}

#[test]
fn deep_pipeline_drains_and_balances() {
    let f = common::fixture(3000, 16, 16, 11);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"))
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let cfg = SearchConfig {
        l: 20,
        pipeline: true,
        pipeline_depth: 8,
        record_events: true,
        ..Default::default()
    };
    let (_, stats) = run(&eng, &f.queries, &cfg);
    for s in &stats {
        check_accounting(s);
        assert_eq!(recount_events(&s.events), (s.n_read, s.n_eff, s.n_rbu));
    }
    assert_eq!(
        eng.reader().io_stats().pages,
        stats.iter().map(|s| s.pages_read).sum::<u64>()
    );
}

#[test]
fn utilization_recounts_from_the_event_log() {
    let f = common::fixture(2000, 16, 16, 12);
    let dir = tempfile::tempdir().unwrap();
    let layout = shuffle_pages(
        &f.graph,
        4096,
        pageann::layout::record_size(16, ElemKind::F32, 16),
        1,
        0,
    )
    .unwrap();
    let disk = DiskIndex::pack(&f.base, &f.graph, 4096, Some(&layout), &dir.path().join("s")).unwrap();
    let eng = common::engine(disk)
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let cfg = SearchConfig {
        l: 20,
        use_shuffled_layout: true,
        page_search: true,
        record_events: true,
        ..Default::default()
    };
    let (_, stats) = run(&eng, &f.queries, &cfg);
    let mut any_rbu = false;
    for s in &stats {
        check_accounting(s);
        let (r, e, u) = recount_events(&s.events);
        assert_eq!((r, e, u), (s.n_read, s.n_eff, s.n_rbu));
        assert_eq!(io_utilization(s).unwrap(), e as f64 / r as f64);
        assert!(s.full_distances <= s.pages_read * eng.disk().meta().per_page as u64 + s.n_read);
        any_rbu |= s.n_rbu > 0;
    }
    assert!(any_rbu);
}

#[test]
fn determinism_without_pipeline() {
    let f = common::fixture(2000, 16, 16, 13);
    let dir = tempfile::tempdir().unwrap();
    let mg = build_memgraph(&f.base, 0.02, 8, 16, 1).unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"))
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap()
        .with_memgraph(mg)
        .unwrap();
    let cfg = SearchConfig {
        l: 30,
        use_memgraph: true,
        dynamic_width: true,
        page_search: true,
        ..Default::default()
    };
    let (a, mut sa) = run(&eng, &f.queries, &cfg);
    let (b, mut sb) = run(&eng, &f.queries, &cfg);
    assert_eq!(a, b);
    sa.iter_mut().chain(sb.iter_mut()).for_each(|s| s.latency_us = 0);
    assert_eq!(sa, sb);
}

#[test]
fn cache_changes_io_but_not_results() {
    let f = common::fixture(3000, 16, 16, 14);
    let dir = tempfile::tempdir().unwrap();
    let disk = common::pack(&f, dir.path(), "idx");
    let mut eng = common::engine(disk)
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let cfg = SearchConfig {
        l: 40,
        ..Default::default()
    };
    let plain: Vec<_> = (0..f.queries.n())
        .map(|i| eng.search(f.queries.row(i), &cfg).unwrap())
        .collect();
    let mut last_rate = -1.0;
    for budget in [0, 3, 30, 300] {
        let cache = build_sssp_cache(&f.graph, eng.disk(), f.graph.medoid(), budget).unwrap();
        eng.set_cache(Some(cache));
        let with = SearchConfig { use_cache: true, ..cfg };
        let (mut hits, mut lookups, mut pages) = (0, 0, 0);
        for (i, p) in plain.iter().enumerate() {
            let out = eng.search(f.queries.row(i), &with).unwrap();
            assert_eq!(out.neighbors, p.neighbors);
            assert!(out.stats.pages_read <= p.stats.pages_read);
            hits += out.stats.cache_hits;
            lookups += out.stats.cache_lookups;
            pages += out.stats.pages_read;
            check_accounting(&out.stats);
        }
        let rate = hits as f64 / lookups as f64;
        assert!(rate >= last_rate, "budget {budget}: {rate} < {last_rate}");
        if budget == 0 {
            assert_eq!(pages, plain.iter().map(|p| p.stats.pages_read).sum::<u64>());
        }
        last_rate = rate;
    }
    assert!(last_rate > 0.0);
}

#[test]
fn recall_grows_with_list_size() {
    let f = common::fixture(3000, 16, 16, 15);
    let dir = tempfile::tempdir().unwrap();
    let eng = common::engine(common::pack(&f, dir.path(), "idx"))
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let truth = brute_force_knn(&f.base, &f.queries, 10).unwrap();
    let mut prev = 0.0;
    for l in [10, 20, 50, 100] {
        let (ids, _) = run(
            &eng,
            &f.queries,
            &SearchConfig {
                l,
                ..Default::default()
            },
        );
        let r = recall_at_k(&ids, &truth, 10).unwrap();
        assert!(r >= prev, "L = {l}: {r} < {prev}");
        prev = r;
    }
}

#[test]
fn page_search_finds_an_unlinked_co_resident() {
    // d = 400 floats and R = 4 give 1620-byte records, two per 4 KiB page.
    let d = 400;
    let mut rows = vec![vec![5.0f32; d], vec![0.1f32; d], vec![9.0f32; d], vec![9.5f32; d]];
    rows[0][0] = 4.0;
    let base = VectorDataset::from_rows(&rows, ElemKind::F32, Metric::L2Squared).unwrap();
    // Record 1 (the nearest to the origin) has no in-edges.
    let g = GraphIndex::from_adjacency(vec![vec![2], vec![0], vec![3], vec![2]], 4, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let disk = DiskIndex::pack(&base, &g, 4096, None, &dir.path().join("pair")).unwrap();
    assert_eq!(disk.meta().per_page, 2);
    let eng = common::engine(disk);
    let q = vec![0.0f32; d];
    let cfg = SearchConfig {
        k: 1,
        l: 4,
        use_pq: false,
        ..Default::default()
    };
    assert_ne!(eng.search(&q, &cfg).unwrap().ids(), vec![1]);
    let out = eng
        .search(
            &q,
            &SearchConfig {
                page_search: true,
                ..cfg
            },
        )
        .unwrap();
    assert_eq!(out.ids(), vec![1]);
    assert!(out.stats.full_distances <= out.stats.pages_read * 2);
    check_accounting(&out.stats);
}

#[test]
fn page_search_is_inert_with_one_record_per_page() {
    let f = common::fixture(300, 960, 64, 16);
    let dir = tempfile::tempdir().unwrap();
    let disk = DiskIndex::pack(&f.base, &f.graph, 8192, None, &dir.path().join("wide")).unwrap();
    assert_eq!(disk.meta().per_page, 1);
    let eng = common::engine(disk)
        .with_pq(f.codebook.clone(), f.codes.clone())
        .unwrap();
    let cfg = SearchConfig {
        l: 20,
        ..Default::default()
    };
    for i in 0..20 {
        let q = f.queries.row(i);
        let a = eng.search(q, &cfg).unwrap();
        let mut b = eng
            .search(
                q,
                &SearchConfig {
                    page_search: true,
                    ..cfg
                },
            )
            .unwrap();
        let mut sa = a.stats.clone();
        sa.latency_us = 0;
        b.stats.latency_us = 0;
        assert_eq!(a.neighbors, b.neighbors);
        assert_eq!(sa, b.stats);
    }
}
