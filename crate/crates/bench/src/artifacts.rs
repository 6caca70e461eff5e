//! Build steps and their on-disk artifacts, plus engine assembly.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pageann::cache::build_sssp_cache;
use pageann::dataset::{brute_force_knn, load_vectors, write_ivecs, GroundTruth, VectorDataset};
use pageann::graph::{build_vamana, GraphIndex};
use pageann::io::PageReader;
use pageann::layout::{map_path, overlap_ratio_graph, record_size, shuffle_pages_traced, DiskIndex};
use pageann::memgraph::{build_memgraph, MemGraph};
use pageann::pq::{train_codebook, training_sample, PqCodebook, PqCodes};
use pageann::search::Engine;
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::registry::Toggles;

/// Ground-truth depth persisted by `gt`.
pub const GT_K: usize = 100;

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn graph(&self) -> PathBuf {
        self.dir.join("graph.ovg")
    }

    pub fn index(&self) -> PathBuf {
        self.dir.join("index.odi")
    }

    pub fn shuffled_index(&self) -> PathBuf {
        self.dir.join("index_shuffled.odi")
    }

    pub fn codebook(&self) -> PathBuf {
        self.dir.join("pq.opq")
    }

    pub fn codes(&self) -> PathBuf {
        self.dir.join("pq.opc")
    }

    pub fn memgraph(&self) -> PathBuf {
        self.dir.join("memgraph.omg")
    }

    pub fn cache_ids(&self) -> PathBuf {
        self.dir.join("cache.ivecs")
    }

    pub fn gt_ids(&self) -> PathBuf {
        self.dir.join("gt.ivecs")
    }

    pub fn gt_dists(&self) -> PathBuf {
        self.dir.join("gt.fvecs")
    }

    pub fn build_report(&self) -> PathBuf {
        self.dir.join("build_report.csv")
    }

    pub fn runs(&self) -> PathBuf {
        self.dir.join("runs")
    }
}

/// One build-report row: wall time (BT), artifact bytes on disk (Disk),
/// query-time memory structures (Mem) and the peak working-set estimate
/// of the build structures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildRow {
    pub step: String,
    pub bt_secs: f64,
    pub disk_bytes: u64,
    pub mem_bytes: u64,
    pub peak_bytes: u64,
    pub detail: String,
}

fn file_len(p: &Path) -> u64 {
    std::fs::metadata(p).map_or(0, |m| m.len())
}

fn require(p: &Path, step: &str) -> Result<()> {
    if !p.exists() {
        bail!("missing prerequisite {} (run `{step}` first)", p.display());
    }
    Ok(())
}

fn append_row(arts: &Artifacts, row: &BuildRow) -> Result<()> {
    let path = arts.build_report();
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(&path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row)?;
    w.flush()?;
    log::info!(
        "{}: BT {:.2} s, Disk {} B, Mem {} B, peak {} B {}",
        row.step,
        row.bt_secs,
        row.disk_bytes,
        row.mem_bytes,
        row.peak_bytes,
        row.detail
    );
    Ok(())
}

pub fn read_build_report(path: &Path) -> Result<Vec<BuildRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn load_base(cfg: &BenchConfig) -> Result<VectorDataset> {
    let path = cfg.data.base.as_ref().context("no base data set (--data)")?;
    load_vectors(path, cfg.base_format()?).with_context(|| format!("loading {}", path.display()))
}

pub fn load_queries(cfg: &BenchConfig) -> Result<VectorDataset> {
    let path = cfg.data.queries.as_ref().context("no query set (--queries)")?;
    let format = match &cfg.data.format {
        Some(f) => f.parse()?,
        None => pageann::dataset::VecFormat::from_path(path)?,
    };
    load_vectors(path, format).with_context(|| format!("loading {}", path.display()))
}

fn prepare(cfg: &BenchConfig) -> Result<Artifacts> {
    let arts = Artifacts::new(&cfg.run.out);
    std::fs::create_dir_all(&arts.dir)?;
    Ok(arts)
}

/// Vamana graph plus the identity-layout disk index.
pub fn cmd_build(cfg: &BenchConfig) -> Result<BuildRow> {
    let arts = prepare(cfg)?;
    let base = load_base(cfg)?;
    let b = &cfg.build;
    let t = Instant::now();
    let g = build_vamana(&base, b.r, b.l_build, b.alpha, b.seed)?;
    g.save(&arts.graph())?;
    let disk = DiskIndex::pack(&base, &g, b.page_size, None, &arts.index())?;
    let row = BuildRow {
        step: "build".into(),
        bt_secs: t.elapsed().as_secs_f64(),
        disk_bytes: file_len(&arts.graph()) + disk.disk_bytes(),
        mem_bytes: 0,
        peak_bytes: (base.as_slice().len() * 4 + g.memory_bytes()) as u64,
        detail: format!(
            "n={} d={} R={} L={} alpha={} n_p={} OR={:.6}",
            base.n(),
            base.d(),
            b.r,
            b.l_build,
            b.alpha,
            disk.meta().per_page,
            overlap_ratio_graph(disk.layout(), &g)
        ),
    };
    append_row(&arts, &row)?;
    Ok(row)
}

pub fn cmd_pq(cfg: &BenchConfig) -> Result<BuildRow> {
    let arts = prepare(cfg)?;
    let base = load_base(cfg)?;
    let p = &cfg.pq;
    let seed = cfg.build.seed;
    let t = Instant::now();
    let sample = training_sample(&base, p.k_c, seed)?;
    let cb = train_codebook(&sample, p.m, p.k_c, p.iters, seed)?;
    let codes = cb.encode_all(&base)?;
    cb.save(&arts.codebook())?;
    codes.save(&arts.codes())?;
    let mem = (cb.memory_bytes() + codes.memory_bytes()) as u64;
    let row = BuildRow {
        step: "pq".into(),
        bt_secs: t.elapsed().as_secs_f64(),
        disk_bytes: file_len(&arts.codebook()) + file_len(&arts.codes()),
        mem_bytes: mem,
        peak_bytes: sample.as_slice().len() as u64 * 4 + mem,
        detail: format!("m={} k_c={} sample={}", p.m, p.k_c, sample.n()),
    };
    append_row(&arts, &row)?;
    Ok(row)
}

/// Reorders records for neighbour co-residency and packs the shuffled index.
pub fn cmd_shuffle(cfg: &BenchConfig) -> Result<BuildRow> {
    let arts = prepare(cfg)?;
    require(&arts.graph(), "build")?;
    let base = load_base(cfg)?;
    let g = GraphIndex::load(&arts.graph())?;
    let t = Instant::now();
    let rec = record_size(base.d(), base.elem(), g.r_max());
    let rep = shuffle_pages_traced(&g, cfg.build.page_size, rec, cfg.build.shuffle_passes, cfg.build.seed)?;
    let disk = DiskIndex::pack(
        &base,
        &g,
        cfg.build.page_size,
        Some(&rep.layout),
        &arts.shuffled_index(),
    )?;
    let identity = rep.objective[0];
    let row = BuildRow {
        step: "shuffle".into(),
        bt_secs: t.elapsed().as_secs_f64(),
        disk_bytes: disk.disk_bytes() + file_len(&map_path(&arts.shuffled_index())),
        mem_bytes: rep.layout.memory_bytes() as u64,
        peak_bytes: rep.working_bytes as u64,
        detail: format!(
            "n_p={} degenerate={} colocated identity={} shuffled={} OR={:.6}",
            rep.layout.per_page(),
            rep.degenerate,
            identity,
            rep.objective.last().copied().unwrap_or(identity),
            overlap_ratio_graph(&rep.layout, &g)
        ),
    };
    append_row(&arts, &row)?;
    Ok(row)
}

pub fn cmd_memgraph(cfg: &BenchConfig) -> Result<BuildRow> {
    let arts = prepare(cfg)?;
    let base = load_base(cfg)?;
    let m = &cfg.memgraph;
    let t = Instant::now();
    let mg = build_memgraph(&base, m.ratio, m.r, m.l, cfg.build.seed)?;
    mg.save(&arts.memgraph())?;
    let row = BuildRow {
        step: "memgraph".into(),
        bt_secs: t.elapsed().as_secs_f64(),
        disk_bytes: file_len(&arts.memgraph()),
        mem_bytes: mg.memory_bytes() as u64,
        peak_bytes: mg.memory_bytes() as u64,
        detail: format!("ratio={} samples={} R={} L={}", m.ratio, mg.len(), m.r, m.l),
    };
    append_row(&arts, &row)?;
    Ok(row)
}

/// The cache is rebuilt at engine start; the id list is written for
/// inspection only.
pub fn cmd_cache(cfg: &BenchConfig) -> Result<BuildRow> {
    let arts = prepare(cfg)?;
    require(&arts.graph(), "build")?;
    require(&arts.index(), "build")?;
    let g = GraphIndex::load(&arts.graph())?;
    let disk = DiskIndex::open(&arts.index())?;
    let budget = cfg.cache_budget(g.n());
    let t = Instant::now();
    let cache = build_sssp_cache(&g, &disk, g.medoid(), budget)?;
    write_ivecs(&arts.cache_ids(), &[cache.ids().iter().map(|&i| i as i32).collect()])?;
    let row = BuildRow {
        step: "cache".into(),
        bt_secs: t.elapsed().as_secs_f64(),
        disk_bytes: file_len(&arts.cache_ids()),
        mem_bytes: cache.memory_bytes() as u64,
        peak_bytes: cache.memory_bytes() as u64,
        detail: format!("budget={budget} cached={}", cache.len()),
    };
    append_row(&arts, &row)?;
    Ok(row)
}

pub fn cmd_gt(cfg: &BenchConfig) -> Result<GroundTruth> {
    let arts = prepare(cfg)?;
    let base = load_base(cfg)?;
    let queries = load_queries(cfg)?;
    let gt = brute_force_knn(&base, &queries, GT_K.max(cfg.search.k).min(base.n()))?;
    gt.save(&arts.gt_ids(), &arts.gt_dists())?;
    Ok(gt)
}

/// Ground truth from `data.gt`, else the output directory, computing it
/// when absent.
pub fn load_truth(cfg: &BenchConfig) -> Result<GroundTruth> {
    let arts = Artifacts::new(&cfg.run.out);
    if let Some(p) = &cfg.data.gt {
        return Ok(GroundTruth::load_ids(p)?);
    }
    if arts.gt_ids().exists() {
        return Ok(GroundTruth::load_ids(&arts.gt_ids())?);
    }
    log::info!("no ground truth found, computing it");
    cmd_gt(cfg)
}

/// Opens the identity or shuffled index and attaches what `needs` asks for.
pub fn open_engine(cfg: &BenchConfig, shuffled: bool, needs: Toggles) -> Result<Engine> {
    let arts = Artifacts::new(&cfg.run.out);
    let path = if shuffled { arts.shuffled_index() } else { arts.index() };
    require(&path, if shuffled { "shuffle" } else { "build" })?;
    let disk = DiskIndex::open(&path)?;
    let reader = if cfg.run.direct_io {
        PageReader::open_with_fallback(disk.path(), disk.meta())?
    } else {
        log::warn!("direct I/O disabled: reads go through the page cache and I/O timings are not representative");
        PageReader::open(disk.path(), disk.meta(), false)?
    };
    let mut engine = Engine::new(disk, reader, cfg.run.io_threads)?;
    if needs.pq {
        require(&arts.codebook(), "pq")?;
        engine = engine.with_pq(PqCodebook::load(&arts.codebook())?, PqCodes::load(&arts.codes())?)?;
    }
    if needs.memgraph {
        require(&arts.memgraph(), "memgraph")?;
        engine = engine.with_memgraph(MemGraph::load(&arts.memgraph())?)?;
    }
    if needs.cache {
        require(&arts.graph(), "build")?;
        let g = GraphIndex::load(&arts.graph())?;
        let cache = build_sssp_cache(&g, engine.disk(), g.medoid(), cfg.cache_budget(g.n()))?;
        engine.set_cache(Some(cache));
    }
    Ok(engine)
}
