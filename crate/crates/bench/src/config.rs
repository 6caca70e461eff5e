//! Benchmark configuration: a TOML file with `[section]` headers, every key
//! overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pageann::dataset::VecFormat;
use pageann::search::{DynamicWidth, SearchConfig};
use serde::{Deserialize, Serialize};

use crate::registry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: DataSection,
    pub build: BuildSection,
    pub pq: PqSection,
    pub memgraph: MemGraphSection,
    pub cache: CacheSection,
    pub search: SearchSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub base: Option<PathBuf>,
    /// Format tag; guessed from the extension when absent.
    pub format: Option<String>,
    pub queries: Option<PathBuf>,
    /// Ground-truth ids (ivecs); defaults to `gt.ivecs` in the output directory.
    pub gt: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub r: usize,
    pub l_build: usize,
    pub alpha: f32,
    pub seed: u64,
    pub page_size: usize,
    pub shuffle_passes: usize,
}

impl Default for BuildSection {
    fn default() -> Self {
        Self {
            r: 64,
            l_build: 125,
            alpha: 1.2,
            seed: 0,
            page_size: 4096,
            shuffle_passes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PqSection {
    pub m: usize,
    pub k_c: usize,
    pub iters: usize,
}

impl Default for PqSection {
    fn default() -> Self {
        Self {
            m: 16,
            k_c: 256,
            iters: pageann::pq::DEFAULT_KMEANS_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemGraphSection {
    pub ratio: f64,
    pub r: usize,
    pub l: usize,
    pub l_mem: usize,
    pub fanout: usize,
}

impl Default for MemGraphSection {
    fn default() -> Self {
        Self {
            ratio: 0.001,
            r: 48,
            l: 128,
            l_mem: pageann::memgraph::DEFAULT_L_MEM,
            fanout: pageann::memgraph::DEFAULT_FANOUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    /// Cached records; `ceil(0.001 * n)` when absent.
    pub budget: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub k: usize,
    pub l: Vec<usize>,
    pub beam: usize,
    pub configs: Vec<String>,
    pub pipeline_depth: usize,
    pub dw_min: usize,
    pub dw_max: usize,
    pub dw_warmup: usize,
    pub dw_patience: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let dw = DynamicWidth::default();
        Self {
            k: 10,
            l: vec![10, 20, 50, 100],
            beam: 8,
            configs: vec!["Baseline".into()],
            pipeline_depth: 8,
            dw_min: dw.min,
            dw_max: dw.max,
            dw_warmup: dw.warmup,
            dw_patience: dw.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub threads: usize,
    pub reps: usize,
    pub direct_io: bool,
    pub io_threads: usize,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            threads: 1,
            reps: 1,
            direct_io: true,
            io_threads: pageann::search::DEFAULT_IO_THREADS,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub format: Option<String>,
    pub queries: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub r: Option<usize>,
    pub l_build: Option<usize>,
    pub alpha: Option<f32>,
    pub page_size: Option<usize>,
    pub pq_m: Option<usize>,
    pub pq_k: Option<usize>,
    pub mem_ratio: Option<f64>,
    pub cache_budget: Option<usize>,
    pub l: Option<Vec<usize>>,
    pub beam: Option<usize>,
    pub config_names: Option<Vec<String>>,
    pub threads: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub direct_io: Option<bool>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.data.is_some() {
            self.data.base = o.data;
        }
        if o.format.is_some() {
            self.data.format = o.format;
        }
        if o.queries.is_some() {
            self.data.queries = o.queries;
        }
        if o.gt.is_some() {
            self.data.gt = o.gt;
        }
        set(&mut self.build.r, o.r);
        set(&mut self.build.l_build, o.l_build);
        set(&mut self.build.alpha, o.alpha);
        set(&mut self.build.page_size, o.page_size);
        set(&mut self.build.seed, o.seed);
        set(&mut self.pq.m, o.pq_m);
        set(&mut self.pq.k_c, o.pq_k);
        set(&mut self.memgraph.ratio, o.mem_ratio);
        if o.cache_budget.is_some() {
            self.cache.budget = o.cache_budget;
        }
        set(&mut self.search.l, o.l);
        set(&mut self.search.beam, o.beam);
        set(&mut self.search.configs, o.config_names);
        set(&mut self.run.threads, o.threads);
        set(&mut self.run.reps, o.reps);
        set(&mut self.run.out, o.out);
        set(&mut self.run.direct_io, o.direct_io);
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.reps == 0 {
            bail!("reps must be >= 1");
        }
        if self.run.threads == 0 {
            bail!("threads must be >= 1");
        }
        if self.search.l.is_empty() {
            bail!("the L sweep is empty");
        }
        if let Some(&l) = self.search.l.iter().find(|&&l| l < self.search.k) {
            bail!("L = {l} is smaller than k = {}", self.search.k);
        }
        for name in &self.search.configs {
            if registry::lookup(name).is_none() {
                bail!(
                    "unknown configuration {name:?}; known: {}",
                    registry::names().collect::<Vec<_>>().join(", ")
                );
            }
        }
        if let Some(f) = &self.data.format {
            f.parse::<VecFormat>()?;
        }
        Ok(())
    }

    pub fn base_format(&self) -> Result<VecFormat> {
        match (&self.data.format, &self.data.base) {
            (Some(f), _) => Ok(f.parse()?),
            (None, Some(p)) => Ok(VecFormat::from_path(p)?),
            (None, None) => bail!("no base data set (--data)"),
        }
    }

    pub fn dynamic_width(&self) -> DynamicWidth {
        DynamicWidth {
            min: self.search.dw_min,
            max: self.search.dw_max,
            warmup: self.search.dw_warmup,
            patience: self.search.dw_patience,
        }
    }

    /// Search settings shared by every named configuration at list size `l`.
    pub fn search_config(&self, l: usize) -> SearchConfig {
        SearchConfig {
            k: self.search.k,
            l,
            beam: self.search.beam,
            dw: self.dynamic_width(),
            pipeline_depth: self.search.pipeline_depth,
            mem_l: self.memgraph.l_mem,
            mem_fanout: self.memgraph.fanout,
            ..SearchConfig::default()
        }
    }

    pub fn cache_budget(&self, n: usize) -> usize {
        self.cache.budget.unwrap_or_else(|| (n as f64 * 0.001).ceil() as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse_and_cli_overrides_win() {
        let mut cfg = BenchConfig::parse(
            r#"
            [build]
            r = 32
            page_size = 8192

            [search]
            l = [10, 20]
            configs = ["Baseline", "C5"]

            [run]
            reps = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.build.r, 32);
        assert_eq!(cfg.build.l_build, 125);
        assert_eq!(cfg.search.l, vec![10, 20]);
        cfg.apply(Overrides {
            r: Some(16),
            reps: Some(5),
            ..Overrides::default()
        });
        assert_eq!((cfg.build.r, cfg.run.reps, cfg.build.page_size), (16, 5, 8192));
        cfg.validate().unwrap();
        assert_eq!(BenchConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(BenchConfig::parse("[build]\nbogus = 1").is_err());
        let mut cfg = BenchConfig::default();
        cfg.run.reps = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = BenchConfig::default();
        cfg.search.configs = vec!["C9".into()];
        assert!(cfg.validate().is_err());
        let mut cfg = BenchConfig::default();
        cfg.search.l = vec![5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_cache_budget_is_a_tenth_of_a_percent() {
        assert_eq!(BenchConfig::default().cache_budget(100_000), 100);
        assert_eq!(BenchConfig::default().cache_budget(10), 1);
    }
}
