use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use pageann_bench::artifacts::{self, Artifacts};
use pageann_bench::report::cmd_report;
use pageann_bench::run::run_named;
use pageann_bench::{registry, BenchConfig, Overrides};

#[derive(Parser)]
#[command(name = "pageann-bench", version, about = "Build, run and report disk ANN ablations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the graph and the identity-layout disk index.
    Build,
    /// Train the PQ codebook and encode the base set.
    Pq,
    /// Reorder records for neighbour co-residency and pack the shuffled index.
    Shuffle,
    /// Build the sampled in-memory navigation graph.
    Memgraph,
    /// Populate the hop-order cache and report its size.
    Cache,
    /// Compute brute-force ground truth for the query set.
    Gt,
    /// Run one named configuration over the L sweep.
    Search,
    /// Run several named configurations (`all` for every ablation arm) and report.
    Sweep,
    /// Summarize raw logs into tables and plots.
    Report {
        /// Raw logs; defaults to every log under `<out>/runs`.
        logs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// fvecs, bvecs, ivecs, raw, raw-u8 or raw-i8.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    queries: Option<PathBuf>,
    /// Ground-truth ids (ivecs).
    #[arg(long, global = true)]
    gt: Option<PathBuf>,
    #[arg(long = "R", global = true)]
    r: Option<usize>,
    #[arg(long = "L-build", global = true)]
    l_build: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f32>,
    #[arg(long, global = true)]
    page_size: Option<usize>,
    #[arg(long, global = true)]
    pq_m: Option<usize>,
    #[arg(long, global = true)]
    pq_k: Option<usize>,
    #[arg(long, global = true)]
    mem_ratio: Option<f64>,
    #[arg(long, global = true)]
    cache_budget: Option<usize>,
    /// Comma-separated list sizes.
    #[arg(long = "L", global = true, value_delimiter = ',')]
    l: Option<Vec<usize>>,
    #[arg(long, global = true)]
    beam: Option<usize>,
    /// Comma-separated configuration names.
    #[arg(long, global = true, value_delimiter = ',')]
    config_name: Option<Vec<String>>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["on", "off"])]
    direct_io: Option<String>,
}

impl Common {
    fn resolve(self) -> Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p)?,
            None => BenchConfig::default(),
        };
        cfg.apply(Overrides {
            data: self.data,
            format: self.format,
            queries: self.queries,
            gt: self.gt,
            r: self.r,
            l_build: self.l_build,
            alpha: self.alpha,
            page_size: self.page_size,
            pq_m: self.pq_m,
            pq_k: self.pq_k,
            mem_ratio: self.mem_ratio,
            cache_budget: self.cache_budget,
            l: self.l,
            beam: self.beam,
            config_names: self.config_name,
            threads: self.threads,
            reps: self.reps,
            seed: self.seed,
            out: self.out,
            direct_io: self.direct_io.map(|v| v == "on"),
        });
        if cfg.search.configs.iter().any(|n| n.eq_ignore_ascii_case("all")) {
            cfg.search.configs = registry::NAMED.iter().take(12).map(|(n, _)| n.to_string()).collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = cli.common.resolve()?;
    let arts = Artifacts::new(&cfg.run.out);
    match cli.cmd {
        Cmd::Build => drop(artifacts::cmd_build(&cfg)?),
        Cmd::Pq => drop(artifacts::cmd_pq(&cfg)?),
        Cmd::Shuffle => drop(artifacts::cmd_shuffle(&cfg)?),
        Cmd::Memgraph => drop(artifacts::cmd_memgraph(&cfg)?),
        Cmd::Cache => drop(artifacts::cmd_cache(&cfg)?),
        Cmd::Gt => drop(artifacts::cmd_gt(&cfg)?),
        Cmd::Search => {
            if cfg.search.configs.len() != 1 {
                bail!("search runs one configuration; use sweep for several");
            }
            run_named(&cfg, &cfg.search.configs)?;
        }
        Cmd::Sweep => {
            let runs = run_named(&cfg, &cfg.search.configs)?;
            let logs: Vec<PathBuf> = runs
                .iter()
                .map(|r| arts.runs().join(format!("{}.jsonl", r.name)))
                .collect();
            cmd_report(&logs, &arts.dir.join("report"))?;
        }
        Cmd::Report { logs } => {
            let logs = if logs.is_empty() {
                let mut found: Vec<PathBuf> = std::fs::read_dir(arts.runs())?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                found.sort();
                found
            } else {
                logs
            };
            let files = cmd_report(&logs, &arts.dir.join("report"))?;
            for p in files.written {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
