//! Named ablation arms and their toggle sets.

use pageann::search::SearchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Toggles {
    pub pq: bool,
    pub cache: bool,
    pub memgraph: bool,
    pub shuffle: bool,
    pub dynamic_width: bool,
    pub pipeline: bool,
    pub page_search: bool,
}

const BASE: Toggles = Toggles {
    pq: true,
    cache: false,
    memgraph: false,
    shuffle: false,
    dynamic_width: false,
    pipeline: false,
    page_search: false,
};

const fn with(
    cache: bool,
    memgraph: bool,
    shuffle: bool,
    dynamic_width: bool,
    pipeline: bool,
    page_search: bool,
) -> Toggles {
    Toggles {
        cache,
        memgraph,
        shuffle,
        dynamic_width,
        pipeline,
        page_search,
        ..BASE
    }
}

/// Registry order is the single-factor arms, then the combinations.
pub const NAMED: &[(&str, Toggles)] = &[
    ("Baseline", BASE),
    ("+Cache", with(true, false, false, false, false, false)),
    ("+MemGraph", with(false, true, false, false, false, false)),
    ("+PageShuffle", with(false, false, true, false, false, false)),
    ("+Pipeline", with(false, false, false, false, true, false)),
    ("+DynamicWidth", with(false, false, false, true, false, false)),
    ("+PageSearch", with(false, false, false, false, false, true)),
    ("C1", with(false, false, true, false, false, true)),
    ("C2", with(false, false, false, true, true, false)),
    ("C3", with(false, true, true, false, false, true)),
    ("C4", with(false, true, false, true, true, false)),
    ("C5", with(false, true, true, true, false, true)),
    ("MemG+PS", with(false, true, true, false, false, false)),
    ("FullPrecision", Toggles { pq: false, ..BASE }),
];

pub const ALIASES: &[(&str, &str)] = &[("OctopusANN", "C5")];

/// Cumulative steps from Baseline to C5, one technique added per step.
pub const BREAKDOWN_CHAIN: &[&str] = &["Baseline", "+MemGraph", "MemG+PS", "C3", "C5"];

pub fn canonical(name: &str) -> &str {
    ALIASES
        .iter()
        .find(|(a, _)| a.eq_ignore_ascii_case(name))
        .map(|(_, c)| *c)
        .unwrap_or(name)
}

pub fn lookup(name: &str) -> Option<Toggles> {
    let name = canonical(name);
    NAMED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, t)| *t)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    NAMED.iter().map(|(n, _)| *n)
}

impl Toggles {
    pub fn apply(&self, cfg: &mut SearchConfig) {
        cfg.use_pq = self.pq;
        cfg.use_cache = self.cache;
        cfg.use_memgraph = self.memgraph;
        cfg.use_shuffled_layout = self.shuffle;
        cfg.dynamic_width = self.dynamic_width;
        cfg.pipeline = self.pipeline;
        cfg.page_search = self.page_search;
    }

    pub fn union(self, o: Toggles) -> Toggles {
        Toggles {
            pq: self.pq || o.pq,
            cache: self.cache || o.cache,
            memgraph: self.memgraph || o.memgraph,
            shuffle: self.shuffle || o.shuffle,
            dynamic_width: self.dynamic_width || o.dynamic_width,
            pipeline: self.pipeline || o.pipeline,
            page_search: self.page_search || o.page_search,
        }
    }
}
