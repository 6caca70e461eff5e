use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("no records in {0}")]
    NoRecords(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("inconsistent record dimension: expected {expected}, found {found} at record {record}")]
    DimensionMismatchInFile {
        expected: usize,
        found: usize,
        record: usize,
    },

    #[error("unknown format tag {0:?}")]
    UnknownFormat(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("k = {k} exceeds dataset size n = {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("result list for query {query} has {len} ids, fewer than k = {k}")]
    ShortResult { query: usize, len: usize, k: usize },

    #[error("bad file header in {what}: {detail}")]
    BadHeader { what: &'static str, detail: String },

    #[error("record size {record_size} B exceeds page size {page_size} B; use a larger page size (e.g. {suggested})")]
    RecordTooLarge {
        record_size: usize,
        page_size: usize,
        suggested: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid vertex id {id} (n = {n})")]
    InvalidId { id: u32, n: usize },

    #[error("page {page} out of range (page count {count})")]
    PageOutOfRange { page: u32, count: u32 },

    #[error("io batch full: depth {depth}")]
    BatchFull { depth: usize },

    #[error("direct I/O not supported for {0}; rerun with direct I/O off")]
    DirectIoUnsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined: {0}")]
    Undefined(&'static str),
}
