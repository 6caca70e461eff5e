//! Page-granular reads over a packed index: synchronous `pread`, a bounded
//! submit/poll batch backed by a worker pool, and I/O accounting.

use std::alloc::{self, Layout};
use std::fs::{File, OpenOptions};
use std::ops::{Deref, DerefMut};
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::error::{Error, Result};
use crate::layout::DiskMeta;

const ALIGN: usize = 4096;

/// Latency buckets: `[0, 2)`, `[2, 4)`, ... microseconds, the last bucket
/// collecting everything from 16 ms up.
pub const LATENCY_BUCKETS: usize = 15;

/// Zero-initialized heap buffer aligned for direct I/O.
pub struct AlignedBuf {
    ptr: *mut u8,
    len: usize,
}

unsafe impl Send for AlignedBuf {}
unsafe impl Sync for AlignedBuf {}

impl AlignedBuf {
    pub fn new(len: usize) -> Self {
        assert!(len > 0);
        let layout = Layout::from_size_align(len, ALIGN).expect("valid layout");
        // SAFETY: the layout has non-zero size.
        let ptr = unsafe { alloc::alloc_zeroed(layout) };
        if ptr.is_null() {
            alloc::handle_alloc_error(layout);
        }
        Self { ptr, len }
    }
}

impl Deref for AlignedBuf {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        // SAFETY: `ptr` owns `len` initialized bytes.
        unsafe { std::slice::from_raw_parts(self.ptr, self.len) }
    }
}

impl DerefMut for AlignedBuf {
    fn deref_mut(&mut self) -> &mut [u8] {
        // SAFETY: as above, and `&mut self` guarantees exclusivity.
        unsafe { std::slice::from_raw_parts_mut(self.ptr, self.len) }
    }
}

impl Drop for AlignedBuf {
    fn drop(&mut self) {
        let layout = Layout::from_size_align(self.len, ALIGN).expect("valid layout");
        // SAFETY: allocated in `new` with the same layout.
        unsafe { alloc::dealloc(self.ptr, layout) }
    }
}

impl std::fmt::Debug for AlignedBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AlignedBuf({} bytes)", self.len)
    }
}

/// Counter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct IoStats {
    pub pages: u64,
    pub bytes: u64,
    /// Sum of per-read latencies.
    pub busy: Duration,
    /// Time since the reader was opened or last reset.
    pub elapsed: Duration,
    pub latency_hist: [u64; LATENCY_BUCKETS],
}

impl IoStats {
    /// Bytes per second over `elapsed`.
    pub fn bandwidth(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.bytes as f64 / s
        } else {
            0.0
        }
    }

    pub fn iops(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.pages as f64 / s
        } else {
            0.0
        }
    }
}

pub fn latency_bucket(micros: u64) -> usize {
    if micros < 2 {
        0
    } else {
        ((63 - micros.leading_zeros()) as usize).min(LATENCY_BUCKETS - 1)
    }
}

/// Reads data pages of one index file.
#[derive(Debug)]
pub struct PageReader {
    file: File,
    direct: bool,
    page_size: usize,
    num_pages: usize,
    pages: AtomicU64,
    busy_ns: AtomicU64,
    hist: [AtomicU64; LATENCY_BUCKETS],
    epoch: Mutex<Instant>,
}

impl PageReader {
    /// Opens the file backing `meta`. With `direct` the OS page cache is
    /// bypassed; filesystems that refuse it yield
    /// [`Error::DirectIoUnsupported`].
    pub fn open(path: &Path, meta: &DiskMeta, direct: bool) -> Result<Self> {
        let mut opts = OpenOptions::new();
        opts.read(true);
        if direct {
            opts.custom_flags(libc::O_DIRECT);
        }
        let file = opts.open(path).map_err(|e| match e.raw_os_error() {
            Some(libc::EINVAL) if direct => Error::DirectIoUnsupported(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        let reader = Self {
            file,
            direct,
            page_size: meta.page_size,
            num_pages: meta.num_pages,
            pages: AtomicU64::new(0),
            busy_ns: AtomicU64::new(0),
            hist: Default::default(),
            epoch: Mutex::new(Instant::now()),
        };
        if direct {
            // Probe once: some filesystems accept the flag but fail the read.
            let mut probe = AlignedBuf::new(reader.page_size);
            reader
                .file
                .read_exact_at(&mut probe, 0)
                .map_err(|e| match e.raw_os_error() {
                    Some(libc::EINVAL) => Error::DirectIoUnsupported(path.display().to_string()),
                    _ => Error::Io(e),
                })?;
        }
        Ok(reader)
    }

    /// Opens with direct I/O, falling back to buffered reads with a warning
    /// when the filesystem does not support it.
    pub fn open_with_fallback(path: &Path, meta: &DiskMeta) -> Result<Self> {
        match Self::open(path, meta, true) {
            Err(Error::DirectIoUnsupported(p)) => {
                log::warn!(
                    "direct I/O unsupported on {p}; falling back to buffered reads, I/O timings will be optimistic"
                );
                Self::open(path, meta, false)
            }
            other => other,
        }
    }

    pub fn is_direct(&self) -> bool {
        self.direct
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn num_pages(&self) -> usize {
        self.num_pages
    }

    /// Reads data page `page` into `buf` (exactly `P` bytes).
    pub fn read_page_into(&self, page: u32, buf: &mut AlignedBuf) -> Result<()> {
        if page as usize >= self.num_pages {
            return Err(Error::PageOutOfRange {
                page,
                count: self.num_pages as u32,
            });
        }
        assert_eq!(buf.len(), self.page_size);
        let offset = (page as u64 + 1) * self.page_size as u64;
        let start = Instant::now();
        let mut done = 0;
        while done < buf.len() {
            let n = self.file.read_at(&mut buf[done..], offset + done as u64)?;
            if n == 0 {
                return Err(Error::Truncated(format!("short read of page {page}")));
            }
            done += n;
        }
        let ns = start.elapsed().as_nanos() as u64;
        self.pages.fetch_add(1, Ordering::Relaxed);
        self.busy_ns.fetch_add(ns, Ordering::Relaxed);
        self.hist[latency_bucket(ns / 1000)].fetch_add(1, Ordering::Relaxed);
        Ok(())
    }

    pub fn read_page_sync(&self, page: u32) -> Result<AlignedBuf> {
        let mut buf = AlignedBuf::new(self.page_size);
        self.read_page_into(page, &mut buf)?;
        Ok(buf)
    }

    pub fn io_stats(&self) -> IoStats {
        let pages = self.pages.load(Ordering::Relaxed);
        IoStats {
            pages,
            bytes: pages * self.page_size as u64,
            busy: Duration::from_nanos(self.busy_ns.load(Ordering::Relaxed)),
            elapsed: self.epoch.lock().unwrap().elapsed(),
            latency_hist: std::array::from_fn(|i| self.hist[i].load(Ordering::Relaxed)),
        }
    }

    pub fn reset_stats(&self) {
        self.pages.store(0, Ordering::Relaxed);
        self.busy_ns.store(0, Ordering::Relaxed);
        self.hist.iter().for_each(|h| h.store(0, Ordering::Relaxed));
        *self.epoch.lock().unwrap() = Instant::now();
    }
}

/// A finished read.
#[derive(Debug)]
pub struct Completion {
    pub page: u32,
    pub data: Result<AlignedBuf>,
}

struct Job {
    reader: Arc<PageReader>,
    page: u32,
    reply: Sender<Completion>,
}

/// Threads servicing reads for any number of batches.
pub struct IoPool {
    tx: Option<Sender<Job>>,
    workers: Vec<JoinHandle<()>>,
}

impl IoPool {
    pub fn new(threads: usize) -> Self {
        let (tx, rx) = unbounded::<Job>();
        let workers = (0..threads.max(1))
            .map(|i| {
                let rx = rx.clone();
                std::thread::Builder::new()
                    .name(format!("io-{i}"))
                    .spawn(move || {
                        for job in rx {
                            let data = job.reader.read_page_sync(job.page);
                            let _ = job.reply.send(Completion { page: job.page, data });
                        }
                    })
                    .expect("spawn io worker")
            })
            .collect();
        Self { tx: Some(tx), workers }
    }

    pub fn threads(&self) -> usize {
        self.workers.len()
    }
}

impl Drop for IoPool {
    fn drop(&mut self) {
        self.tx.take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl std::fmt::Debug for IoPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IoPool({} threads)", self.workers.len())
    }
}

/// Per-query set of outstanding reads, at most `max_depth` at a time.
pub struct IoBatch<'a> {
    pool: &'a IoPool,
    reader: Arc<PageReader>,
    max_depth: usize,
    in_flight: usize,
    tx: Sender<Completion>,
    rx: Receiver<Completion>,
}

impl<'a> IoBatch<'a> {
    pub fn new(pool: &'a IoPool, reader: Arc<PageReader>, max_depth: usize) -> Self {
        let (tx, rx) = unbounded();
        Self {
            pool,
            reader,
            max_depth: max_depth.max(1),
            in_flight: 0,
            tx,
            rx,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn set_max_depth(&mut self, depth: usize) {
        self.max_depth = depth.max(1);
    }

    /// Queues every page of `pages`, or none if that would exceed the depth.
    pub fn submit(&mut self, pages: &[u32]) -> Result<()> {
        if self.in_flight + pages.len() > self.max_depth {
            return Err(Error::BatchFull { depth: self.max_depth });
        }
        let sender = self.pool.tx.as_ref().expect("pool is running");
        for &page in pages {
            sender
                .send(Job {
                    reader: Arc::clone(&self.reader),
                    page,
                    reply: self.tx.clone(),
                })
                .expect("io workers alive");
            self.in_flight += 1;
        }
        Ok(())
    }

    /// Completions available now, without blocking.
    pub fn poll(&mut self) -> Vec<Completion> {
        let mut out = Vec::new();
        while let Ok(c) = self.rx.try_recv() {
            out.push(c);
        }
        self.in_flight -= out.len();
        out
    }

    /// Blocks for at least one completion when reads are outstanding.
    pub fn wait(&mut self) -> Vec<Completion> {
        if self.in_flight == 0 {
            return Vec::new();
        }
        let first = self.rx.recv().expect("sender held by batch");
        self.in_flight -= 1;
        let mut out = vec![first];
        out.extend(self.poll());
        out
    }

    /// Blocks until every outstanding read has completed.
    pub fn drain(&mut self) -> Vec<Completion> {
        let mut out = Vec::with_capacity(self.in_flight);
        while self.in_flight > 0 {
            out.extend(self.wait());
        }
        out
    }
}

impl Drop for IoBatch<'_> {
    fn drop(&mut self) {
        self.drain();
    }
}
