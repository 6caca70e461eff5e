//! Product quantization: per-subspace k-means codebooks, one-byte codes and
//! asymmetric (query vs. code) distance tables.
//!
//! For the cosine metric both training data and queries are normalized, so
//! table distances are squared Euclidean distances between unit vectors
//! (`2 - 2 cos`), which rank identically to cosine distance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{ElemKind, VectorDataset};
use crate::distance::{l2_squared, normalize, Metric};
use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: &[u8; 4] = b"OPQ1";
pub const CODES_MAGIC: &[u8; 4] = b"OPC1";
pub const DEFAULT_KMEANS_ITERS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    m: usize,
    k_c: usize,
    d: usize,
    elem: ElemKind,
    metric: Metric,
    sub_dims: Vec<usize>,
    offsets: Vec<usize>,
    /// Subspace `s` occupies `k_c * sub_dims[s]` values starting at
    /// `k_c * offsets[s]`.
    centroids: Vec<f32>,
}

/// Splits `d` dimensions into `m` contiguous runs whose lengths differ by at
/// most one; trailing subspaces are the shorter ones.
pub fn subspace_dims(d: usize, m: usize) -> Vec<usize> {
    let base = d / m;
    let extra = d % m;
    (0..m).map(|s| base + usize::from(s < extra)).collect()
}

/// Number of subspaces affordable under a code-memory budget with one byte
/// per subspace per vector.
pub fn m_for_budget(budget_bytes: u64, n: usize, d: usize) -> usize {
    ((budget_bytes / n.max(1) as u64) as usize).clamp(1, d)
}

/// Training-sample size used when no explicit sample is given.
pub fn default_sample_size(n: usize, k_c: usize) -> usize {
    n.min(256 * k_c)
}

impl PqCodebook {
    pub fn from_parts(
        d: usize,
        k_c: usize,
        sub_dims: Vec<usize>,
        centroids: Vec<f32>,
        elem: ElemKind,
        metric: Metric,
    ) -> Result<Self> {
        let m = sub_dims.len();
        if m == 0 || sub_dims.iter().sum::<usize>() != d || sub_dims.contains(&0) {
            return Err(Error::InvalidParameter(
                "subspace dims must be positive and sum to d".into(),
            ));
        }
        if k_c == 0 || k_c > 256 {
            return Err(Error::InvalidParameter(format!("k_c = {k_c} must be in 1..=256")));
        }
        if centroids.len() != k_c * d {
            return Err(Error::InvalidParameter("centroid block has the wrong length".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite centroid".into()));
        }
        let offsets = sub_dims
            .iter()
            .scan(0, |acc, &w| {
                let o = *acc;
                *acc += w;
                Some(o)
            })
            .collect();
        Ok(Self {
            m,
            k_c,
            d,
            elem,
            metric,
            sub_dims,
            offsets,
            centroids,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn sub_dims(&self) -> &[usize] {
        &self.sub_dims
    }

    pub fn centroid(&self, s: usize, c: usize) -> &[f32] {
        let w = self.sub_dims[s];
        let start = self.k_c * self.offsets[s] + c * w;
        &self.centroids[start..start + w]
    }

    fn subvector<'a>(&self, v: &'a [f32], s: usize) -> &'a [f32] {
        &v[self.offsets[s]..self.offsets[s] + self.sub_dims[s]]
    }

    fn prepare<'a>(&self, v: &'a [f32], scratch: &'a mut Vec<f32>) -> Result<&'a [f32]> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: v.len(),
            });
        }
        if self.metric == Metric::Cosine {
            scratch.clear();
            scratch.extend_from_slice(v);
            normalize(scratch);
            Ok(scratch)
        } else {
            Ok(v)
        }
    }

    /// Index of the nearest centroid per subspace (ties to the lowest index).
    pub fn encode(&self, v: &[f32]) -> Result<Vec<u8>> {
        let mut scratch = Vec::new();
        let v = self.prepare(v, &mut scratch)?;
        Ok((0..self.m)
            .map(|s| {
                let sub = self.subvector(v, s);
                let mut best = (f32::INFINITY, 0usize);
                for c in 0..self.k_c {
                    let dist = l2_squared(sub, self.centroid(s, c));
                    if dist < best.0 {
                        best = (dist, c);
                    }
                }
                best.1 as u8
            })
            .collect())
    }

    pub fn encode_all(&self, ds: &VectorDataset) -> Result<PqCodes> {
        if ds.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: ds.d(),
            });
        }
        let codes: Vec<Vec<u8>> = (0..ds.n())
            .into_par_iter()
            .map(|i| self.encode(ds.row(i)))
            .collect::<Result<_>>()?;
        Ok(PqCodes {
            m: self.m,
            codes: codes.concat(),
        })
    }

    pub fn reconstruct(&self, code: &[u8]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.d);
        for (s, &c) in code.iter().enumerate() {
            out.extend_from_slice(self.centroid(s, c as usize));
        }
        out
    }

    pub fn distance_table(&self, q: &[f32]) -> Result<DistanceTable> {
        let mut scratch = Vec::new();
        let q = self.prepare(q, &mut scratch)?;
        let mut table = Vec::with_capacity(self.m * self.k_c);
        for s in 0..self.m {
            let sub = self.subvector(q, s);
            for c in 0..self.k_c {
                table.push(l2_squared(sub, self.centroid(s, c)));
            }
        }
        Ok(DistanceTable {
            m: self.m,
            k_c: self.k_c,
            table,
        })
    }

    /// Mean squared reconstruction error over `ds`.
    pub fn quantization_error(&self, ds: &VectorDataset) -> Result<f64> {
        let mut total = 0.0f64;
        let mut scratch = Vec::new();
        for i in 0..ds.n() {
            let code = self.encode(ds.row(i))?;
            let v = self.prepare(ds.row(i), &mut scratch)?;
            total += l2_squared(v, &self.reconstruct(&code)) as f64;
        }
        Ok(total / ds.n() as f64)
    }

    pub fn memory_bytes(&self) -> usize {
        self.centroids.len() * 4
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODEBOOK_MAGIC)?;
        for v in [
            self.m as u32,
            self.k_c as u32,
            self.d as u32,
            self.elem.code(),
            self.metric.code(),
        ] {
            w.write_u32::<LittleEndian>(v)?;
        }
        for &c in &self.centroids {
            w.write_f32::<LittleEndian>(c)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, CODEBOOK_MAGIC, "pq codebook")?;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let k_c = r.read_u32::<LittleEndian>()? as usize;
        let d = r.read_u32::<LittleEndian>()? as usize;
        let elem = ElemKind::from_code(r.read_u32::<LittleEndian>()?).ok_or(Error::BadHeader {
            what: "pq codebook",
            detail: "unknown element kind".into(),
        })?;
        let metric = Metric::from_code(r.read_u32::<LittleEndian>()?).ok_or(Error::BadHeader {
            what: "pq codebook",
            detail: "unknown metric".into(),
        })?;
        if m == 0 || m > d {
            return Err(Error::BadHeader {
                what: "pq codebook",
                detail: format!("m = {m}, d = {d}"),
            });
        }
        let mut centroids = vec![0.0f32; k_c * d];
        r.read_f32_into::<LittleEndian>(&mut centroids)
            .map_err(|_| Error::Truncated(path.display().to_string()))?;
        Self::from_parts(d, k_c, subspace_dims(d, m), centroids, elem, metric)
    }
}

pub(crate) fn read_magic(r: &mut impl Read, magic: &[u8; 4], what: &'static str) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::BadHeader {
            what,
            detail: format!("bad magic {buf:?}"),
        });
    }
    Ok(())
}

/// `n` codes of `m` bytes each, stored contiguously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqCodes {
    m: usize,
    codes: Vec<u8>,
}

impl PqCodes {
    pub fn new(m: usize, codes: Vec<u8>) -> Result<Self> {
        if m == 0 || !codes.len().is_multiple_of(m) {
            return Err(Error::InvalidParameter("code block not a multiple of m".into()));
        }
        Ok(Self { m, codes })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.codes.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    #[inline]
    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i * self.m..(i + 1) * self.m]
    }

    pub fn memory_bytes(&self) -> usize {
        self.codes.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODES_MAGIC)?;
        w.write_u32::<LittleEndian>(self.len() as u32)?;
        w.write_u32::<LittleEndian>(self.m as u32)?;
        w.write_all(&self.codes)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        read_magic(&mut r, CODES_MAGIC, "pq codes")?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let m = r.read_u32::<LittleEndian>()? as usize;
        let mut codes = vec![0u8; n * m];
        r.read_exact(&mut codes)
            .map_err(|_| Error::Truncated(path.display().to_string()))?;
        Self::new(m, codes)
    }
}

/// Per-query table of squared distances from each query subvector to each
/// centroid of its subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    m: usize,
    k_c: usize,
    table: Vec<f32>,
}

impl DistanceTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k_c(&self) -> usize {
        self.k_c
    }

    pub fn entry(&self, s: usize, c: usize) -> f32 {
        self.table[s * self.k_c + c]
    }

    /// Unchecked lookup-and-sum; codes produced by the matching codebook are
    /// always in range.
    #[inline]
    pub fn distance(&self, code: &[u8]) -> f32 {
        debug_assert_eq!(code.len(), self.m);
        code.iter()
            .enumerate()
            .map(|(s, &c)| self.table[s * self.k_c + c as usize])
            .sum()
    }

    pub fn approx_distance(&self, code: &[u8]) -> Result<f32> {
        if code.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: code.len(),
            });
        }
        if let Some(&c) = code.iter().find(|&&c| c as usize >= self.k_c) {
            return Err(Error::InvalidParameter(format!("code byte {c} >= k_c = {}", self.k_c)));
        }
        Ok(self.distance(code))
    }
}

/// Trains one k-means codebook per subspace. Returns the codebook and the
/// mean squared reconstruction error after seeding and after each Lloyd
/// iteration.
pub fn train_codebook_traced(
    sample: &VectorDataset,
    m: usize,
    k_c: usize,
    iters: usize,
    seed: u64,
) -> Result<(PqCodebook, Vec<f64>)> {
    let d = sample.d();
    if m == 0 || m > d {
        return Err(Error::InvalidParameter(format!("m = {m} must be in 1..=d (d = {d})")));
    }
    if k_c == 0 || k_c > 256 {
        return Err(Error::InvalidParameter(format!("k_c = {k_c} must be in 1..=256")));
    }
    if k_c > sample.n() {
        return Err(Error::InvalidParameter(format!(
            "k_c = {k_c} exceeds sample size {}",
            sample.n()
        )));
    }

    let mut rows: Vec<f32> = sample.as_slice().to_vec();
    if sample.metric() == Metric::Cosine {
        rows.chunks_exact_mut(d).for_each(normalize);
    }
    let sub_dims = subspace_dims(d, m);
    let mut offsets = Vec::with_capacity(m);
    let mut acc = 0;
    for &w in &sub_dims {
        offsets.push(acc);
        acc += w;
    }

    let per_subspace: Vec<(Vec<f32>, Vec<f64>)> = (0..m)
        .into_par_iter()
        .map(|s| {
            let w = sub_dims[s];
            let pts: Vec<f32> = rows
                .chunks_exact(d)
                .flat_map(|r| r[offsets[s]..offsets[s] + w].iter().copied())
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            kmeans(&pts, w, k_c, iters, &mut rng)
        })
        .collect();

    let n = sample.n() as f64;
    let mut history = vec![0.0f64; iters + 1];
    let mut centroids = Vec::with_capacity(k_c * d);
    for (cents, errs) in per_subspace {
        centroids.extend_from_slice(&cents);
        for (h, e) in history.iter_mut().zip(errs) {
            *h += e / n;
        }
    }
    let cb = PqCodebook::from_parts(d, k_c, sub_dims, centroids, sample.elem(), sample.metric())?;
    Ok((cb, history))
}

pub fn train_codebook(sample: &VectorDataset, m: usize, k_c: usize, iters: usize, seed: u64) -> Result<PqCodebook> {
    train_codebook_traced(sample, m, k_c, iters, seed).map(|(cb, _)| cb)
}

/// Draws `min(n, 256 * k_c)` rows uniformly without replacement.
pub fn training_sample(base: &VectorDataset, k_c: usize, seed: u64) -> Result<VectorDataset> {
    let size = default_sample_size(base.n(), k_c);
    if size == base.n() {
        return Ok(base.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = index::sample(&mut rng, base.n(), size)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    ids.sort_unstable();
    base.subset(&ids)
}

fn nearest(p: &[f32], cents: &[f32], w: usize) -> (usize, f32) {
    let mut best = (0usize, f32::INFINITY);
    for (c, cent) in cents.chunks_exact(w).enumerate() {
        let dist = l2_squared(p, cent);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// k-means++ seeding followed by `iters` Lloyd updates. Returns the
/// centroids and the summed squared error after seeding and after every
/// update.
fn kmeans(pts: &[f32], w: usize, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f64>) {
    let n = pts.len() / w;
    let point = |i: usize| &pts[i * w..(i + 1) * w];

    let mut cents = Vec::with_capacity(k * w);
    let first = rng.random_range(0..n);
    cents.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| l2_squared(point(i), point(first)) as f64).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &wgt) in d2.iter().enumerate() {
                if target < wgt {
                    chosen = i;
                    break;
                }
                target -= wgt;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = cents.len();
        cents.extend_from_slice(point(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            let dist = l2_squared(point(i), &cents[start..start + w]) as f64;
            if dist < *slot {
                *slot = dist;
            }
        }
    }

    let mut assign = vec![0usize; n];
    let mut dists = vec![0.0f32; n];
    let assign_all = |cents: &[f32], assign: &mut [usize], dists: &mut [f32]| -> f64 {
        let mut err = 0.0f64;
        for i in 0..n {
            let (c, dist) = nearest(point(i), cents, w);
            assign[i] = c;
            dists[i] = dist;
            err += dist as f64;
        }
        err
    };

    let mut history = Vec::with_capacity(iters + 1);
    history.push(assign_all(&cents, &mut assign, &mut dists));
    for _ in 0..iters {
        let mut sums = vec![0.0f64; k * w];
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c * w..(c + 1) * w].iter_mut().zip(point(i)) {
                *s += v as f64;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..w {
                    cents[c * w + j] = (sums[c * w + j] / counts[c] as f64) as f32;
                }
            } else {
                // Reseed to the worst-served point not already used.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                dists[far] = 0.0;
                cents[c * w..(c + 1) * w].copy_from_slice(point(far));
            }
        }
        history.push(assign_all(&cents, &mut assign, &mut dists));
    }
    (cents, history)
}
