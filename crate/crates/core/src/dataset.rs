//! Vector datasets, the `*vecs` file family, exact k-NN ground truth and
//! recall.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::distance::{Metric, Neighbor};
use crate::error::{Error, Result};

/// Element type of the stored vectors. Values are held in memory as `f32`
/// (8-bit integers are exactly representable); the kind decides the
/// on-disk encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    F32,
    U8,
    I8,
}

impl ElemKind {
    pub fn size(self) -> usize {
        match self {
            ElemKind::F32 => 4,
            ElemKind::U8 | ElemKind::I8 => 1,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            ElemKind::F32 => 0,
            ElemKind::U8 => 1,
            ElemKind::I8 => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ElemKind::F32),
            1 => Some(ElemKind::U8),
            2 => Some(ElemKind::I8),
            _ => None,
        }
    }

    /// Appends the encoding of `values` to `out`.
    pub fn encode_into(self, values: &[f32], out: &mut Vec<u8>) {
        match self {
            ElemKind::F32 => values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            ElemKind::U8 => out.extend(values.iter().map(|&v| v as u8)),
            ElemKind::I8 => out.extend(values.iter().map(|&v| v as i8 as u8)),
        }
    }

    /// Decodes `out.len()` elements from `bytes`.
    pub fn decode_into(self, bytes: &[u8], out: &mut [f32]) {
        match self {
            ElemKind::F32 => {
                for (o, c) in out.iter_mut().zip(bytes.chunks_exact(4)) {
                    *o = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                }
            }
            ElemKind::U8 => {
                for (o, &b) in out.iter_mut().zip(bytes) {
                    *o = b as f32;
                }
            }
            ElemKind::I8 => {
                for (o, &b) in out.iter_mut().zip(bytes) {
                    *o = b as i8 as f32;
                }
            }
        }
    }
}

/// Immutable `n x d` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    n: usize,
    d: usize,
    elem: ElemKind,
    metric: Metric,
    data: Vec<f32>,
}

impl VectorDataset {
    pub fn new(d: usize, elem: ElemKind, metric: Metric, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if data.is_empty() {
            return Err(Error::NoRecords("in-memory dataset".into()));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "data length {} is not a multiple of d = {d}",
                data.len()
            )));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            elem,
            metric,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], elem: ElemKind, metric: Metric) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() {
            return Err(Error::NoRecords("in-memory dataset".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatchInFile {
                    expected: d,
                    found: r.len(),
                    record: i,
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(d, elem, metric, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn elem(&self) -> ElemKind {
        self.elem
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn distance(&self, i: usize, q: &[f32]) -> f32 {
        self.metric.distance(self.row(i), q)
    }

    /// Rows `ids` copied into a new dataset of the same kind.
    pub fn subset(&self, ids: &[u32]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &id in ids {
            if id as usize >= self.n {
                return Err(Error::InvalidId { id, n: self.n });
            }
            data.extend_from_slice(self.row(id as usize));
        }
        Self::new(self.d, self.elem, self.metric, data)
    }

    /// Column means in `f64`.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0f64; self.d];
        for r in self.rows() {
            for (acc, &v) in c.iter_mut().zip(r) {
                *acc += v as f64;
            }
        }
        c.iter_mut().for_each(|v| *v /= self.n as f64);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VecFormat {
    Fvecs,
    Bvecs,
    Ivecs,
    /// `u32 n, u32 d` header followed by `n * d` elements of the given kind.
    Raw(ElemKind),
}

impl FromStr for VecFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fvecs" => Ok(VecFormat::Fvecs),
            "bvecs" => Ok(VecFormat::Bvecs),
            "ivecs" => Ok(VecFormat::Ivecs),
            "raw" | "raw-f32" => Ok(VecFormat::Raw(ElemKind::F32)),
            "raw-u8" => Ok(VecFormat::Raw(ElemKind::U8)),
            "raw-i8" => Ok(VecFormat::Raw(ElemKind::I8)),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for VecFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VecFormat::Fvecs => "fvecs",
            VecFormat::Bvecs => "bvecs",
            VecFormat::Ivecs => "ivecs",
            VecFormat::Raw(ElemKind::F32) => "raw",
            VecFormat::Raw(ElemKind::U8) => "raw-u8",
            VecFormat::Raw(ElemKind::I8) => "raw-i8",
        };
        f.write_str(s)
    }
}

impl VecFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "fbin" => Ok(VecFormat::Raw(ElemKind::F32)),
            "u8bin" => Ok(VecFormat::Raw(ElemKind::U8)),
            "i8bin" => Ok(VecFormat::Raw(ElemKind::I8)),
            other => other.parse(),
        }
    }
}

pub fn load_vectors(path: &Path, format: VecFormat) -> Result<VectorDataset> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_vectors(&bytes, format, &path.display().to_string())
}

/// Parses an in-memory image of a vector file. `name` is used in errors.
pub fn parse_vectors(bytes: &[u8], format: VecFormat, name: &str) -> Result<VectorDataset> {
    if bytes.is_empty() {
        return Err(Error::NoRecords(name.to_string()));
    }
    match format {
        VecFormat::Raw(elem) => {
            if bytes.len() < 8 {
                return Err(Error::Truncated(name.to_string()));
            }
            let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
            let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
            if n == 0 {
                return Err(Error::NoRecords(name.to_string()));
            }
            let body = &bytes[8..];
            if body.len() != n * d * elem.size() {
                return Err(Error::Truncated(name.to_string()));
            }
            let mut data = vec![0.0f32; n * d];
            elem.decode_into(body, &mut data);
            VectorDataset::new(d, elem, Metric::L2Squared, data)
        }
        _ => {
            let (elem_size, elem) = match format {
                VecFormat::Fvecs => (4, ElemKind::F32),
                VecFormat::Bvecs => (1, ElemKind::U8),
                _ => (4, ElemKind::F32),
            };
            let mut data = Vec::new();
            let mut pos = 0usize;
            let mut dim: Option<usize> = None;
            let mut record = 0usize;
            while pos < bytes.len() {
                if pos + 4 > bytes.len() {
                    return Err(Error::Truncated(name.to_string()));
                }
                let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
                if d <= 0 {
                    return Err(Error::BadHeader {
                        what: "vecs record",
                        detail: format!("non-positive dimension {d} at record {record}"),
                    });
                }
                let d = d as usize;
                match dim {
                    None => dim = Some(d),
                    Some(expected) if expected != d => {
                        return Err(Error::DimensionMismatchInFile {
                            expected,
                            found: d,
                            record,
                        })
                    }
                    _ => {}
                }
                pos += 4;
                let end = pos + d * elem_size;
                if end > bytes.len() {
                    return Err(Error::Truncated(name.to_string()));
                }
                let body = &bytes[pos..end];
                match format {
                    VecFormat::Ivecs => {
                        for c in body.chunks_exact(4) {
                            let v = i32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                            if v.unsigned_abs() > (1 << 24) {
                                return Err(Error::InvalidParameter(format!(
                                    "ivecs value {v} is not exactly representable as a vector element"
                                )));
                            }
                            data.push(v as f32);
                        }
                    }
                    _ => {
                        let start = data.len();
                        data.resize(start + d, 0.0);
                        elem.decode_into(body, &mut data[start..]);
                    }
                }
                pos = end;
                record += 1;
            }
            VectorDataset::new(dim.unwrap(), elem, Metric::L2Squared, data)
        }
    }
}

pub fn save_vectors(ds: &VectorDataset, path: &Path, format: VecFormat) -> Result<()> {
    let bytes = encode_vectors(ds, format)?;
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn encode_vectors(ds: &VectorDataset, format: VecFormat) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match format {
        VecFormat::Raw(elem) => {
            check_representable(ds, elem)?;
            out.write_u32::<LittleEndian>(ds.n() as u32)?;
            out.write_u32::<LittleEndian>(ds.d() as u32)?;
            elem.encode_into(ds.as_slice(), &mut out);
        }
        VecFormat::Fvecs | VecFormat::Bvecs | VecFormat::Ivecs => {
            let elem = match format {
                VecFormat::Bvecs => Some(ElemKind::U8),
                VecFormat::Fvecs => Some(ElemKind::F32),
                _ => None,
            };
            if let Some(elem) = elem {
                check_representable(ds, elem)?;
            }
            for r in ds.rows() {
                out.write_i32::<LittleEndian>(ds.d() as i32)?;
                match elem {
                    Some(e) => e.encode_into(r, &mut out),
                    None => {
                        for &v in r {
                            if v.fract() != 0.0 {
                                return Err(Error::InvalidParameter(format!("value {v} cannot be written as ivecs")));
                            }
                            out.write_i32::<LittleEndian>(v as i32)?;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_representable(ds: &VectorDataset, elem: ElemKind) -> Result<()> {
    let (lo, hi) = match elem {
        ElemKind::F32 => return Ok(()),
        ElemKind::U8 => (0.0, 255.0),
        ElemKind::I8 => (-128.0, 127.0),
    };
    if let Some(v) = ds.as_slice().iter().find(|v| v.fract() != 0.0 || **v < lo || **v > hi) {
        return Err(Error::InvalidParameter(format!(
            "value {v} does not fit element kind {elem:?}"
        )));
    }
    Ok(())
}

pub fn read_ivecs(path: &Path) -> Result<Vec<Vec<i32>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    loop {
        let d = match r.read_i32::<LittleEndian>() {
            Ok(d) => d,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if d < 0 {
            return Err(Error::BadHeader {
                what: "ivecs record",
                detail: format!("negative dimension {d}"),
            });
        }
        let mut row = vec![0i32; d as usize];
        r.read_i32_into::<LittleEndian>(&mut row)
            .map_err(|_| Error::Truncated(path.display().to_string()))?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::NoRecords(path.display().to_string()));
    }
    Ok(out)
}

pub fn write_ivecs(path: &Path, rows: &[Vec<i32>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        w.write_i32::<LittleEndian>(r.len() as i32)?;
        for &v in r {
            w.write_i32::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Exact k nearest neighbours of each query, ordered by `(distance, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<Vec<u32>>,
    pub dists: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn num_queries(&self) -> usize {
        self.ids.len()
    }

    pub fn save(&self, ids_path: &Path, dists_path: &Path) -> Result<()> {
        let ids: Vec<Vec<i32>> = self.ids.iter().map(|r| r.iter().map(|&v| v as i32).collect()).collect();
        write_ivecs(ids_path, &ids)?;
        let mut w = BufWriter::new(File::create(dists_path)?);
        for r in &self.dists {
            w.write_i32::<LittleEndian>(r.len() as i32)?;
            for &v in r {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(ids_path: &Path, dists_path: &Path) -> Result<Self> {
        let ids: Vec<Vec<u32>> = read_ivecs(ids_path)?
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as u32).collect())
            .collect();
        let dist_ds = load_vectors(dists_path, VecFormat::Fvecs)?;
        if dist_ds.n() != ids.len() || dist_ds.d() != ids[0].len() {
            return Err(Error::BadHeader {
                what: "ground truth",
                detail: "ids and distances disagree in shape".into(),
            });
        }
        let dists = dist_ds.rows().map(<[f32]>::to_vec).collect();
        Ok(Self { ids, dists })
    }

    /// Loads only the id file; distances are left empty.
    pub fn load_ids(ids_path: &Path) -> Result<Self> {
        let ids: Vec<Vec<u32>> = read_ivecs(ids_path)?
            .into_iter()
            .map(|r| r.into_iter().map(|v| v as u32).collect())
            .collect();
        let dists = ids.iter().map(|r| vec![f32::NAN; r.len()]).collect();
        Ok(Self { ids, dists })
    }
}

pub fn brute_force_knn(base: &VectorDataset, queries: &VectorDataset, k: usize) -> Result<GroundTruth> {
    if base.d() != queries.d() {
        return Err(Error::DimensionMismatch {
            expected: base.d(),
            got: queries.d(),
        });
    }
    if k > base.n() {
        return Err(Error::KTooLarge { k, n: base.n() });
    }
    let rows: Vec<Vec<Neighbor>> = (0..queries.n())
        .into_par_iter()
        .map(|qi| knn_one(base, queries.row(qi), k))
        .collect();
    let ids = rows.iter().map(|r| r.iter().map(|n| n.id).collect()).collect();
    let dists = rows.iter().map(|r| r.iter().map(|n| n.dist).collect()).collect();
    Ok(GroundTruth { ids, dists })
}

/// Exact k-NN of a single query (selection, then sort of the k survivors).
pub fn knn_one(base: &VectorDataset, q: &[f32], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = (0..base.n())
        .map(|i| Neighbor::new(i as u32, base.distance(i, q)))
        .collect();
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable(k - 1);
        all.truncate(k);
    }
    all.sort_unstable();
    all
}

/// Mean of `|S ∩ S*| / k` over queries, with `S` the first `k` result ids.
pub fn recall_at_k(results: &[Vec<u32>], truth: &GroundTruth, k: usize) -> Result<f64> {
    if results.len() != truth.ids.len() {
        return Err(Error::InvalidParameter(format!(
            "{} result lists for {} ground-truth queries",
            results.len(),
            truth.ids.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if results.is_empty() {
        return Err(Error::InvalidParameter("no queries".into()));
    }
    let mut total = 0usize;
    for (qi, (res, gt)) in results.iter().zip(&truth.ids).enumerate() {
        if res.len() < k {
            return Err(Error::ShortResult {
                query: qi,
                len: res.len(),
                k,
            });
        }
        if gt.len() < k {
            return Err(Error::InvalidParameter(format!(
                "ground truth for query {qi} has only {} ids",
                gt.len()
            )));
        }
        let truth_set = &gt[..k];
        let mut seen: Vec<u32> = Vec::with_capacity(k);
        for id in &res[..k] {
            if truth_set.contains(id) && !seen.contains(id) {
                seen.push(*id);
            }
        }
        total += seen.len();
    }
    Ok(total as f64 / (k * results.len()) as f64)
}

/// Isotropic Gaussian mixture: `clusters` centres drawn from
/// `N(0, spread^2)`, points scattered around them with unit variance.
pub fn gaussian_mixture(n: usize, d: usize, clusters: usize, spread: f32, seed: u64) -> VectorDataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    let centers: Vec<f32> = (0..clusters.max(1) * d)
        .map(|_| normal.sample(&mut rng) * spread)
        .collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.random_range(0..clusters.max(1));
        for j in 0..d {
            data.push(centers[c * d + j] + normal.sample(&mut rng));
        }
    }
    VectorDataset::new(d, ElemKind::F32, Metric::L2Squared, data).expect("n >= 1")
}

/// Gaussian mixture on a random `latent`-dimensional linear subspace of
/// `R^d`, plus isotropic noise of standard deviation `noise`. Centres
/// (`N(0, 9)` in latent space) and the projection depend only on
/// `model_seed`; sets drawn with different `sample_seed`s share one
/// distribution.
pub fn subspace_mixture(
    n: usize,
    d: usize,
    latent: usize,
    clusters: usize,
    noise: f32,
    model_seed: u64,
    sample_seed: u64,
) -> VectorDataset {
    use rand::Rng;
    let latent = latent.max(1);
    let clusters = clusters.max(1);
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    let mut model = ChaCha8Rng::seed_from_u64(model_seed);
    let centers: Vec<f32> = (0..clusters * latent)
        .map(|_| normal.sample(&mut model) * 3.0)
        .collect();
    let scale = 1.0 / (latent as f32).sqrt();
    let proj: Vec<f32> = (0..latent * d).map(|_| normal.sample(&mut model) * scale).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let mut z = vec![0.0f32; latent];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = centers[c * latent + k] + normal.sample(&mut rng);
        }
        for j in 0..d {
            let x: f32 = z.iter().enumerate().map(|(k, zk)| proj[k * d + j] * zk).sum();
            data.push(x + noise * normal.sample(&mut rng));
        }
    }
    VectorDataset::new(d, ElemKind::F32, Metric::L2Squared, data).expect("n >= 1")
}

/// Uniform vectors in `[0, 1)^d`.
pub fn uniform(n: usize, d: usize, seed: u64) -> VectorDataset {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.random::<f32>()).collect();
    VectorDataset::new(d, ElemKind::F32, Metric::L2Squared, data).expect("n >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> VectorDataset {
        VectorDataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0]], ElemKind::F32, Metric::L2Squared).unwrap()
    }

    #[test]
    fn two_fvecs_records() {
        let mut bytes = Vec::new();
        for r in 0..2 {
            bytes.extend_from_slice(&4i32.to_le_bytes());
            for j in 0..4 {
                bytes.extend_from_slice(&((r * 4 + j) as f32).to_le_bytes());
            }
        }
        let ds = parse_vectors(&bytes, VecFormat::Fvecs, "mem").unwrap();
        assert_eq!((ds.n(), ds.d(), ds.elem()), (2, 4, ElemKind::F32));
        assert_eq!(ds.row(1), &[4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_vectors(&[], VecFormat::Fvecs, "empty").unwrap_err();
        assert!(err.to_string().contains("no records"));
    }

    #[test]
    fn truncated_and_inconsistent_files_are_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(matches!(
            parse_vectors(&bytes, VecFormat::Fvecs, "t"),
            Err(Error::Truncated(_))
        ));
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.push(3);
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2]);
        assert!(matches!(
            parse_vectors(&bytes, VecFormat::Bvecs, "m"),
            Err(Error::DimensionMismatchInFile {
                expected: 1,
                found: 2,
                record: 1
            })
        ));
        assert!(matches!("xvecs".parse::<VecFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn nearest_by_inspection() {
        let q = VectorDataset::from_rows(&[vec![0.9]], ElemKind::F32, Metric::L2Squared).unwrap();
        let gt = brute_force_knn(&tiny(), &q, 1).unwrap();
        assert_eq!(gt.ids[0], vec![1]);
    }

    #[test]
    fn self_query_is_identity() {
        let base = tiny();
        let q = base.subset(&[2]).unwrap();
        let gt = brute_force_knn(&base, &q, 1).unwrap();
        assert_eq!(gt.ids[0], vec![2]);
        assert_eq!(gt.dists[0], vec![0.0]);
    }

    #[test]
    fn knn_errors() {
        let base = tiny();
        assert!(matches!(brute_force_knn(&base, &base, 4), Err(Error::KTooLarge { .. })));
        let q = VectorDataset::from_rows(&[vec![0.0, 1.0]], ElemKind::F32, Metric::L2Squared).unwrap();
        assert!(matches!(
            brute_force_knn(&base, &q, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let base = VectorDataset::from_rows(
            &[vec![1.0], vec![-1.0], vec![1.0], vec![5.0]],
            ElemKind::F32,
            Metric::L2Squared,
        )
        .unwrap();
        let q = VectorDataset::from_rows(&[vec![0.0]], ElemKind::F32, Metric::L2Squared).unwrap();
        let gt = brute_force_knn(&base, &q, 3).unwrap();
        assert_eq!(gt.ids[0], vec![0, 1, 2]);
    }

    #[test]
    fn recall_cases() {
        let truth = GroundTruth {
            ids: vec![(0..10).collect()],
            dists: vec![vec![0.0; 10]],
        };
        assert_eq!(recall_at_k(&[(0..10).collect()], &truth, 10).unwrap(), 1.0);
        let mut nine: Vec<u32> = (0..9).collect();
        nine.push(99);
        assert!((recall_at_k(&[nine], &truth, 10).unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(
            recall_at_k(&[vec![1, 2]], &truth, 10),
            Err(Error::ShortResult { .. })
        ));
    }

    #[test]
    fn byte_vectors_keep_their_kind() {
        let ds =
            VectorDataset::from_rows(&[vec![0.0, 255.0], vec![7.0, 9.0]], ElemKind::U8, Metric::L2Squared).unwrap();
        let bytes = encode_vectors(&ds, VecFormat::Bvecs).unwrap();
        let back = parse_vectors(&bytes, VecFormat::Bvecs, "b").unwrap();
        assert_eq!(back, ds);
        let neg = VectorDataset::from_rows(&[vec![-1.0]], ElemKind::I8, Metric::L2Squared).unwrap();
        assert!(encode_vectors(&neg, VecFormat::Bvecs).is_err());
        let raw = encode_vectors(&neg, VecFormat::Raw(ElemKind::I8)).unwrap();
        assert_eq!(parse_vectors(&raw, VecFormat::Raw(ElemKind::I8), "r").unwrap(), neg);
    }
}
