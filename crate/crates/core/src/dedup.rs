//! Benchmark-overlap removal with 64-bit sign hashes.
//!
//! Embeddings come from an external similarity model. A seeded 64×d
//! standard-normal matrix projects each one to 64 values, and the sign of
//! each projection becomes one hash bit.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::CuratedRecord;
use crate::{Error, Result};

pub const HASH_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hash64(pub u64);

impl Hash64 {
    pub fn hamming(self, other: Hash64) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub record_id: String,
    pub vector: Vec<f32>,
}

/// Row-major 64×d projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    dim: usize,
    rows: Vec<f64>,
}

impl Projection {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// The 64 raw projections of `v`.
    pub fn project(&self, v: &[f32]) -> Result<[f64; HASH_BITS]> {
        if v.len() != self.dim {
            return Err(Error::validation(format!(
                "embedding has dimension {}, projection expects {}",
                v.len(),
                self.dim
            )));
        }
        let mut out = [0.0; HASH_BITS];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, &b)| a * b as f64).sum();
        }
        Ok(out)
    }
}

pub fn build_projection(dim: usize, seed: u64) -> Result<Projection> {
    if dim == 0 {
        return Err(Error::validation("projection dimension must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..HASH_BITS * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(Projection { dim, rows })
}

/// Bit `i` is set iff projection `i` is `>= 0`.
pub fn sign_hash(v: &[f32], projection: &Projection) -> Result<Hash64> {
    let proj = projection.project(v)?;
    Ok(Hash64(
        proj.iter()
            .enumerate()
            .filter(|(_, x)| **x >= 0.0)
            .fold(0u64, |acc, (i, _)| acc | (1 << i)),
    ))
}

/// Benchmark hashes with an exact-match set and a scan list for radius > 0.
#[derive(Debug, Clone, Default)]
pub struct BenchmarkIndex {
    exact: HashSet<Hash64>,
    all: Vec<Hash64>,
}

impl BenchmarkIndex {
    pub fn new(hashes: impl IntoIterator<Item = Hash64>) -> Self {
        let exact: HashSet<Hash64> = hashes.into_iter().collect();
        let mut all: Vec<Hash64> = exact.iter().copied().collect();
        all.sort_unstable();
        Self { exact, all }
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn within(&self, h: Hash64, radius: u32) -> bool {
        if radius == 0 {
            self.exact.contains(&h)
        } else {
            self.exact.contains(&h) || self.all.iter().any(|b| b.hamming(h) <= radius)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DedupOutcome {
    pub kept: Vec<CuratedRecord>,
    pub removed: usize,
    /// Records passed through because no hash was supplied for them.
    pub unhashed: usize,
}

/// Drops records whose hash lies within `radius` bits of any benchmark hash.
pub fn dedup_against_benchmark(
    curated: Vec<CuratedRecord>,
    hashes: &HashMap<String, Hash64>,
    benchmark: &BenchmarkIndex,
    radius: u32,
) -> DedupOutcome {
    let mut out = DedupOutcome::default();
    for rec in curated {
        match hashes.get(&rec.record.record_id) {
            Some(&h) if benchmark.within(h, radius) => out.removed += 1,
            Some(_) => out.kept.push(rec),
            None => {
                out.unhashed += 1;
                out.kept.push(rec);
            }
        }
    }
    out
}

/// Set difference against an externally produced exclusion list (for
/// example, safety or face-detection hits). Returns the number removed.
pub fn apply_exclusions(curated: &mut Vec<CuratedRecord>, excluded: &HashSet<String>) -> usize {
    let before = curated.len();
    curated.retain(|r| !excluded.contains(&r.record.record_id));
    before - curated.len()
}

fn ids_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids");
    PathBuf::from(s)
}

fn read_ids(path: &Path, expected: usize) -> Result<Vec<String>> {
    let p = ids_path(path);
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let ids: Vec<String> = text.lines().map(str::to_owned).collect();
    if ids.len() != expected {
        return Err(Error::validation(format!(
            "{}: {} ids for {expected} rows",
            p.display(),
            ids.len()
        )));
    }
    Ok(ids)
}

fn write_ids(path: &Path, ids: impl Iterator<Item = impl AsRef<str>>) -> Result<()> {
    let p = ids_path(path);
    let mut text = String::new();
    for id in ids {
        text.push_str(id.as_ref());
        text.push('\n');
    }
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}

/// Embedding file: `u64 d`, `u64 count`, then `count × d` little-endian
/// `f32`. Record ids live in the `<path>.ids` sidecar, one per line.
pub fn write_embeddings(path: &Path, records: &[EmbeddingRecord]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.vector.len());
    let mut buf = Vec::with_capacity(16 + records.len() * dim * 4);
    buf.extend_from_slice(&(dim as u64).to_le_bytes());
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        if r.vector.len() != dim {
            return Err(Error::validation(format!(
                "embedding `{}` has dimension {}, expected {dim}",
                r.record_id,
                r.vector.len()
            )));
        }
        for x in &r.vector {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    write_ids(path, records.iter().map(|r| &r.record_id))
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::validation(format!("{}: {m}", path.display()));
    if bytes.len() < 16 {
        return Err(bad("truncated header".into()));
    }
    let dim = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(bad(format!(
            "size does not match header (d={dim}, count={count})"
        )));
    }
    let ids = read_ids(path, count)?;
    let mut out = Vec::with_capacity(count);
    for (i, id) in ids.into_iter().enumerate() {
        let start = 16 + i * dim * 4;
        let vector: Vec<f32> = bytes[start..start + dim * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("embedding `{id}` has non-finite values")));
        }
        out.push(EmbeddingRecord {
            record_id: id,
            vector,
        });
    }
    Ok(out)
}

/// Hash file: one little-endian `u64` per record; ids in `<path>.ids` when given.
pub fn write_hash_file(path: &Path, hashes: &[Hash64], ids: Option<&[String]>) -> Result<()> {
    let buf: Vec<u8> = hashes.iter().flat_map(|h| h.0.to_le_bytes()).collect();
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    if let Some(ids) = ids {
        if ids.len() != hashes.len() {
            return Err(Error::validation("hash and id counts differ"));
        }
        write_ids(path, ids.iter())?;
    }
    Ok(())
}

pub fn read_hash_file(path: &Path) -> Result<Vec<Hash64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::validation(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| Hash64(u64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}

/// Hashes paired with their record ids from the sidecar.
pub fn read_keyed_hash_file(path: &Path) -> Result<HashMap<String, Hash64>> {
    let hashes = read_hash_file(path)?;
    let ids = read_ids(path, hashes.len())?;
    Ok(ids.into_iter().zip(hashes).collect())
}

pub fn hash_embeddings(
    records: &[EmbeddingRecord],
    projection: &Projection,
) -> Result<Vec<Hash64>> {
    use rayon::prelude::*;
    records
        .par_iter()
        .map(|r| sign_hash(&r.vector, projection))
        .collect()
}
