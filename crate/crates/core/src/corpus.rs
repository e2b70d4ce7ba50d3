//! Record types and newline-delimited JSON shard I/O.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::metadata::LanguageCode;
use crate::{Error, Result};

/// One image-text pair. Images are referenced, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltTextRecord {
    pub record_id: String,
    pub image_ref: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<LanguageCode>,
    /// Sorted, deduplicated entry indices into `M[lang]`; unset before matching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_entry_ids: Option<Vec<u32>>,
    /// Fields this crate does not interpret, carried through untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AltTextRecord {
    pub fn new(
        record_id: impl Into<String>,
        image_ref: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            record_id: record_id.into(),
            image_ref: image_ref.into(),
            text: text.into(),
            lang: None,
            matched_entry_ids: None,
            extra: Map::new(),
        }
    }

    pub fn with_lang(mut self, lang: LanguageCode) -> Self {
        self.lang = Some(lang);
        self
    }

    pub fn with_matches(mut self, ids: Vec<u32>) -> Self {
        self.matched_entry_ids = Some(ids);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Shard {
    pub shard_id: u32,
    pub records: Vec<AltTextRecord>,
}

impl Shard {
    pub fn new(shard_id: u32, records: Vec<AltTextRecord>) -> Self {
        Self { shard_id, records }
    }
}

/// A member of the curated set, with the draw that admitted it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedRecord {
    #[serde(flatten)]
    pub record: AltTextRecord,
    pub selected_by_entry: u32,
    pub sample_draw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShardFormat {
    #[default]
    Jsonl,
}

/// Reads one JSONL shard. Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_shard(path: &Path, shard_id: u32, format: ShardFormat) -> Result<Shard> {
    match format {
        ShardFormat::Jsonl => {}
    }
    let records: Vec<AltTextRecord> = read_jsonl(path)?;
    validate_records(path, &records)?;
    Ok(Shard::new(shard_id, records))
}

fn validate_records(path: &Path, records: &[AltTextRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        if !seen.insert(rec.record_id.as_str()) {
            return Err(Error::validation(format!(
                "{}: duplicate record_id `{}` (record {})",
                path.display(),
                rec.record_id,
                i + 1
            )));
        }
        if let Some(ids) = &rec.matched_entry_ids {
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation(format!(
                    "{}: record `{}` has unsorted or duplicate matched_entry_ids",
                    path.display(),
                    rec.record_id
                )));
            }
        }
    }
    Ok(())
}

pub fn write_shard(shard: &Shard, path: &Path) -> Result<()> {
    write_jsonl(path, &shard.records)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// All `*.jsonl` files in `dir`, sorted by file name. The sorted position is
/// the shard id, so ids do not depend on directory listing order.
pub fn list_shards(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "jsonl") {
            paths.push(path);
        }
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(paths)
}
