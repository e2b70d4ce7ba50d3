use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{LanguageCode, MetadataEntrySet, SourceTags};
use crate::text::normalize;
use crate::{Error, Result};

pub const ENTRIES_SUFFIX: &str = ".entries.txt";
pub const META_SUFFIX: &str = ".entries.meta.csv";

/// Reads a one-entry-per-line lexicon file.
pub fn ingest_lexicon(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ingest_lexicon_bytes(&bytes).map_err(|e| match e {
        Error::Validation(m) => Error::validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Normalized, deduplicated lines in first-seen order; blank lines dropped.
pub fn ingest_lexicon_bytes(bytes: &[u8]) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        Error::validation(format!("invalid UTF-8 at byte offset {}", e.valid_up_to()))
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let norm = normalize(line);
        if !norm.is_empty() && seen.insert(norm.clone()) {
            out.push(norm);
        }
    }
    Ok(out)
}

/// Writes `<lang>.entries.txt` (line number = entry index) and
/// `<lang>.entries.meta.csv` (a `#lang=..,count=..` line, then
/// `entry_index,source_tags` rows).
pub fn write_entry_set(set: &MetadataEntrySet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = String::new();
    for e in set.entries() {
        entries.push_str(e);
        entries.push('\n');
    }
    let path = dir.join(format!("{}{ENTRIES_SUFFIX}", set.lang));
    fs::write(&path, entries).map_err(|e| Error::io(&path, e))?;

    let mut meta = Vec::new();
    writeln!(meta, "#lang={},count={}", set.lang, set.len()).unwrap();
    writeln!(meta, "entry_index,source_tags").unwrap();
    for (i, tags) in set.source_tags().iter().enumerate() {
        writeln!(meta, "{i},{tags}").unwrap();
    }
    let path = dir.join(format!("{}{META_SUFFIX}", set.lang));
    fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

pub fn read_entry_set(dir: &Path, lang: &LanguageCode) -> Result<MetadataEntrySet> {
    let path = dir.join(format!("{lang}{ENTRIES_SUFFIX}"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<String> = text.lines().map(str::to_owned).collect();

    let meta_path = dir.join(format!("{lang}{META_SUFFIX}"));
    let tags = if meta_path.exists() {
        read_tags(&meta_path, entries.len())?
    } else {
        vec![SourceTags::empty(); entries.len()]
    };
    MetadataEntrySet::new(lang.clone(), entries, tags)
}

fn read_tags(path: &Path, expected: usize) -> Result<Vec<SourceTags>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tags = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line == "entry_index,source_tags" || line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (idx, tag) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `entry_index,source_tags`".into()))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(format!("bad index `{idx}`")))?;
        if idx != tags.len() {
            return Err(parse_err(format!(
                "expected index {}, found {idx}",
                tags.len()
            )));
        }
        tags.push(SourceTags::parse(tag).map_err(|e| parse_err(e.to_string()))?);
    }
    if tags.len() != expected {
        return Err(Error::validation(format!(
            "{}: {} tag rows for {expected} entries",
            path.display(),
            tags.len()
        )));
    }
    Ok(tags)
}

/// Loads every `<lang>.entries.txt` in `dir`.
pub fn read_catalog(dir: &Path) -> Result<BTreeMap<LanguageCode, MetadataEntrySet>> {
    let mut catalog = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(lang) = name.to_str().and_then(|n| n.strip_suffix(ENTRIES_SUFFIX)) else {
            continue;
        };
        let lang = LanguageCode::new(lang)?;
        let set = read_entry_set(dir, &lang)?;
        catalog.insert(lang, set);
    }
    Ok(catalog)
}
