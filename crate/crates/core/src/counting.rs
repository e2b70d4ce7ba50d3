//! Stage 1: per-language global match counts.
//!
//! Shards are matched independently into private partial tables that merge
//! by element-wise sum. Final tables persist as one little-endian `u64`
//! array per language plus a JSON manifest, and load back through memory
//! maps so only the languages actually touched are paged in.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use crate::corpus::Shard;
use crate::matcher::AutomatonCache;
use crate::metadata::LanguageCode;
use crate::text::normalize;
use crate::{Error, Result};

pub const COUNTS_MANIFEST: &str = "counts.manifest.json";
pub const COUNTS_SUFFIX: &str = ".counts.u64le";
const COUNTS_FORMAT_VERSION: u32 = 1;

/// Anything that can hand out a language's count vector.
pub trait CountSource {
    fn languages(&self) -> Vec<LanguageCode>;
    fn counts(&self, lang: &LanguageCode) -> Result<Vec<u64>>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntryCountTable {
    per_lang: BTreeMap<LanguageCode, Vec<u64>>,
}

impl EntryCountTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero vectors for every `(lang, entry count)` pair.
    pub fn zeros<I>(sizes: I) -> Self
    where
        I: IntoIterator<Item = (LanguageCode, usize)>,
    {
        Self {
            per_lang: sizes.into_iter().map(|(l, n)| (l, vec![0; n])).collect(),
        }
    }

    pub fn from_vectors(per_lang: BTreeMap<LanguageCode, Vec<u64>>) -> Self {
        Self { per_lang }
    }

    pub fn get(&self, lang: &LanguageCode) -> Option<&[u64]> {
        self.per_lang.get(lang).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LanguageCode, &[u64])> {
        self.per_lang.iter().map(|(l, v)| (l, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.per_lang.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_lang.is_empty()
    }

    /// Σ over all languages and entries.
    pub fn total(&self) -> u64 {
        self.per_lang.values().flatten().sum()
    }

    fn add_matches(&mut self, lang: &LanguageCode, len: usize, ids: &[u32]) -> Result<()> {
        let v = self
            .per_lang
            .entry(lang.clone())
            .or_insert_with(|| vec![0; len]);
        for &id in ids {
            let slot = v.get_mut(id as usize).ok_or_else(|| {
                Error::Invariant(format!(
                    "entry id {id} out of range for `{lang}` ({len} entries)"
                ))
            })?;
            *slot += 1;
        }
        Ok(())
    }

    /// Adds `other` into `self`. Shared languages must have equal lengths.
    pub fn merge_from(&mut self, other: &EntryCountTable) -> Result<()> {
        for (lang, theirs) in &other.per_lang {
            match self.per_lang.get_mut(lang) {
                Some(ours) if ours.len() != theirs.len() => {
                    return Err(Error::validation(format!(
                        "count vectors for `{lang}` differ in length ({} vs {}); metadata drift",
                        ours.len(),
                        theirs.len()
                    )))
                }
                Some(ours) => ours.iter_mut().zip(theirs).for_each(|(a, b)| *a += b),
                None => {
                    self.per_lang.insert(lang.clone(), theirs.clone());
                }
            }
        }
        Ok(())
    }
}

impl CountSource for EntryCountTable {
    fn languages(&self) -> Vec<LanguageCode> {
        self.per_lang.keys().cloned().collect()
    }

    fn counts(&self, lang: &LanguageCode) -> Result<Vec<u64>> {
        self.per_lang
            .get(lang)
            .cloned()
            .ok_or_else(|| Error::validation(format!("no counts for language `{lang}`")))
    }
}

pub fn merge_counts(a: &EntryCountTable, b: &EntryCountTable) -> Result<EntryCountTable> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

/// Matches every record of `shard` against `M[record.lang]`, writing
/// `matched_entry_ids` in place, and returns the shard's partial counts.
/// Each (record, matched entry) pair adds exactly one.
pub fn count_shard(
    mut shard: Shard,
    known: &BTreeSet<LanguageCode>,
    cache: &AutomatonCache,
) -> Result<(Shard, EntryCountTable)> {
    let mut partial = EntryCountTable::new();
    for rec in &mut shard.records {
        let lang = rec.lang.as_ref().ok_or_else(|| {
            Error::validation(format!(
                "shard {}: record `{}` has no lang; run language identification first",
                shard.shard_id, rec.record_id
            ))
        })?;
        if !known.contains(lang) {
            return Err(Error::validation(format!(
                "shard {}: record `{}` has lang `{lang}` which is not a metadata key",
                shard.shard_id, rec.record_id
            )));
        }
        let automaton = cache.get_or_compile(lang)?;
        let ids = automaton.find_ids_normalized(&normalize(&rec.text));
        partial.add_matches(lang, automaton.pattern_count(), &ids)?;
        rec.matched_entry_ids = Some(ids);
    }
    Ok((shard, partial))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountFileInfo {
    pub lang: LanguageCode,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsManifest {
    pub format_version: u32,
    pub metadata_hash: String,
    pub total_records: u64,
    pub languages: Vec<CountFileInfo>,
}

/// Writes `<lang>.counts.u64le` per language and `counts.manifest.json`.
pub fn persist_counts(
    table: &EntryCountTable,
    dir: &Path,
    metadata_hash: &str,
    total_records: u64,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut languages = Vec::with_capacity(table.len());
    for (lang, counts) in table.iter() {
        let bytes: Vec<u8> = counts.iter().flat_map(|c| c.to_le_bytes()).collect();
        let path = dir.join(format!("{lang}{COUNTS_SUFFIX}"));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        languages.push(CountFileInfo {
            lang: lang.clone(),
            length: counts.len() as u64,
        });
    }
    let manifest = CountsManifest {
        format_version: COUNTS_FORMAT_VERSION,
        metadata_hash: metadata_hash.to_owned(),
        total_records,
        languages,
    };
    let path = dir.join(COUNTS_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// A read-only view of one language's persisted counts.
#[derive(Debug)]
pub struct MappedCounts {
    map: Option<Mmap>,
    len: usize,
}

impl MappedCounts {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<u64> {
        if i >= self.len {
            return None;
        }
        let bytes = &self.map.as_ref()?[i * 8..i * 8 + 8];
        Some(u64::from_le_bytes(bytes.try_into().unwrap()))
    }

    pub fn to_vec(&self) -> Vec<u64> {
        match &self.map {
            Some(m) => m
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            None => Vec::new(),
        }
    }
}

/// Persisted count directory; language files are mapped on first access.
#[derive(Debug)]
pub struct CountStore {
    dir: PathBuf,
    manifest: CountsManifest,
    maps: Mutex<HashMap<LanguageCode, Arc<MappedCounts>>>,
}

impl CountStore {
    /// Opens `dir`. When `expected_hash` is given it must equal the
    /// manifest's metadata hash.
    pub fn open(dir: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let path = dir.join(COUNTS_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CountsManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if manifest.format_version != COUNTS_FORMAT_VERSION {
            return Err(Error::validation(format!(
                "{}: unsupported count format version {}",
                path.display(),
                manifest.format_version
            )));
        }
        if let Some(h) = expected_hash {
            if h != manifest.metadata_hash {
                return Err(Error::validation(format!(
                    "{}: counts were built against metadata {} but {} was expected",
                    path.display(),
                    manifest.metadata_hash,
                    h
                )));
            }
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            maps: Mutex::new(HashMap::new()),
        })
    }

    pub fn manifest(&self) -> &CountsManifest {
        &self.manifest
    }

    pub fn metadata_hash(&self) -> &str {
        &self.manifest.metadata_hash
    }

    pub fn get(&self, lang: &LanguageCode) -> Result<Arc<MappedCounts>> {
        if let Some(m) = self.maps.lock().unwrap().get(lang) {
            return Ok(m.clone());
        }
        let info = self
            .manifest
            .languages
            .iter()
            .find(|l| &l.lang == lang)
            .ok_or_else(|| Error::validation(format!("no counts for language `{lang}`")))?;
        let path = self.dir.join(format!("{lang}{COUNTS_SUFFIX}"));
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(&path, e))?.len();
        if actual != info.length * 8 {
            return Err(Error::validation(format!(
                "{}: expected {} bytes for {} entries, found {actual}",
                path.display(),
                info.length * 8,
                info.length
            )));
        }
        let map = if actual == 0 {
            None
        } else {
            // SAFETY: count files are written once before any reader opens
            // them and are never modified afterwards.
            Some(unsafe { Mmap::map(&file) }.map_err(|e| Error::io(&path, e))?)
        };
        let mapped = Arc::new(MappedCounts {
            map,
            len: info.length as usize,
        });
        self.maps
            .lock()
            .unwrap()
            .insert(lang.clone(), mapped.clone());
        Ok(mapped)
    }
}

impl CountSource for CountStore {
    fn languages(&self) -> Vec<LanguageCode> {
        self.manifest
            .languages
            .iter()
            .map(|l| l.lang.clone())
            .collect()
    }

    fn counts(&self, lang: &LanguageCode) -> Result<Vec<u64>> {
        Ok(self.get(lang)?.to_vec())
    }
}

/// Loads the full table into memory.
pub fn load_counts(dir: &Path, expected_hash: Option<&str>) -> Result<EntryCountTable> {
    let store = CountStore::open(dir, expected_hash)?;
    let mut per_lang = BTreeMap::new();
    for lang in store.languages() {
        let v = store.counts(&lang)?;
        per_lang.insert(lang, v);
    }
    Ok(EntryCountTable { per_lang })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AltTextRecord;
    use crate::matcher::MatchMode;
    use crate::metadata::MetadataEntrySet;
    use rand::{Rng, SeedableRng};

    fn code(s: &str) -> LanguageCode {
        LanguageCode::new(s).unwrap()
    }

    fn setup() -> (BTreeSet<LanguageCode>, AutomatonCache) {
        let sets: BTreeMap<_, _> = [
            ("en", vec!["zero", "one", "two", "three", "four", "five"]),
            ("other", vec![]),
        ]
        .into_iter()
        .map(|(l, e)| (code(l), MetadataEntrySet::from_entries(code(l), e).unwrap()))
        .collect();
        let known = sets.keys().cloned().collect();
        (
            known,
            AutomatonCache::from_sets(Arc::new(sets), MatchMode::Substring),
        )
    }

    fn rec(id: &str, text: &str) -> AltTextRecord {
        AltTextRecord::new(id, "img", text).with_lang(code("en"))
    }

    #[test]
    fn single_record_two_entries() {
        let (known, cache) = setup();
        let (shard, counts) = count_shard(
            Shard::new(0, vec![rec("a", "two and five")]),
            &known,
            &cache,
        )
        .unwrap();
        assert_eq!(shard.records[0].matched_entry_ids, Some(vec![2, 5]));
        assert_eq!(counts.get(&code("en")).unwrap(), [0, 0, 1, 0, 0, 1]);
    }

    #[test]
    fn repeated_pattern_counts_once_per_record() {
        let (known, cache) = setup();
        let shard = Shard::new(0, vec![rec("a", "two two two"), rec("b", "two")]);
        let (_, counts) = count_shard(shard, &known, &cache).unwrap();
        assert_eq!(counts.get(&code("en")).unwrap()[2], 2);
    }

    #[test]
    fn unmatched_record_gets_empty_ids() {
        let (known, cache) = setup();
        let (shard, counts) = count_shard(
            Shard::new(0, vec![rec("a", "nothing here")]),
            &known,
            &cache,
        )
        .unwrap();
        assert_eq!(shard.records[0].matched_entry_ids, Some(vec![]));
        assert_eq!(counts.total(), 0);
    }

    #[test]
    fn unknown_or_missing_lang_is_rejected() {
        let (known, cache) = setup();
        let bad = AltTextRecord::new("a", "i", "one").with_lang(code("fr"));
        assert!(matches!(
            count_shard(Shard::new(0, vec![bad]), &known, &cache),
            Err(Error::Validation(_))
        ));
        let unset = AltTextRecord::new("a", "i", "one");
        assert!(matches!(
            count_shard(Shard::new(0, vec![unset]), &known, &cache),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn reannotation_is_idempotent() {
        let (known, cache) = setup();
        let shard = Shard::new(0, vec![rec("a", "one two"), rec("b", "three")]);
        let (once, c1) = count_shard(shard, &known, &cache).unwrap();
        let (twice, c2) = count_shard(once.clone(), &known, &cache).unwrap();
        assert_eq!(once, twice);
        assert_eq!(c1, c2);
    }

    fn table(items: &[(&str, &[u64])]) -> EntryCountTable {
        EntryCountTable::from_vectors(items.iter().map(|(l, v)| (code(l), v.to_vec())).collect())
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let a = table(&[("en", &[1, 2, 3]), ("de", &[4])]);
        let b = table(&[("en", &[0, 5, 1]), ("fr", &[7, 7])]);
        let zero = EntryCountTable::zeros([(code("en"), 3), (code("de"), 1)]);
        assert_eq!(merge_counts(&a, &zero).unwrap(), a);
        assert_eq!(merge_counts(&a, &b).unwrap(), merge_counts(&b, &a).unwrap());
        assert_eq!(
            merge_counts(&a, &b).unwrap().get(&code("en")).unwrap(),
            [1, 7, 4]
        );
    }

    #[test]
    fn merge_length_mismatch() {
        let a = table(&[("en", &[1, 2, 3])]);
        let b = table(&[("en", &[1, 2])]);
        assert!(matches!(merge_counts(&a, &b), Err(Error::Validation(_))));
    }

    #[test]
    fn sharded_equals_sequential() {
        let (known, cache) = setup();
        let words = ["zero", "one", "two", "three", "four", "five", "six"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let records: Vec<AltTextRecord> = (0..500)
            .map(|i| {
                let text: Vec<&str> = (0..rng.gen_range(0..4))
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect();
                rec(&format!("r{i}"), &text.join(" "))
            })
            .collect();
        let (_, sequential) = count_shard(Shard::new(0, records.clone()), &known, &cache).unwrap();
        let mut merged = EntryCountTable::new();
        for (i, chunk) in records.chunks(50).enumerate() {
            let (_, part) =
                count_shard(Shard::new(i as u32, chunk.to_vec()), &known, &cache).unwrap();
            merged.merge_from(&part).unwrap();
        }
        assert_eq!(merged, sequential);
    }

    #[test]
    fn persist_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = table(&[("en", &[1, 2, 3, u64::MAX]), ("other", &[])]);
        persist_counts(&t, dir.path(), "abc", 10).unwrap();
        assert_eq!(
            fs::metadata(dir.path().join("en.counts.u64le"))
                .unwrap()
                .len(),
            32
        );
        assert_eq!(load_counts(dir.path(), Some("abc")).unwrap(), t);
        assert!(matches!(
            load_counts(dir.path(), Some("xyz")),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn truncated_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        persist_counts(&table(&[("en", &[1, 2, 3])]), dir.path(), "h", 1).unwrap();
        let path = dir.path().join("en.counts.u64le");
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..20]).unwrap();
        let store = CountStore::open(dir.path(), None).unwrap();
        assert!(store.get(&code("en")).is_err());
    }

    #[test]
    fn random_access_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v: Vec<u64> = (0..5000).map(|_| rng.gen_range(0..1_000_000)).collect();
        persist_counts(&table(&[("en", &v)]), dir.path(), "h", 0).unwrap();
        let store = CountStore::open(dir.path(), None).unwrap();
        let mapped = store.get(&code("en")).unwrap();
        assert_eq!(mapped.len(), v.len());
        for _ in 0..1000 {
            let i = rng.gen_range(0..v.len());
            assert_eq!(mapped.get(i), Some(v[i]));
        }
        assert_eq!(mapped.get(v.len()), None);
    }
}
