use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metadata::{
    catalog_hash, read_entry_set, write_entry_set, LanguageCode, MetadataEntrySet, SourceTags,
};
use crate::{Error, Result};

pub const METADATA_MANIFEST: &str = "metadata.manifest.json";

/// Groups of metadata languages keyed by the LID language that covers them.
/// Every LID language is a key (possibly with an empty group); metadata
/// languages no LID class covers land in `other_bucket`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LanguageMapping {
    pub lid_to_meta: BTreeMap<LanguageCode, BTreeSet<LanguageCode>>,
    pub other_bucket: BTreeSet<LanguageCode>,
}

impl LanguageMapping {
    /// Keys of `M`: every LID language plus `other`.
    pub fn keys(&self) -> BTreeSet<LanguageCode> {
        let mut keys: BTreeSet<_> = self.lid_to_meta.keys().cloned().collect();
        keys.insert(LanguageCode::other());
        keys
    }

    pub fn group(&self, key: &LanguageCode) -> Option<&BTreeSet<LanguageCode>> {
        if key.is_other() {
            Some(&self.other_bucket)
        } else {
            self.lid_to_meta.get(key)
        }
    }
}

/// Alias-first resolution: a metadata language goes to its alias when the
/// alias is an LID language, else to the same-named LID language, else to
/// `other`.
pub fn build_language_mapping(
    lid_langs: &BTreeSet<LanguageCode>,
    meta_langs: &BTreeSet<LanguageCode>,
    aliases: &BTreeMap<LanguageCode, LanguageCode>,
) -> LanguageMapping {
    let mut mapping = LanguageMapping {
        lid_to_meta: lid_langs
            .iter()
            .filter(|l| !l.is_other())
            .map(|l| (l.clone(), BTreeSet::new()))
            .collect(),
        other_bucket: BTreeSet::new(),
    };
    for meta in meta_langs {
        let target = aliases
            .get(meta)
            .filter(|a| mapping.lid_to_meta.contains_key(*a))
            .or_else(|| mapping.lid_to_meta.contains_key(meta).then_some(meta));
        match target {
            Some(lid) => {
                let lid = lid.clone();
                mapping
                    .lid_to_meta
                    .get_mut(&lid)
                    .unwrap()
                    .insert(meta.clone());
            }
            None => {
                mapping.other_bucket.insert(meta.clone());
            }
        }
    }
    mapping
}

/// Groupings implied by the special-language tokenizer table: wiki codes that
/// share a script family with a single LID class.
pub fn default_aliases() -> BTreeMap<LanguageCode, LanguageCode> {
    [("zh_classical", "zh"), ("zh_yue", "zh"), ("ryu", "ja")]
        .into_iter()
        .map(|(m, l)| (LanguageCode::new(m).unwrap(), LanguageCode::new(l).unwrap()))
        .collect()
}

/// CSV `meta_code,lid_code`; a `meta_code,lid_code` header line is allowed.
pub fn read_alias_table(path: &Path) -> Result<BTreeMap<LanguageCode, LanguageCode>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "meta_code,lid_code") {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (meta, lid) = line
            .split_once(',')
            .ok_or_else(|| err("expected `meta_code,lid_code`".into()))?;
        let meta = LanguageCode::new(meta.trim()).map_err(|e| err(e.to_string()))?;
        let lid = LanguageCode::new(lid.trim()).map_err(|e| err(e.to_string()))?;
        out.insert(meta, lid);
    }
    Ok(out)
}

fn merge_group<'a>(
    key: &LanguageCode,
    group: impl IntoIterator<Item = &'a LanguageCode>,
    catalog: &BTreeMap<LanguageCode, MetadataEntrySet>,
) -> Result<MetadataEntrySet> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut entries: Vec<String> = Vec::new();
    let mut tags: Vec<SourceTags> = Vec::new();
    for lang in group {
        let set = catalog.get(lang).ok_or_else(|| {
            Error::validation(format!("metadata catalog has no language `{lang}`"))
        })?;
        for (e, t) in set.entries().iter().zip(set.source_tags()) {
            match index.get(e.as_str()) {
                Some(&i) => tags[i].insert(*t),
                None => {
                    index.insert(e, entries.len());
                    entries.push(e.clone());
                    tags.push(*t);
                }
            }
        }
    }
    MetadataEntrySet::new(key.clone(), entries, tags)
}

/// Builds `M`: one entry set per LID language plus `other`. Groups are
/// concatenated in ascending language code then entry index, first
/// occurrence wins.
pub fn merge_metadata_by_mapping(
    catalog: &BTreeMap<LanguageCode, MetadataEntrySet>,
    mapping: &LanguageMapping,
) -> Result<BTreeMap<LanguageCode, MetadataEntrySet>> {
    let mut merged = BTreeMap::new();
    for (lid, group) in &mapping.lid_to_meta {
        merged.insert(lid.clone(), merge_group(lid, group, catalog)?);
    }
    let other = LanguageCode::other();
    merged.insert(
        other.clone(),
        merge_group(&other, &mapping.other_bucket, catalog)?,
    );
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLanguage {
    pub lang: LanguageCode,
    pub entries: usize,
    pub content_hash: String,
    pub group: BTreeSet<LanguageCode>,
}

/// Describes a merged metadata directory without loading the entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataManifest {
    pub metadata_hash: String,
    pub languages: Vec<ManifestLanguage>,
}

impl MetadataManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(METADATA_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path,
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn langs(&self) -> BTreeSet<LanguageCode> {
        self.languages.iter().map(|l| l.lang.clone()).collect()
    }

    pub fn language(&self, lang: &LanguageCode) -> Option<&ManifestLanguage> {
        self.languages.iter().find(|l| &l.lang == lang)
    }
}

/// The merged dictionary `M` together with the mapping that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedMetadata {
    pub sets: BTreeMap<LanguageCode, MetadataEntrySet>,
    pub mapping: LanguageMapping,
}

impl MergedMetadata {
    pub fn build(
        catalog: &BTreeMap<LanguageCode, MetadataEntrySet>,
        mapping: LanguageMapping,
    ) -> Result<Self> {
        let sets = merge_metadata_by_mapping(catalog, &mapping)?;
        Ok(Self { sets, mapping })
    }

    pub fn hash(&self) -> String {
        catalog_hash(&self.sets)
    }

    pub fn manifest(&self) -> MetadataManifest {
        MetadataManifest {
            metadata_hash: self.hash(),
            languages: self
                .sets
                .iter()
                .map(|(lang, set)| ManifestLanguage {
                    lang: lang.clone(),
                    entries: set.len(),
                    content_hash: set.content_hash(),
                    group: self.mapping.group(lang).cloned().unwrap_or_default(),
                })
                .collect(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for set in self.sets.values() {
            write_entry_set(set, dir)?;
        }
        let path = dir.join(METADATA_MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest = MetadataManifest::read(dir)?;
        let mut sets = BTreeMap::new();
        let mut mapping = LanguageMapping::default();
        for l in &manifest.languages {
            let set = read_entry_set(dir, &l.lang)?;
            if set.content_hash() != l.content_hash {
                return Err(Error::validation(format!(
                    "{}: entries for `{}` do not match the manifest hash",
                    dir.display(),
                    l.lang
                )));
            }
            if l.lang.is_other() {
                mapping.other_bucket = l.group.clone();
            } else {
                mapping.lid_to_meta.insert(l.lang.clone(), l.group.clone());
            }
            sets.insert(l.lang.clone(), set);
        }
        Ok(Self { sets, mapping })
    }
}
